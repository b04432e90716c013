#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace ceda {

using WarningSink = std::function<void(std::string_view)>;

/// Replaces the process-wide warning sink (default: stderr). Passing an
/// empty function restores the default. Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);

/// Emits one warning line. Safe to call from worker threads.
void warn(std::string_view message);

/// Collects warnings for the lifetime of the guard; used by tests and by the
/// CLI to put warnings into report manifests.
class WarningCapture {
public:
    WarningCapture();
    ~WarningCapture();
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    const std::vector<std::string>& messages() const { return messages_; }
    bool contains(std::string_view fragment) const;

private:
    std::vector<std::string> messages_;
    WarningSink previous_;
};

}  // namespace ceda
