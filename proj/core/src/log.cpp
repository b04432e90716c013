#include "ceda/log.hpp"

#include <iostream>
#include <mutex>

namespace ceda {
namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

WarningSink& current_sink() {
    static WarningSink sink;
    return sink;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(sink_mutex());
    WarningSink previous = std::move(current_sink());
    current_sink() = std::move(sink);
    return previous;
}

void warn(std::string_view message) {
    std::lock_guard lock(sink_mutex());
    if (current_sink()) {
        current_sink()(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

WarningCapture::WarningCapture() {
    previous_ = set_warning_sink([this](std::string_view m) { messages_.emplace_back(m); });
}

WarningCapture::~WarningCapture() { set_warning_sink(std::move(previous_)); }

bool WarningCapture::contains(std::string_view fragment) const {
    for (const auto& m : messages_) {
        if (m.find(fragment) != std::string::npos) return true;
    }
    return false;
}

}  // namespace ceda
