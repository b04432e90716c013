#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/dataset.hpp"

namespace ceda {

struct TrainStats {
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Categorization of one continuous feature.
///
/// Bin i covers [edges[i], edges[i+1]); the last bin is closed on the right.
/// Runs of empty histogram cells are not categories of their own: the two
/// occupied neighbours of such a run meet at the middle of the run, that
/// boundary gets gap_flags[i] = true, and the run's extent is kept in `gaps`.
struct Binning {
    std::string feature;
    std::vector<double> edges;
    std::vector<bool> gap_flags;  // one per edge; only interior edges can be true
    std::vector<std::pair<double, double>> gaps;
    std::vector<std::size_t> counts;
    TrainStats train_stats;

    std::size_t n_bins() const { return counts.size(); }
    /// "[lo,hi)" style label of a bin.
    std::string bin_label(int bin) const;
};

struct BinAssignment {
    int bin = 0;
    bool out_of_range = false;
};

/// Default cell count: max(3, ceil(log2 N) + 1) equal-width cells over
/// [min, max]. NaN values are ignored. Throws on fewer than two values or a
/// constant input ("degenerate feature").
Binning build_histogram(std::span<const double> values, std::optional<std::size_t> target_bins = std::nullopt,
                        std::string feature = {});

/// Bin of x; values outside [min, max] clamp to the end bins and set
/// out_of_range. Throws on non-finite x.
BinAssignment categorize(const Binning& binning, double x);

nlohmann::json to_json(const Binning& binning);

/// Binnings keyed by feature name.
using BinningSet = std::map<std::string, Binning>;

/// Builds binnings for the continuous columns among `features` using the
/// table's values. `bins` overrides the cell count per feature;
/// `default_bins` overrides it for all others.
BinningSet build_binnings(const DataTable& table, std::span<const std::string> features,
                          const std::map<std::string, std::size_t>& bins = {},
                          std::optional<std::size_t> default_bins = std::nullopt);

/// A column turned into integer categories: binned when continuous, one
/// category per distinct value when discrete, level codes when categorical.
/// Missing cells get code -1.
struct Categorization {
    std::string feature;
    std::vector<int> codes;
    std::vector<std::string> names;

    std::size_t n_categories() const { return names.size(); }
};

/// Continuous columns need an entry in `binnings`; when it is absent a
/// default binning is built from the column itself.
Categorization categorize_column(const DataTable& table, std::string_view feature, const BinningSet& binnings);

}  // namespace ceda
