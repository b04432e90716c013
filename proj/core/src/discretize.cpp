#include "ceda/discretize.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ceda/csv.hpp"
#include "ceda/error.hpp"

namespace ceda {

std::string Binning::bin_label(int bin) const {
    const auto b = static_cast<std::size_t>(bin);
    const bool last = b + 1 == n_bins();
    return "[" + csv::format_double(edges[b]) + "," + csv::format_double(edges[b + 1]) + (last ? "]" : ")");
}

Binning build_histogram(std::span<const double> values, std::optional<std::size_t> target_bins, std::string feature) {
    std::vector<double> v;
    v.reserve(values.size());
    for (double x : values) {
        if (std::isnan(x)) continue;
        if (!std::isfinite(x)) throw_data("feature '" + feature + "' holds a non-finite value");
        v.push_back(x);
    }
    if (v.size() < 2) throw_data("feature '" + feature + "' has fewer than 2 values");
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) throw_data("degenerate feature '" + feature + "': all values are equal");

    const std::size_t n = v.size();
    std::size_t cells = target_bins.value_or(
        std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n)))) + 1));
    if (cells < 1) throw_config("bin count for '" + feature + "' must be >= 1");

    std::vector<double> raw(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i) {
        raw[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cells);
    }
    raw[cells] = hi;

    std::vector<std::size_t> raw_counts(cells, 0);
    for (double x : v) {
        auto it = std::upper_bound(raw.begin() + 1, raw.end() - 1, x);
        ++raw_counts[static_cast<std::size_t>(it - (raw.begin() + 1))];
    }

    Binning b;
    b.feature = std::move(feature);
    b.edges.push_back(lo);
    b.gap_flags.push_back(false);
    std::optional<std::size_t> previous;
    for (std::size_t i = 0; i < cells; ++i) {
        if (raw_counts[i] == 0) continue;
        if (previous) {
            if (*previous + 1 == i) {
                b.edges.push_back(raw[i]);
                b.gap_flags.push_back(false);
            } else {
                const double gap_lo = raw[*previous + 1];
                const double gap_hi = raw[i];
                b.edges.push_back(0.5 * (gap_lo + gap_hi));
                b.gap_flags.push_back(true);
                b.gaps.emplace_back(gap_lo, gap_hi);
            }
        }
        b.counts.push_back(raw_counts[i]);
        previous = i;
    }
    b.edges.push_back(hi);
    b.gap_flags.push_back(false);

    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    b.train_stats = {mean, std::sqrt(ss / static_cast<double>(n - 1)), lo, hi};
    return b;
}

BinAssignment categorize(const Binning& binning, double x) {
    if (!std::isfinite(x)) throw_data("cannot categorize a non-finite value of '" + binning.feature + "'");
    const std::size_t last = binning.n_bins() - 1;
    if (x < binning.edges.front()) return {0, true};
    if (x > binning.edges.back()) return {static_cast<int>(last), true};
    auto it = std::upper_bound(binning.edges.begin() + 1, binning.edges.end() - 1, x);
    return {static_cast<int>(it - (binning.edges.begin() + 1)), false};
}

nlohmann::json to_json(const Binning& binning) {
    nlohmann::json j;
    j["feature"] = binning.feature;
    j["edges"] = binning.edges;
    std::vector<bool> flags = binning.gap_flags;
    j["gap_flags"] = flags;
    nlohmann::json gaps = nlohmann::json::array();
    for (const auto& [lo, hi] : binning.gaps) gaps.push_back({lo, hi});
    j["gaps"] = gaps;
    j["counts"] = binning.counts;
    j["train_stats"] = {{"mean", binning.train_stats.mean},
                        {"sd", binning.train_stats.sd},
                        {"min", binning.train_stats.min},
                        {"max", binning.train_stats.max}};
    return j;
}

BinningSet build_binnings(const DataTable& table, std::span<const std::string> features,
                          const std::map<std::string, std::size_t>& bins, std::optional<std::size_t> default_bins) {
    BinningSet out;
    for (const auto& name : features) {
        const Column& col = table.column(name);
        if (col.kind != FeatureKind::continuous) continue;
        std::optional<std::size_t> target = default_bins;
        if (auto it = bins.find(name); it != bins.end()) target = it->second;
        out.emplace(name, build_histogram(col.values, target, name));
    }
    return out;
}

Categorization categorize_column(const DataTable& table, std::string_view feature, const BinningSet& binnings) {
    const Column& col = table.column(feature);
    Categorization c;
    c.feature = std::string(feature);
    c.codes.assign(table.n_rows(), -1);
    switch (col.kind) {
        case FeatureKind::categorical:
            c.names = col.levels;
            for (std::size_t r = 0; r < table.n_rows(); ++r) c.codes[r] = col.code(r);
            break;
        case FeatureKind::discrete: {
            std::set<double> distinct;
            for (double v : col.values) {
                if (!std::isnan(v)) distinct.insert(v);
            }
            std::vector<double> levels(distinct.begin(), distinct.end());
            for (double v : levels) c.names.push_back(csv::format_double(v));
            for (std::size_t r = 0; r < table.n_rows(); ++r) {
                if (col.missing(r)) continue;
                auto it = std::lower_bound(levels.begin(), levels.end(), col.values[r]);
                c.codes[r] = static_cast<int>(it - levels.begin());
            }
            break;
        }
        case FeatureKind::continuous: {
            auto it = binnings.find(c.feature);
            const Binning binning = it != binnings.end() ? it->second : build_histogram(col.values, std::nullopt, c.feature);
            for (std::size_t b = 0; b < binning.n_bins(); ++b) c.names.push_back(binning.bin_label(static_cast<int>(b)));
            for (std::size_t r = 0; r < table.n_rows(); ++r) {
                if (col.missing(r)) continue;
                c.codes[r] = categorize(binning, col.values[r]).bin;
            }
            break;
        }
    }
    return c;
}

}  // namespace ceda
