#include "ceda/pmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>

#include "ceda/csv.hpp"
#include "ceda/error.hpp"
#include "ceda/log.hpp"
#include "ceda/parallel.hpp"

namespace ceda {

void CompetitionConfig::validate() const {
    if (k_star < 1) throw_config("competition.k_star must be >= 1");
    if (!(c_lower > 0.0 && c_lower <= 1.0 && c_upper >= 1.0)) {
        throw_config("competition thresholds must satisfy 0 < C_L <= 1 <= C_U");
    }
    if (!(dominant_fraction > 0.5 && dominant_fraction <= 1.0)) {
        throw_config("competition.dominant_fraction must lie in (0.5, 1]");
    }
    if (!(outlier_quantile > 0.0 && outlier_quantile <= 1.0)) {
        throw_config("competition.outlier_quantile must lie in (0, 1]");
    }
}

nlohmann::json to_json(const CompetitionConfig& cfg) {
    return {{"k_star", cfg.k_star},
            {"c_lower", cfg.c_lower},
            {"c_upper", cfg.c_upper},
            {"dominant_fraction", cfg.dominant_fraction},
            {"outlier_quantile", cfg.outlier_quantile},
            {"outlier_enabled", cfg.outlier_enabled}};
}

std::string_view to_string(BranchDecision decision) {
    switch (decision) {
        case BranchDecision::left: return "left";
        case BranchDecision::right: return "right";
        case BranchDecision::stop: return "stop";
        case BranchDecision::outlier: return "outlier";
    }
    return "unknown";
}

namespace {

/// Type-7 (linear interpolation) quantile of an ascending sample.
double sorted_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double median_of(std::vector<double> values) {
    const std::size_t n = values.size();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    const double upper = *mid;
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

double silverman_bandwidth(std::span<const double> sample) {
    const std::size_t n = sample.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (double v : sample) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : sample) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    double spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) spread = std::max(sd, iqr / 1.34);
    if (!(spread > 0.0)) return 0.0;
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

double log_kde(std::span<const double> sample, double h, double x) {
    if (sample.empty() || !(h > 0.0)) throw_computation("kernel density needs a sample and a positive bandwidth");
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double u = (x - sample[i]) / h;
        terms[i] = -0.5 * u * u;
        max_term = std::max(max_term, terms[i]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    return max_term + std::log(acc) - std::log(static_cast<double>(sample.size()) * h * std::sqrt(2.0 * std::numbers::pi));
}

// ---------------------------------------------------------- TreeClassifier

TreeClassifier::TreeClassifier(const LabeledDataset& train, std::vector<std::string> features, LabelTree tree,
                               CompetitionConfig config, bool zscore)
    : tree_(std::move(tree)), config_(config), features_(std::move(features)) {
    config_.validate();
    if (features_.empty()) throw_config("classifier needs at least one feature");
    if (tree_.n_labels() != train.n_labels()) throw_data("label tree does not match the training label space");

    scaler_ = zscore ? Standardizer::fit(train.table(), features_) : Standardizer::identity(features_);
    FeatureMatrix fm = extract_features(train.table(), features_, scaler_);
    if (fm.kept.size() < train.n_rows()) {
        warn("classifier: dropped " + std::to_string(train.n_rows() - fm.kept.size()) +
             " training row(s) with missing features");
    }
    points_ = std::move(fm.values);
    codes_.reserve(fm.kept.size());
    for (std::size_t r : fm.kept) codes_.push_back(train.label_codes()[r]);

    candidates_.resize(tree_.nodes.size());
    thresholds_.assign(tree_.nodes.size(), std::numeric_limits<double>::infinity());
    for (std::size_t id = 0; id < tree_.nodes.size(); ++id) {
        const TreeNode& node = tree_.nodes[id];
        if (node.is_leaf()) continue;
        std::vector<bool> member(tree_.n_labels(), false);
        for (int l : node.labels) member[static_cast<std::size_t>(l)] = true;
        for (std::size_t i = 0; i < codes_.size(); ++i) {
            if (member[static_cast<std::size_t>(codes_[i])]) candidates_[id].push_back(i);
        }
        const auto& cand = candidates_[id];
        bool has_left = false;
        bool has_right = false;
        const auto& left_labels = tree_.node(node.left).labels;
        for (std::size_t i : cand) {
            const bool left = std::binary_search(left_labels.begin(), left_labels.end(), codes_[i]);
            has_left |= left;
            has_right |= !left;
        }
        if (!has_left || !has_right) {
            throw_data("tree node " + std::to_string(id) + " has a branch without training rows");
        }
        if (cand.size() < config_.k_star) {
            warn("node " + std::to_string(id) + " has " + std::to_string(cand.size()) + " training rows, fewer than k*=" +
                 std::to_string(config_.k_star) + "; using all of them");
        }

        if (config_.outlier_enabled && cand.size() >= 2) {
            std::vector<double> nn(cand.size(), std::numeric_limits<double>::infinity());
            parallel_for(cand.size(), [&](std::size_t a) {
                const auto xa = points_.row(cand[a]);
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t b = 0; b < cand.size(); ++b) {
                    if (b == a) continue;
                    best = std::min(best, distance(xa, points_.row(cand[b])));
                }
                nn[a] = best;
            });
            std::sort(nn.begin(), nn.end());
            thresholds_[id] = sorted_quantile(nn, config_.outlier_quantile);
        }
    }
}

double TreeClassifier::outlier_threshold(int node) const { return thresholds_.at(static_cast<std::size_t>(node)); }

CompetitionResult TreeClassifier::compete(std::span<const double> x, int node) const {
    if (x.size() != features_.size()) throw_data("query has the wrong number of features");
    std::vector<double> z(x.begin(), x.end());
    scaler_.apply(z);
    return compete_scaled(z, node);
}

CompetitionResult TreeClassifier::compete_scaled(std::span<const double> z, int node_id) const {
    const TreeNode& node = tree_.node(node_id);
    if (node.is_leaf()) throw_computation("branch competition needs an internal node");
    const auto& cand = candidates_[static_cast<std::size_t>(node_id)];
    const auto& left_labels = tree_.node(node.left).labels;

    const std::size_t m = cand.size();
    std::vector<double> dist(m);
    std::vector<bool> is_left(m);
    for (std::size_t i = 0; i < m; ++i) {
        dist[i] = distance(z, points_.row(cand[i]));
        is_left[i] = std::binary_search(left_labels.begin(), left_labels.end(), codes_[cand[i]]);
    }

    CompetitionResult res;
    res.nearest_distance = *std::min_element(dist.begin(), dist.end());
    if (config_.outlier_enabled && res.nearest_distance > thresholds_[static_cast<std::size_t>(node_id)]) {
        res.decision = BranchDecision::outlier;
        return res;
    }

    const std::size_t k = std::min(config_.k_star, m);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // candidates are in training-row order, so index order breaks distance ties
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
    res.neighbors = k;
    for (std::size_t i = 0; i < k; ++i) (is_left[order[i]] ? res.left_votes : res.right_votes) += 1;

    const double needed = config_.dominant_fraction * static_cast<double>(k);
    constexpr double slack = 1e-9;
    if (static_cast<double>(res.left_votes) >= needed - slack) {
        res.decision = BranchDecision::left;
        return res;
    }
    if (static_cast<double>(res.right_votes) >= needed - slack) {
        res.decision = BranchDecision::right;
        return res;
    }

    std::vector<double> left_d;
    std::vector<double> right_d;
    for (std::size_t i = 0; i < m; ++i) (is_left[i] ? left_d : right_d).push_back(dist[i]);
    const double common = median_of(dist);
    const double pooled_h = silverman_bandwidth(dist);
    auto bandwidth = [&](const std::vector<double>& sample) {
        double h = silverman_bandwidth(sample);
        if (!(h > 0.0)) h = pooled_h;
        if (!(h > 0.0)) h = 1.0;
        return h;
    };
    const double log_ratio =
        log_kde(left_d, bandwidth(left_d), common) - log_kde(right_d, bandwidth(right_d), common);
    const double ratio = std::exp(log_ratio);
    res.pl_ratio = ratio;

    if (ratio > config_.c_upper) {
        res.decision = BranchDecision::left;
    } else if (ratio < config_.c_lower) {
        res.decision = BranchDecision::right;
    } else if (config_.c_lower == config_.c_upper) {
        res.decision = res.left_votes >= res.right_votes ? BranchDecision::left : BranchDecision::right;
    } else {
        res.decision = BranchDecision::stop;
    }
    return res;
}

PredictedLabelSet TreeClassifier::predict(std::span<const double> x) const {
    if (x.size() != features_.size()) throw_data("query has the wrong number of features");
    std::vector<double> z(x.begin(), x.end());
    scaler_.apply(z);

    PredictedLabelSet out;
    int id = tree_.root;
    for (;;) {
        const TreeNode& node = tree_.node(id);
        if (node.is_leaf()) {
            out.labels = node.labels;
            out.stop_node = id;
            return out;
        }
        const CompetitionResult res = compete_scaled(z, id);
        out.path.push_back({id, res.decision});
        switch (res.decision) {
            case BranchDecision::left: id = node.left; break;
            case BranchDecision::right: id = node.right; break;
            case BranchDecision::stop:
                out.labels = node.labels;
                out.stop_node = id;
                return out;
            case BranchDecision::outlier:
                out.stop_node = id;
                return out;
        }
    }
}

// ---------------------------------------------------------- predictive map

std::size_t PredictiveMap::Category::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

bool label_set_less(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty() != b.empty()) return b.empty();
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

std::string label_set_token(const std::vector<int>& labels, const std::vector<std::string>& names) {
    if (labels.empty()) return "none";
    if (labels.size() == names.size() && names.size() > 1) return "all";
    bool single_chars = true;
    for (int l : labels) single_chars &= names[static_cast<std::size_t>(l)].size() == 1;
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i && !single_chars) out += "+";
        out += names[static_cast<std::size_t>(labels[i])];
    }
    return out;
}

std::string label_set_display(const std::vector<int>& labels, const std::vector<std::string>& names) {
    if (labels.empty()) return "none";
    if (labels.size() == names.size() && names.size() > 1) return "all";
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out += ", ";
        out += names[static_cast<std::size_t>(labels[i])];
    }
    return out;
}

std::string PredictiveMap::category_name(std::size_t c) const {
    const Category& cat = categories.at(c);
    return (cat.certain ? "" : "*") + label_set_display(cat.labels, label_names);
}

std::optional<std::size_t> PredictiveMap::find(const std::vector<int>& labels) const {
    for (std::size_t c = 0; c < categories.size(); ++c) {
        if (categories[c].labels == labels) return c;
    }
    return std::nullopt;
}

std::vector<std::size_t> PredictiveMap::column_sums() const {
    std::vector<std::size_t> sums(label_names.size(), 0);
    for (const auto& c : categories) {
        for (std::size_t l = 0; l < sums.size(); ++l) sums[l] += c.counts[l];
    }
    return sums;
}

PredictiveMap predictive_map(const LabeledDataset& test, const TreeClassifier& classifier,
                             std::string feature_set_name) {
    if (test.n_rows() == 0) throw_data("predictive map needs a non-empty test set");
    if (test.labels() != classifier.tree().label_names) throw_data("test labels differ from the training label space");

    const auto& features = classifier.features();
    std::vector<const Column*> cols;
    for (const auto& f : features) cols.push_back(&test.table().column(f));
    const std::vector<std::size_t> rows = test.table().complete_rows(features);
    if (rows.empty()) throw_data("predictive map: no test row has all features");
    if (rows.size() < test.n_rows()) {
        warn("predictive map: skipped " + std::to_string(test.n_rows() - rows.size()) +
             " test row(s) with missing features");
    }

    std::vector<PredictedLabelSet> predictions(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        std::vector<double> x(cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j) x[j] = cols[j]->values[rows[i]];
        predictions[i] = classifier.predict(x);
    });

    PredictiveMap map;
    map.feature_set = std::move(feature_set_name);
    map.label_names = test.labels();
    map.config = classifier.config();

    std::map<std::vector<int>, std::vector<std::size_t>, decltype(&label_set_less)> tally(&label_set_less);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& counts = tally[predictions[i].labels];
        counts.resize(map.label_names.size(), 0);
        ++counts[static_cast<std::size_t>(test.label_codes()[rows[i]])];
    }
    std::map<std::vector<int>, std::size_t> index;
    for (auto& [labels, counts] : tally) {
        PredictiveMap::Category cat;
        cat.labels = labels;
        cat.counts = counts;
        cat.certain = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) == 1;
        index[labels] = map.categories.size();
        map.categories.push_back(std::move(cat));
    }
    map.points.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        PredictiveMap::PointRecord rec;
        rec.row_id = test.table().row_ids()[rows[i]];
        rec.true_label = test.label_codes()[rows[i]];
        rec.category = index.at(predictions[i].labels);
        rec.prediction = std::move(predictions[i]);
        map.points.push_back(std::move(rec));
    }
    return map;
}

PredictiveMap predictive_map(const LabeledDataset& test, const LabelTree& tree, const LabeledDataset& train,
                             std::span<const std::string> features, const CompetitionConfig& config) {
    TreeClassifier classifier(train, std::vector<std::string>(features.begin(), features.end()), tree, config);
    return predictive_map(test, classifier);
}

void write_predictive_map_csv(std::ostream& out, const PredictiveMap& map) {
    std::vector<std::string> header{map.feature_set.empty() ? "category" : map.feature_set};
    header.insert(header.end(), map.label_names.begin(), map.label_names.end());
    csv::write_row(out, header);
    for (std::size_t c = 0; c < map.categories.size(); ++c) {
        std::vector<std::string> row{map.category_name(c)};
        for (std::size_t n : map.categories[c].counts) row.push_back(std::to_string(n));
        csv::write_row(out, row);
    }
}

nlohmann::json predictive_map_json(const PredictiveMap& map) {
    nlohmann::json j;
    j["feature_set"] = map.feature_set;
    j["labels"] = map.label_names;
    j["config"] = to_json(map.config);
    nlohmann::json cats = nlohmann::json::array();
    for (std::size_t c = 0; c < map.categories.size(); ++c) {
        const auto& cat = map.categories[c];
        std::vector<std::string> names;
        for (int l : cat.labels) names.push_back(map.label_names[static_cast<std::size_t>(l)]);
        cats.push_back({{"name", map.category_name(c)},
                        {"labels", names},
                        {"counts", cat.counts},
                        {"certain", cat.certain}});
    }
    j["categories"] = cats;
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : map.points) {
        std::vector<std::string> predicted;
        for (int l : p.prediction.labels) predicted.push_back(map.label_names[static_cast<std::size_t>(l)]);
        nlohmann::json path = nlohmann::json::array();
        for (const auto& step : p.prediction.path) path.push_back({{"node", step.node}, {"decision", to_string(step.decision)}});
        pts.push_back({{"row_id", p.row_id},
                       {"true_label", map.label_names[static_cast<std::size_t>(p.true_label)]},
                       {"predicted", predicted},
                       {"category", map.category_name(p.category)},
                       {"stop_node", p.prediction.stop_node},
                       {"path", path}});
    }
    j["points"] = pts;
    return j;
}

nlohmann::json pie_chart_json(const PredictiveMap& map) {
    nlohmann::json j = nlohmann::json::object();
    const auto sums = map.column_sums();
    for (std::size_t l = 0; l < map.label_names.size(); ++l) {
        nlohmann::json slices = nlohmann::json::array();
        for (std::size_t c = 0; c < map.categories.size(); ++c) {
            const std::size_t n = map.categories[c].counts[l];
            if (n == 0) continue;
            slices.push_back({{"category", map.category_name(c)},
                              {"count", n},
                              {"proportion", static_cast<double>(n) / static_cast<double>(sums[l])}});
        }
        j[map.label_names[l]] = {{"total", sums[l]}, {"slices", slices}};
    }
    return j;
}

}  // namespace ceda
