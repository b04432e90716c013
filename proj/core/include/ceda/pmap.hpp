#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/dataset.hpp"
#include "ceda/let.hpp"
#include "ceda/matrix.hpp"

namespace ceda {

struct CompetitionConfig {
    std::size_t k_star = 20;
    double c_lower = 0.65;
    double c_upper = 100.0 / 65.0;
    double dominant_fraction = 0.9;
    double outlier_quantile = 0.99;
    bool outlier_enabled = true;

    /// Throws a config error unless 0 < C_L <= 1 <= C_U, k* >= 1,
    /// dominant_fraction in (0.5, 1] and outlier_quantile in (0, 1].
    void validate() const;
};

nlohmann::json to_json(const CompetitionConfig& cfg);

enum class BranchDecision { left, right, stop, outlier };

std::string_view to_string(BranchDecision decision);

/// Everything one branch competition looked at.
struct CompetitionResult {
    BranchDecision decision = BranchDecision::stop;
    std::size_t neighbors = 0;
    std::size_t left_votes = 0;
    std::size_t right_votes = 0;
    /// PL_left / PL_right when the vote was not decisive.
    std::optional<double> pl_ratio;
    double nearest_distance = 0.0;
};

struct PathStep {
    int node = -1;
    BranchDecision decision = BranchDecision::stop;
};

/// Labels of the node where descent stopped; empty for an outlier.
struct PredictedLabelSet {
    std::vector<int> labels;
    int stop_node = -1;
    std::vector<PathStep> path;

    bool singleton() const { return labels.size() == 1; }
    bool empty() const { return labels.empty(); }
};

/// Label tree plus standardized training points, prepared for serial binary
/// competitions.
///
/// At an internal node the candidates are the training rows whose label lies
/// under that node. For a query x (standardized with training statistics):
///  1. outlier: when enabled, x is an outlier if its nearest candidate is
///     farther than the outlier_quantile of the candidates' own
///     leave-one-out nearest-neighbour distances;
///  2. vote: among the k* nearest candidates (ties by training row), a branch
///     holding at least dominant_fraction * k* of them wins;
///  3. pseudo-likelihood: otherwise the distances from x to all left and to
///     all right candidates each get a Gaussian KDE (Silverman bandwidth);
///     both are evaluated at the median of the pooled distances and the
///     ratio PL_left / PL_right is compared with [C_L, C_U]: above C_U left
///     wins, below C_L right wins, inside the band the descent stops. When
///     C_L == C_U the band is a single point and a ratio exactly on it falls
///     back to the vote majority (left on an even vote).
class TreeClassifier {
public:
    TreeClassifier(const LabeledDataset& train, std::vector<std::string> features, LabelTree tree,
                   CompetitionConfig config, bool zscore = true);

    const LabelTree& tree() const { return tree_; }
    const CompetitionConfig& config() const { return config_; }
    const std::vector<std::string>& features() const { return features_; }
    const Standardizer& scaler() const { return scaler_; }
    std::size_t n_train() const { return points_.rows(); }

    /// x is a raw (unstandardized) feature vector.
    CompetitionResult compete(std::span<const double> x, int node) const;
    PredictedLabelSet predict(std::span<const double> x) const;

    /// Outlier distance threshold of an internal node (infinite when the rule
    /// is disabled or the node has fewer than 2 candidates).
    double outlier_threshold(int node) const;

private:
    CompetitionResult compete_scaled(std::span<const double> z, int node) const;

    LabelTree tree_;
    CompetitionConfig config_;
    std::vector<std::string> features_;
    Standardizer scaler_;
    Matrix points_;
    std::vector<int> codes_;
    std::vector<std::vector<std::size_t>> candidates_;  // per node
    std::vector<double> thresholds_;                     // per node
};

/// Silverman's rule of thumb, 0.9 min(sd, IQR / 1.34) n^(-1/5), falling back
/// to whichever spread is non-zero; 0 when the sample has no spread.
double silverman_bandwidth(std::span<const double> sample);

/// log of the Gaussian KDE of `sample` with bandwidth h at point x.
double log_kde(std::span<const double> sample, double h, double x);

/// Rows = observed predicted label sets, columns = true labels.
struct PredictiveMap {
    struct Category {
        std::vector<int> labels;
        std::vector<std::size_t> counts;  // per true label
        bool certain = false;             // exactly one true label present
        std::size_t total() const;
    };
    struct PointRecord {
        std::size_t row_id = 0;
        int true_label = -1;
        PredictedLabelSet prediction;
        std::size_t category = 0;
    };

    std::string feature_set;
    std::vector<std::string> label_names;
    std::vector<Category> categories;
    std::vector<PointRecord> points;
    CompetitionConfig config;

    /// Table-style row name: labels joined by ", ", "all" for the full label
    /// space, "none" for the empty set, "*" prefix when uncertain.
    std::string category_name(std::size_t c) const;
    std::optional<std::size_t> find(const std::vector<int>& labels) const;
    std::vector<std::size_t> column_sums() const;
};

/// Category order: by set size, then lexicographically by label codes; the
/// empty set comes last.
bool label_set_less(const std::vector<int>& a, const std::vector<int>& b);

/// Compact set token used in composite chain names ("be", "all", "none").
/// Labels are concatenated when all are one character long, otherwise
/// joined with "+".
std::string label_set_token(const std::vector<int>& labels, const std::vector<std::string>& names);
/// Display form used in predictive-map rows ("b, e", "all", "none").
std::string label_set_display(const std::vector<int>& labels, const std::vector<std::string>& names);

/// Predicts every test row (rows missing a feature are skipped with a
/// warning) and tabulates the map.
PredictiveMap predictive_map(const LabeledDataset& test, const TreeClassifier& classifier,
                             std::string feature_set_name = {});

/// Convenience form that prepares the classifier first.
PredictiveMap predictive_map(const LabeledDataset& test, const LabelTree& tree, const LabeledDataset& train,
                             std::span<const std::string> features, const CompetitionConfig& config);

/// Table layout: header "<feature set>,<label...>", one row per category.
void write_predictive_map_csv(std::ostream& out, const PredictiveMap& map);
/// Per-point records with stop nodes and decision paths.
nlohmann::json predictive_map_json(const PredictiveMap& map);
/// Per true label: category name -> proportion of that label's test points.
nlohmann::json pie_chart_json(const PredictiveMap& map);

}  // namespace ceda
