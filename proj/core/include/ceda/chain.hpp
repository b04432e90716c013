#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/dataset.hpp"
#include "ceda/let.hpp"
#include "ceda/pmap.hpp"

namespace ceda {

struct FeatureSet {
    std::string name;
    std::vector<std::string> features;
};

struct ChainLink {
    FeatureSet set;
    CompetitionConfig config;
};

struct FeatureChain {
    std::vector<ChainLink> links;

    /// Throws a config error for an empty chain, an empty set, or a feature
    /// that `table` lacks.
    void validate(const DataTable& table) const;
};

struct ChainOptions {
    /// Link i builds its tree with seed derive_seed(let.seed, i).
    LetOptions let;
    bool zscore = true;
};

/// One row of an ordered category table: the label set predicted at every
/// link so far, tallied by true label.
struct CompositeCategory {
    std::vector<std::vector<int>> sets;
    std::vector<std::size_t> counts;
    bool certain = false;
    /// Row of the previous depth's table this row refines.
    std::optional<std::size_t> parent;

    std::size_t total() const;
};

/// Depth-d table. Depth 1 is the first link's predictive map; deeper tables
/// hold only refinements of the previous depth's uncertain rows.
struct OrderedCategoryTable {
    std::size_t depth = 0;
    std::vector<std::string> label_names;
    std::vector<std::string> feature_sets;
    std::vector<CompositeCategory> rows;

    /// Per-link tokens joined by "-" ("e-be-all"); "*" prefix when uncertain.
    std::string row_name(std::size_t r) const;
    std::vector<std::size_t> column_sums() const;
    /// Share of the table's points that sit in certain rows.
    double certain_fraction() const;
};

struct ChainResult {
    std::vector<LabelTree> trees;
    /// Full predictive map of each link over every test point.
    std::vector<PredictiveMap> maps;
    std::vector<OrderedCategoryTable> tables;
    std::vector<std::size_t> row_ids;
    std::vector<int> true_labels;
    /// placement[i][d]: row of point i in the depth-(d+1) table; the vector
    /// ends at the deepest table that holds the point.
    std::vector<std::vector<std::size_t>> placement;

    std::optional<std::size_t> point_index(std::size_t row_id) const;
};

/// Test rows missing any chain feature are dropped with a warning.
ChainResult chain_categories(const LabeledDataset& test, const LabeledDataset& train, const FeatureChain& chain,
                             const ChainOptions& options = {});

enum class DissectionCase { certain_coherent, certain_incoherent, uncertain_coherent, uncertain_incoherent };

std::string_view to_string(DissectionCase c);

struct DissectionRecord {
    std::size_t row_id = 0;
    int external = -1;
    int true_label = -1;
    std::size_t depth = 0;
    std::size_t row = 0;
    std::string category;
    bool certain = false;
    bool coherent = false;
    DissectionCase kase = DissectionCase::certain_coherent;
};

struct DissectionReport {
    std::vector<std::string> label_names;
    std::vector<DissectionRecord> records;
    std::array<std::size_t, 4> totals{};

    std::size_t total() const;
};

/// External singleton predictions keyed by row id, as label codes.
using ExternalPredictions = std::map<std::size_t, int>;

/// Each point's deepest chain category decides: certain when one true label
/// occupies it, coherent when the external label lies in the category's
/// last-link label set. Throws a data error when a chain point has no
/// external prediction or an external row id is not in the chain.
DissectionReport dissect_external(const ExternalPredictions& external, const ChainResult& chain);

/// Reads "row_id,predicted_label" CSV; labels are resolved by name.
ExternalPredictions read_external_predictions(std::istream& in, const std::vector<std::string>& label_names);
void write_external_predictions(std::ostream& out, const ExternalPredictions& predictions,
                                const std::vector<std::string>& label_names);

/// Plain k-nearest-neighbour majority vote on standardized features; a tied
/// vote goes to the tied label whose nearest member is closest. Test rows
/// with missing features are skipped.
ExternalPredictions knn_majority_predict(const LabeledDataset& train, const LabeledDataset& test,
                                         std::span<const std::string> features, std::size_t k = 20,
                                         bool zscore = true);

/// Header "<feature sets>,<label...>", one row per composite category.
void write_category_table_csv(std::ostream& out, const OrderedCategoryTable& table);
nlohmann::json chain_json(const ChainResult& chain);
void write_dissection_csv(std::ostream& out, const DissectionReport& report);
nlohmann::json dissection_json(const DissectionReport& report);

}  // namespace ceda
