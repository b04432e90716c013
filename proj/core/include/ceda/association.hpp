#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/dataset.hpp"
#include "ceda/discretize.hpp"
#include "ceda/hclust.hpp"
#include "ceda/matrix.hpp"

namespace ceda {

/// R x C table of co-occurrence counts.
struct ContingencyTable {
    std::string row_var;
    std::string col_var;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::int64_t> counts;  // row-major

    std::size_t rows() const { return row_labels.size(); }
    std::size_t cols() const { return col_labels.size(); }
    std::int64_t at(std::size_t r, std::size_t c) const { return counts[r * cols() + c]; }
    std::int64_t total() const;
};

/// Builds a table from raw count rows (used by tests and by callers that
/// already hold tallies).
ContingencyTable make_contingency(std::vector<std::vector<std::int64_t>> counts, std::string row_var = "row",
                                  std::string col_var = "col");

/// Tallies two categorizations over rows where both are present.
ContingencyTable tally(const Categorization& rows, const Categorization& cols);

/// Cross-categorization of two columns of `table`; rows missing either value
/// are excluded. Throws when either variable shows fewer than 2 categories.
ContingencyTable contingency_table(const DataTable& table, const std::string& row_var, const std::string& col_var,
                                   const BinningSet& binnings);

enum class Direction { row_to_col, col_to_row };

/// Shannon entropy (nats) of a vector of non-negative weights, 0 log 0 = 0.
double shannon_entropy(std::span<const double> weights);

/// Row-to-column value: sum_r p(r) H(col | row = r) / H(col). Empty rows
/// carry zero weight. Throws "degenerate target" when H(target) = 0.
double directed_conditional_entropy(const ContingencyTable& table, Direction direction);

/// Mean of the two directed values.
double mutual_conditional_entropy(const ContingencyTable& table);

/// Symmetric MCE matrix, rows and columns in the leaf order of an
/// agglomerative clustering of the matrix itself.
struct MceMatrix {
    std::vector<std::string> features;
    Matrix values;
    Dendrogram dendrogram;  // leaves named after features in input order
    std::vector<std::string> skipped;

    double at(std::size_t i, std::size_t j) const { return values(i, j); }
    /// Index of a feature in `features`; throws when absent.
    std::size_t index_of(const std::string& feature) const;
};

/// Rows with a missing value in any of `features` are dropped (logged).
/// Features with fewer than 2 categories on the remaining rows are skipped
/// with a warning. Needs at least 2 usable features.
MceMatrix mce_matrix(const DataTable& table, std::span<const std::string> features, const BinningSet& binnings,
                     Linkage linkage = Linkage::average);

void write_mce_csv(std::ostream& out, const MceMatrix& mce);
/// Block memberships obtained by cutting the feature dendrogram into k groups.
nlohmann::json mce_groups_json(const MceMatrix& mce, std::size_t k);

struct LabelAssociation {
    std::string feature;
    double label_to_feature = 0.0;  // conditioning on label rows; ranking key
    double feature_to_label = 0.0;
};

/// Features sorted by the label-to-feature directed value (ascending, ties by
/// name). Each feature uses the rows where it is present; degenerate
/// features are left out with a warning.
std::vector<LabelAssociation> rank_features_by_label_association(const LabeledDataset& ds,
                                                                 std::span<const std::string> features,
                                                                 const BinningSet& binnings);

void write_label_association_csv(std::ostream& out, const std::vector<LabelAssociation>& ranking);

}  // namespace ceda
