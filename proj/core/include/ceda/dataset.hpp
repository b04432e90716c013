#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ceda/matrix.hpp"

namespace ceda {

enum class FeatureKind { continuous, discrete, categorical };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

/// A typed column. Numeric kinds store their values directly; categorical
/// columns store indices into `levels` (sorted, distinct). NaN marks a
/// missing cell in either representation.
struct Column {
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
    std::vector<double> values;
    std::vector<std::string> levels;

    bool missing(std::size_t row) const;
    /// Category code of a categorical cell; -1 when missing.
    int code(std::size_t row) const;
    /// Text as it would be written back to CSV.
    std::string text(std::size_t row) const;
};

/// Builds a categorical column from raw strings; empty strings are missing.
Column make_categorical(std::string name, const std::vector<std::string>& cells);

/// Immutable columnar table. Every row carries a stable id (its 0-based data
/// row in the source file) so predictions can be joined back later.
class DataTable {
public:
    DataTable() = default;
    DataTable(std::vector<Column> columns, std::vector<std::size_t> row_ids, std::string schema_id = {});
    /// Row ids default to 0..n-1.
    explicit DataTable(std::vector<Column> columns, std::string schema_id = {});

    std::size_t n_rows() const { return row_ids_.size(); }
    std::size_t n_cols() const { return columns_.size(); }
    const std::vector<Column>& columns() const { return columns_; }
    const std::vector<std::size_t>& row_ids() const { return row_ids_; }
    const std::string& schema_id() const { return schema_id_; }

    bool has_column(std::string_view name) const { return find(name).has_value(); }
    std::optional<std::size_t> find(std::string_view name) const;
    /// Throws a data error naming the column when absent.
    const Column& column(std::string_view name) const;
    std::vector<std::string> names() const;

    DataTable select_rows(std::span<const std::size_t> rows) const;
    /// Indices of rows with no missing cell among `names`.
    std::vector<std::size_t> complete_rows(std::span<const std::string> names) const;

private:
    std::vector<Column> columns_;
    std::vector<std::size_t> row_ids_;
    std::string schema_id_;
};

/// A table plus the categorical column that carries class labels. The label
/// universe (`labels()`) is the label column's level set and is shared by
/// every row subset, so train/test splits keep identical label codes.
class LabeledDataset {
public:
    LabeledDataset() = default;
    LabeledDataset(DataTable table, std::string label_column);

    const DataTable& table() const { return table_; }
    const std::string& label_column() const { return label_column_; }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t n_labels() const { return labels_.size(); }
    std::size_t n_rows() const { return table_.n_rows(); }
    const std::vector<int>& label_codes() const { return codes_; }
    std::map<std::string, std::size_t> per_label_counts() const;
    std::size_t count_of(int code) const;
    /// Every column except the label column, in table order.
    std::vector<std::string> feature_names() const;
    std::optional<int> label_code(std::string_view label) const;

    LabeledDataset select_rows(std::span<const std::size_t> rows) const;

private:
    DataTable table_;
    std::string label_column_;
    std::vector<std::string> labels_;
    std::vector<int> codes_;
};

struct LoadOptions {
    std::string label_column;
    std::map<std::string, FeatureKind> kind_overrides;
    /// Numeric columns with at most this many distinct values load as discrete.
    std::size_t discrete_max_distinct = 12;
};

/// Reads a CSV (header row, "." decimals). Empty cells are missing values;
/// rows with a missing label are dropped with a warning.
LabeledDataset load_csv(const std::string& path, const LoadOptions& options);
LabeledDataset load_csv(std::istream& in, const LoadOptions& options, std::string schema_id = {});
/// Same typing rules without a label column.
DataTable load_table(std::istream& in, const LoadOptions& options, std::string schema_id = {});

/// Writes every column with round-trip number formatting.
void write_csv(std::ostream& out, const DataTable& table);

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    bool stratified = true;
};

/// Disjoint train/test partition. For each stratum (one per label in code
/// order when stratified, otherwise all rows) the row indices are taken in
/// ascending order, shuffled with ceda::shuffle from one Rng(seed) shared
/// across strata, and the first round(fraction * n) clamped to [1, n-1] go
/// to train. A stratum of one row goes to train with a warning. Both sides
/// keep the original row order.
std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds, const SplitSpec& spec);

/// Per-feature mean/sd; constant features get scale 1 so they contribute 0.
struct Standardizer {
    std::vector<std::string> features;
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const DataTable& table, std::span<const std::string> features);
    /// Identity transform (mean 0, scale 1).
    static Standardizer identity(std::span<const std::string> features);

    void apply(std::span<double> x) const;
};

/// Numeric rows of `features` for the given table rows, standardized.
/// Rows with a missing value are skipped; `kept` lists the surviving rows.
struct FeatureMatrix {
    Matrix values;
    std::vector<std::size_t> kept;
};

FeatureMatrix extract_features(const DataTable& table, std::span<const std::string> features,
                               const Standardizer& scaler);

}  // namespace ceda
