#include "ceda/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "ceda/csv.hpp"
#include "ceda/error.hpp"
#include "ceda/log.hpp"
#include "ceda/rng.hpp"

namespace ceda {

namespace {
constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
}

std::string_view to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::continuous: return "continuous";
        case FeatureKind::discrete: return "discrete";
        case FeatureKind::categorical: return "categorical";
    }
    return "unknown";
}

FeatureKind parse_feature_kind(std::string_view text) {
    if (text == "continuous") return FeatureKind::continuous;
    if (text == "discrete") return FeatureKind::discrete;
    if (text == "categorical") return FeatureKind::categorical;
    throw_config("unknown feature kind '" + std::string(text) + "' (expected continuous, discrete or categorical)");
}

bool Column::missing(std::size_t row) const { return std::isnan(values[row]); }

int Column::code(std::size_t row) const {
    return missing(row) ? -1 : static_cast<int>(values[row]);
}

std::string Column::text(std::size_t row) const {
    if (missing(row)) return {};
    if (kind == FeatureKind::categorical) return levels[static_cast<std::size_t>(values[row])];
    return csv::format_double(values[row]);
}

Column make_categorical(std::string name, const std::vector<std::string>& cells) {
    Column col;
    col.name = std::move(name);
    col.kind = FeatureKind::categorical;
    std::set<std::string> distinct;
    for (const auto& c : cells) {
        if (!c.empty()) distinct.insert(c);
    }
    col.levels.assign(distinct.begin(), distinct.end());
    col.values.reserve(cells.size());
    for (const auto& c : cells) {
        if (c.empty()) {
            col.values.push_back(kMissing);
        } else {
            auto it = std::lower_bound(col.levels.begin(), col.levels.end(), c);
            col.values.push_back(static_cast<double>(it - col.levels.begin()));
        }
    }
    return col;
}

// ---------------------------------------------------------------- DataTable

DataTable::DataTable(std::vector<Column> columns, std::vector<std::size_t> row_ids, std::string schema_id)
    : columns_(std::move(columns)), row_ids_(std::move(row_ids)), schema_id_(std::move(schema_id)) {
    std::set<std::string> seen;
    for (const auto& c : columns_) {
        if (!seen.insert(c.name).second) throw_data("duplicate column name '" + c.name + "'");
        if (c.values.size() != row_ids_.size()) {
            throw_data("column '" + c.name + "' has " + std::to_string(c.values.size()) + " values, expected " +
                       std::to_string(row_ids_.size()));
        }
        if (c.kind != FeatureKind::categorical) {
            for (double v : c.values) {
                if (std::isinf(v)) throw_data("column '" + c.name + "' holds a non-finite value");
            }
        }
    }
}

DataTable::DataTable(std::vector<Column> columns, std::string schema_id) {
    const std::size_t n = columns.empty() ? 0 : columns.front().values.size();
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    *this = DataTable(std::move(columns), std::move(ids), std::move(schema_id));
}

std::optional<std::size_t> DataTable::find(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) return i;
    }
    return std::nullopt;
}

const Column& DataTable::column(std::string_view name) const {
    auto idx = find(name);
    if (!idx) throw_data("no column named '" + std::string(name) + "'");
    return columns_[*idx];
}

std::vector<std::string> DataTable::names() const {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
}

DataTable DataTable::select_rows(std::span<const std::size_t> rows) const {
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_) {
        Column sub{c.name, c.kind, {}, c.levels};
        sub.values.reserve(rows.size());
        for (std::size_t r : rows) sub.values.push_back(c.values.at(r));
        cols.push_back(std::move(sub));
    }
    std::vector<std::size_t> ids;
    ids.reserve(rows.size());
    for (std::size_t r : rows) ids.push_back(row_ids_.at(r));
    DataTable out;
    out.columns_ = std::move(cols);
    out.row_ids_ = std::move(ids);
    out.schema_id_ = schema_id_;
    return out;
}

std::vector<std::size_t> DataTable::complete_rows(std::span<const std::string> names) const {
    std::vector<const Column*> cols;
    for (const auto& n : names) cols.push_back(&column(n));
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < n_rows(); ++r) {
        bool ok = true;
        for (const Column* c : cols) {
            if (c->missing(r)) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(r);
    }
    return out;
}

// ----------------------------------------------------------- LabeledDataset

LabeledDataset::LabeledDataset(DataTable table, std::string label_column)
    : table_(std::move(table)), label_column_(std::move(label_column)) {
    const Column& col = table_.column(label_column_);
    if (col.kind != FeatureKind::categorical) throw_data("label column '" + label_column_ + "' must be categorical");
    labels_ = col.levels;
    codes_.reserve(table_.n_rows());
    for (std::size_t r = 0; r < table_.n_rows(); ++r) {
        if (col.missing(r)) throw_data("row " + std::to_string(table_.row_ids()[r]) + " has no label");
        codes_.push_back(col.code(r));
    }
}

std::map<std::string, std::size_t> LabeledDataset::per_label_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& l : labels_) out[l] = 0;
    for (int c : codes_) ++out[labels_[static_cast<std::size_t>(c)]];
    return out;
}

std::size_t LabeledDataset::count_of(int code) const {
    return static_cast<std::size_t>(std::count(codes_.begin(), codes_.end(), code));
}

std::vector<std::string> LabeledDataset::feature_names() const {
    std::vector<std::string> out;
    for (const auto& c : table_.columns()) {
        if (c.name != label_column_) out.push_back(c.name);
    }
    return out;
}

std::optional<int> LabeledDataset::label_code(std::string_view label) const {
    auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
    if (it == labels_.end() || *it != label) return std::nullopt;
    return static_cast<int>(it - labels_.begin());
}

LabeledDataset LabeledDataset::select_rows(std::span<const std::size_t> rows) const {
    LabeledDataset out;
    out.table_ = table_.select_rows(rows);
    out.label_column_ = label_column_;
    out.labels_ = labels_;
    out.codes_.reserve(rows.size());
    for (std::size_t r : rows) out.codes_.push_back(codes_.at(r));
    return out;
}

// ------------------------------------------------------------------ loading

namespace {

Column build_column(const std::string& name, const std::vector<std::string>& cells, const std::vector<std::size_t>& rows,
                    const std::vector<std::size_t>& line_numbers, const LoadOptions& options, bool is_label) {
    std::optional<FeatureKind> forced;
    if (is_label) {
        forced = FeatureKind::categorical;
    } else if (auto it = options.kind_overrides.find(name); it != options.kind_overrides.end()) {
        forced = it->second;
    }

    if (forced == FeatureKind::categorical) return make_categorical(name, cells);

    std::vector<double> values(cells.size(), kMissing);
    bool numeric = true;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        if (cells[r].find_first_not_of(" \t") == std::string::npos) continue;
        auto parsed = csv::parse_double(cells[r]);
        if (!parsed || !std::isfinite(*parsed)) {
            if (forced) {
                throw_data("row " + std::to_string(rows[r]) + " (line " + std::to_string(line_numbers[r]) + "), column '" +
                           name + "': '" + cells[r] + "' is not a finite number");
            }
            if (parsed) {
                throw_data("row " + std::to_string(rows[r]) + " (line " + std::to_string(line_numbers[r]) + "), column '" +
                           name + "': non-finite value '" + cells[r] + "'");
            }
            numeric = false;
            break;
        }
        values[r] = *parsed;
    }
    if (!numeric) return make_categorical(name, cells);

    Column col;
    col.name = name;
    col.values = std::move(values);
    if (forced) {
        col.kind = *forced;
    } else {
        std::set<double> distinct;
        for (double v : col.values) {
            if (!std::isnan(v)) distinct.insert(v);
            if (distinct.size() > options.discrete_max_distinct) break;
        }
        col.kind = distinct.size() <= options.discrete_max_distinct ? FeatureKind::discrete : FeatureKind::continuous;
    }
    return col;
}

DataTable table_from_document(const csv::Document& doc, const LoadOptions& options, std::string schema_id,
                              std::vector<std::size_t>* dropped_missing_label) {
    if (doc.header.empty()) throw_data("empty table: no header row");
    {
        std::set<std::string> seen;
        for (const auto& h : doc.header) {
            if (!seen.insert(h).second) throw_data("duplicate column name '" + h + "'");
        }
    }
    std::optional<std::size_t> label_idx;
    if (!options.label_column.empty()) {
        for (std::size_t i = 0; i < doc.header.size(); ++i) {
            if (doc.header[i] == options.label_column) label_idx = i;
        }
        if (!label_idx) throw_data("label column '" + options.label_column + "' is absent from the header");
    }
    for (const auto& [name, kind] : options.kind_overrides) {
        if (std::find(doc.header.begin(), doc.header.end(), name) == doc.header.end()) {
            throw_config("column-kind override names unknown column '" + name + "'");
        }
    }

    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < doc.rows.size(); ++r) {
        const auto& row = doc.rows[r];
        if (row.size() != doc.header.size()) {
            throw_data("row " + std::to_string(r) + " (line " + std::to_string(doc.line_numbers[r]) + ") has " +
                       std::to_string(row.size()) + " fields, expected " + std::to_string(doc.header.size()));
        }
        if (label_idx && row[*label_idx].empty()) {
            if (dropped_missing_label) dropped_missing_label->push_back(r);
            continue;
        }
        keep.push_back(r);
    }
    if (keep.empty()) throw_data("empty table: no data rows");

    std::vector<std::size_t> lines;
    lines.reserve(keep.size());
    for (std::size_t r : keep) lines.push_back(doc.line_numbers[r]);

    std::vector<Column> columns;
    columns.reserve(doc.header.size());
    for (std::size_t c = 0; c < doc.header.size(); ++c) {
        std::vector<std::string> cells;
        cells.reserve(keep.size());
        for (std::size_t r : keep) cells.push_back(doc.rows[r][c]);
        columns.push_back(build_column(doc.header[c], cells, keep, lines, options, label_idx == c));
    }
    return DataTable(std::move(columns), std::move(keep), std::move(schema_id));
}

}  // namespace

DataTable load_table(std::istream& in, const LoadOptions& options, std::string schema_id) {
    return table_from_document(csv::read(in), options, std::move(schema_id), nullptr);
}

LabeledDataset load_csv(std::istream& in, const LoadOptions& options, std::string schema_id) {
    if (options.label_column.empty()) throw_config("no label column configured");
    std::vector<std::size_t> dropped;
    DataTable table = table_from_document(csv::read(in), options, std::move(schema_id), &dropped);
    if (!dropped.empty()) warn("dropped " + std::to_string(dropped.size()) + " row(s) with a missing label");
    return LabeledDataset(std::move(table), options.label_column);
}

LabeledDataset load_csv(const std::string& path, const LoadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_data("cannot open file '" + path + "'");
    return load_csv(in, options, path);
}

void write_csv(std::ostream& out, const DataTable& table) {
    csv::write_row(out, table.names());
    std::vector<std::string> fields(table.n_cols());
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        for (std::size_t c = 0; c < table.n_cols(); ++c) fields[c] = table.columns()[c].text(r);
        csv::write_row(out, fields);
    }
}

// ---------------------------------------------------------------- splitting

std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& ds, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw_config("split.train_fraction must lie in (0, 1)");
    }
    std::vector<std::vector<std::size_t>> strata;
    if (spec.stratified) {
        strata.resize(ds.n_labels());
        for (std::size_t r = 0; r < ds.n_rows(); ++r) strata[static_cast<std::size_t>(ds.label_codes()[r])].push_back(r);
    } else {
        strata.emplace_back(ds.n_rows());
        std::iota(strata.back().begin(), strata.back().end(), std::size_t{0});
    }

    Rng rng(spec.seed);
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto& rows = strata[s];
        if (rows.empty()) continue;
        if (rows.size() == 1) {
            const std::string who = spec.stratified ? "label '" + ds.labels()[s] + "'" : "the dataset";
            warn(who + " has a single row; it goes to the training split");
            train.push_back(rows.front());
            continue;
        }
        shuffle(rows, rng);
        const auto n = static_cast<double>(rows.size());
        auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
        n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
        train.insert(train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.insert(test.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {ds.select_rows(train), ds.select_rows(test)};
}

// ---------------------------------------------------------- standardizing

Standardizer Standardizer::fit(const DataTable& table, std::span<const std::string> features) {
    Standardizer s;
    s.features.assign(features.begin(), features.end());
    for (const auto& name : features) {
        const Column& col = table.column(name);
        if (col.kind == FeatureKind::categorical) {
            throw_config("feature '" + name + "' is categorical; distance features must be numeric");
        }
        double sum = 0.0;
        std::size_t n = 0;
        for (double v : col.values) {
            if (std::isnan(v)) continue;
            sum += v;
            ++n;
        }
        const double mean = n ? sum / static_cast<double>(n) : 0.0;
        double ss = 0.0;
        for (double v : col.values) {
            if (!std::isnan(v)) ss += (v - mean) * (v - mean);
        }
        const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        s.mean.push_back(mean);
        s.scale.push_back(sd > 0.0 ? sd : 1.0);
    }
    return s;
}

Standardizer Standardizer::identity(std::span<const std::string> features) {
    Standardizer s;
    s.features.assign(features.begin(), features.end());
    s.mean.assign(features.size(), 0.0);
    s.scale.assign(features.size(), 1.0);
    return s;
}

void Standardizer::apply(std::span<double> x) const {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mean[j]) / scale[j];
}

FeatureMatrix extract_features(const DataTable& table, std::span<const std::string> features,
                               const Standardizer& scaler) {
    std::vector<const Column*> cols;
    for (const auto& name : features) {
        const Column& c = table.column(name);
        if (c.kind == FeatureKind::categorical) {
            throw_config("feature '" + name + "' is categorical; distance features must be numeric");
        }
        cols.push_back(&c);
    }
    FeatureMatrix fm;
    fm.kept = table.complete_rows(features);
    fm.values = Matrix(fm.kept.size(), cols.size());
    for (std::size_t i = 0; i < fm.kept.size(); ++i) {
        auto row = fm.values.row(i);
        for (std::size_t j = 0; j < cols.size(); ++j) row[j] = cols[j]->values[fm.kept[i]];
        scaler.apply(row);
    }
    return fm;
}

}  // namespace ceda
