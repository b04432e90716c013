#include "ceda/association.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ceda/csv.hpp"
#include "ceda/error.hpp"
#include "ceda/log.hpp"
#include "ceda/parallel.hpp"

namespace ceda {

std::int64_t ContingencyTable::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

ContingencyTable make_contingency(std::vector<std::vector<std::int64_t>> counts, std::string row_var,
                                  std::string col_var) {
    ContingencyTable t;
    t.row_var = std::move(row_var);
    t.col_var = std::move(col_var);
    if (counts.empty() || counts.front().empty()) throw_data("contingency table must be non-empty");
    const std::size_t cols = counts.front().size();
    for (std::size_t r = 0; r < counts.size(); ++r) {
        if (counts[r].size() != cols) throw_data("contingency rows differ in length");
        t.row_labels.push_back(std::to_string(r));
        for (std::int64_t v : counts[r]) {
            if (v < 0) throw_data("contingency counts must be non-negative");
            t.counts.push_back(v);
        }
    }
    for (std::size_t c = 0; c < cols; ++c) t.col_labels.push_back(std::to_string(c));
    return t;
}

ContingencyTable tally(const Categorization& rows, const Categorization& cols) {
    if (rows.codes.size() != cols.codes.size()) throw_data("categorizations differ in length");
    ContingencyTable t;
    t.row_var = rows.feature;
    t.col_var = cols.feature;
    t.row_labels = rows.names;
    t.col_labels = cols.names;
    t.counts.assign(rows.n_categories() * cols.n_categories(), 0);
    for (std::size_t i = 0; i < rows.codes.size(); ++i) {
        const int r = rows.codes[i];
        const int c = cols.codes[i];
        if (r < 0 || c < 0) continue;
        ++t.counts[static_cast<std::size_t>(r) * t.cols() + static_cast<std::size_t>(c)];
    }
    return t;
}

namespace {

std::size_t observed_categories(const std::vector<int>& codes) {
    std::vector<int> seen;
    for (int c : codes) {
        if (c >= 0) seen.push_back(c);
    }
    std::sort(seen.begin(), seen.end());
    return static_cast<std::size_t>(std::unique(seen.begin(), seen.end()) - seen.begin());
}

/// Codes of rows where both categorizations are present.
void mask_jointly_present(Categorization& a, Categorization& b) {
    for (std::size_t i = 0; i < a.codes.size(); ++i) {
        if (a.codes[i] < 0 || b.codes[i] < 0) a.codes[i] = b.codes[i] = -1;
    }
}

}  // namespace

ContingencyTable contingency_table(const DataTable& table, const std::string& row_var, const std::string& col_var,
                                   const BinningSet& binnings) {
    Categorization rows = categorize_column(table, row_var, binnings);
    Categorization cols = categorize_column(table, col_var, binnings);
    mask_jointly_present(rows, cols);
    if (observed_categories(rows.codes) < 2) throw_data("variable '" + row_var + "' has a single category");
    if (observed_categories(cols.codes) < 2) throw_data("variable '" + col_var + "' has a single category");
    return tally(rows, cols);
}

double shannon_entropy(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double w : weights) {
        if (w <= 0.0) continue;
        const double p = w / total;
        h -= p * std::log(p);
    }
    return h;
}

double directed_conditional_entropy(const ContingencyTable& table, Direction direction) {
    const bool by_rows = direction == Direction::row_to_col;
    const std::size_t n_given = by_rows ? table.rows() : table.cols();
    const std::size_t n_target = by_rows ? table.cols() : table.rows();
    auto cell = [&](std::size_t given, std::size_t target) {
        return static_cast<double>(by_rows ? table.at(given, target) : table.at(target, given));
    };

    std::vector<double> target_margin(n_target, 0.0);
    std::vector<double> slice(n_target);
    double total = 0.0;
    for (std::size_t g = 0; g < n_given; ++g) {
        for (std::size_t t = 0; t < n_target; ++t) {
            target_margin[t] += cell(g, t);
            total += cell(g, t);
        }
    }
    if (total <= 0.0) throw_data("contingency table is empty");
    const double h_target = shannon_entropy(target_margin);
    if (!(h_target > 0.0)) {
        throw_computation("degenerate target: '" + (by_rows ? table.col_var : table.row_var) + "' has zero entropy");
    }

    double weighted = 0.0;
    for (std::size_t g = 0; g < n_given; ++g) {
        double given_total = 0.0;
        for (std::size_t t = 0; t < n_target; ++t) {
            slice[t] = cell(g, t);
            given_total += slice[t];
        }
        if (given_total <= 0.0) continue;
        weighted += (given_total / total) * shannon_entropy(slice);
    }
    return weighted / h_target;
}

double mutual_conditional_entropy(const ContingencyTable& table) {
    return 0.5 * (directed_conditional_entropy(table, Direction::row_to_col) +
                  directed_conditional_entropy(table, Direction::col_to_row));
}

std::size_t MceMatrix::index_of(const std::string& feature) const {
    auto it = std::find(features.begin(), features.end(), feature);
    if (it == features.end()) throw_data("feature '" + feature + "' is not in the MCE matrix");
    return static_cast<std::size_t>(it - features.begin());
}

MceMatrix mce_matrix(const DataTable& table, std::span<const std::string> features, const BinningSet& binnings,
                     Linkage linkage) {
    const std::vector<std::size_t> rows = table.complete_rows(features);
    if (rows.size() < table.n_rows()) {
        warn("MCE matrix: dropped " + std::to_string(table.n_rows() - rows.size()) + " row(s) with missing values");
    }
    const DataTable used = table.select_rows(rows);

    MceMatrix out;
    std::vector<Categorization> cats;
    std::vector<std::string> names;
    for (const auto& f : features) {
        Categorization c = categorize_column(used, f, binnings);
        if (observed_categories(c.codes) < 2) {
            warn("MCE matrix: skipping degenerate feature '" + f + "'");
            out.skipped.push_back(f);
            continue;
        }
        names.push_back(f);
        cats.push_back(std::move(c));
    }
    const std::size_t k = cats.size();
    if (k < 2) throw_data("MCE matrix needs at least 2 usable features");

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) pairs.emplace_back(i, j);
    }
    Matrix raw(k, k);
    parallel_for(pairs.size(), [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        const double v = mutual_conditional_entropy(tally(cats[i], cats[j]));
        raw(i, j) = v;
        raw(j, i) = v;
    });

    out.dendrogram = agglomerate(raw, linkage, names);
    const std::vector<std::size_t> order = out.dendrogram.leaf_order();
    out.values = Matrix(k, k);
    for (std::size_t a = 0; a < k; ++a) {
        out.features.push_back(names[order[a]]);
        for (std::size_t b = 0; b < k; ++b) out.values(a, b) = raw(order[a], order[b]);
    }
    return out;
}

void write_mce_csv(std::ostream& out, const MceMatrix& mce) {
    std::vector<std::string> header{"feature"};
    header.insert(header.end(), mce.features.begin(), mce.features.end());
    csv::write_row(out, header);
    for (std::size_t i = 0; i < mce.features.size(); ++i) {
        std::vector<std::string> row{mce.features[i]};
        for (std::size_t j = 0; j < mce.features.size(); ++j) row.push_back(csv::format_double(mce.values(i, j)));
        csv::write_row(out, row);
    }
}

nlohmann::json mce_groups_json(const MceMatrix& mce, std::size_t k) {
    const FeatureGroups groups = cut(mce.dendrogram, std::min(k, mce.dendrogram.n_leaves()));
    nlohmann::json j;
    j["order"] = mce.features;
    j["k"] = groups.k;
    j["groups"] = groups.groups;
    j["skipped"] = mce.skipped;
    j["dendrogram"] = mce.dendrogram.to_json();
    j["newick"] = mce.dendrogram.to_newick();
    return j;
}

std::vector<LabelAssociation> rank_features_by_label_association(const LabeledDataset& ds,
                                                                 std::span<const std::string> features,
                                                                 const BinningSet& binnings) {
    if (ds.n_labels() < 2) throw_data("label association needs at least 2 labels");
    const Categorization labels = categorize_column(ds.table(), ds.label_column(), binnings);
    std::vector<LabelAssociation> out;
    for (const auto& f : features) {
        if (f == ds.label_column()) continue;
        Categorization lab = labels;
        Categorization feat = categorize_column(ds.table(), f, binnings);
        mask_jointly_present(lab, feat);
        if (observed_categories(feat.codes) < 2 || observed_categories(lab.codes) < 2) {
            warn("label association: excluding degenerate feature '" + f + "'");
            continue;
        }
        const ContingencyTable t = tally(lab, feat);
        out.push_back({f, directed_conditional_entropy(t, Direction::row_to_col),
                       directed_conditional_entropy(t, Direction::col_to_row)});
    }
    std::sort(out.begin(), out.end(), [](const LabelAssociation& a, const LabelAssociation& b) {
        if (a.label_to_feature != b.label_to_feature) return a.label_to_feature < b.label_to_feature;
        return a.feature < b.feature;
    });
    return out;
}

void write_label_association_csv(std::ostream& out, const std::vector<LabelAssociation>& ranking) {
    csv::write_row(out, {"rank", "feature", "label_to_feature", "feature_to_label"});
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        csv::write_row(out, {std::to_string(i + 1), ranking[i].feature, csv::format_double(ranking[i].label_to_feature),
                             csv::format_double(ranking[i].feature_to_label)});
    }
}

}  // namespace ceda
