#include "ceda/chain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "ceda/csv.hpp"
#include "ceda/error.hpp"
#include "ceda/log.hpp"
#include "ceda/parallel.hpp"
#include "ceda/rng.hpp"

namespace ceda {

void FeatureChain::validate(const DataTable& table) const {
    if (links.empty()) throw_config("chain: empty chain");
    for (std::size_t i = 0; i < links.size(); ++i) {
        const auto& set = links[i].set;
        const std::string where = "chain.links[" + std::to_string(i) + "]";
        if (set.features.empty()) throw_config(where + ".features: empty feature set");
        for (const auto& f : set.features) {
            if (!table.has_column(f)) throw_config(where + ".features: unknown feature '" + f + "'");
        }
        links[i].config.validate();
    }
}

std::size_t CompositeCategory::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::string OrderedCategoryTable::row_name(std::size_t r) const {
    const CompositeCategory& row = rows.at(r);
    std::string name = row.certain ? "" : "*";
    if (row.sets.size() == 1) return name + label_set_display(row.sets.front(), label_names);
    for (std::size_t i = 0; i < row.sets.size(); ++i) {
        if (i) name += "-";
        name += label_set_token(row.sets[i], label_names);
    }
    return name;
}

std::vector<std::size_t> OrderedCategoryTable::column_sums() const {
    std::vector<std::size_t> sums(label_names.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t l = 0; l < sums.size(); ++l) sums[l] += row.counts[l];
    }
    return sums;
}

double OrderedCategoryTable::certain_fraction() const {
    std::size_t all = 0;
    std::size_t certain = 0;
    for (const auto& row : rows) {
        all += row.total();
        if (row.certain) certain += row.total();
    }
    return all == 0 ? 1.0 : static_cast<double>(certain) / static_cast<double>(all);
}

std::optional<std::size_t> ChainResult::point_index(std::size_t row_id) const {
    auto it = std::find(row_ids.begin(), row_ids.end(), row_id);
    if (it == row_ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - row_ids.begin());
}

namespace {

struct RefinementKey {
    std::size_t parent;
    std::vector<int> set;

    bool operator<(const RefinementKey& o) const {
        if (parent != o.parent) return parent < o.parent;
        if (set == o.set) return false;
        return label_set_less(set, o.set);
    }
};

}  // namespace

ChainResult chain_categories(const LabeledDataset& test, const LabeledDataset& train, const FeatureChain& chain,
                             const ChainOptions& options) {
    chain.validate(train.table());
    if (test.labels() != train.labels()) throw_data("chain: test labels differ from the training label space");

    std::vector<std::string> all_features;
    for (const auto& link : chain.links) {
        for (const auto& f : link.set.features) {
            if (std::find(all_features.begin(), all_features.end(), f) == all_features.end()) all_features.push_back(f);
        }
    }
    for (const auto& f : all_features) {
        if (!test.table().has_column(f)) throw_data("chain: test data lacks feature '" + f + "'");
    }
    const std::vector<std::size_t> keep = test.table().complete_rows(all_features);
    if (keep.empty()) throw_data("chain: no test row has every chain feature");
    if (keep.size() < test.n_rows()) {
        warn("chain: dropped " + std::to_string(test.n_rows() - keep.size()) + " test row(s) with missing features");
    }
    const LabeledDataset used = test.select_rows(keep);
    const std::size_t n = used.n_rows();

    ChainResult out;
    out.row_ids = used.table().row_ids();
    out.true_labels = used.label_codes();
    out.placement.assign(n, {});

    std::vector<std::vector<std::vector<int>>> predicted;  // [link][point]
    for (std::size_t i = 0; i < chain.links.size(); ++i) {
        const ChainLink& link = chain.links[i];
        LetOptions let = options.let;
        let.seed = derive_seed(options.let.seed, i);
        let.zscore = options.zscore;
        LabelTree tree = build_let(train, link.set.features, let);
        TreeClassifier classifier(train, link.set.features, tree, link.config, options.zscore);
        PredictiveMap map = predictive_map(used, classifier, link.set.name);
        if (map.points.size() != n) throw_computation("chain: predictive map lost test points");
        std::vector<std::vector<int>> sets(n);
        for (std::size_t p = 0; p < n; ++p) sets[p] = map.points[p].prediction.labels;
        predicted.push_back(std::move(sets));
        out.trees.push_back(std::move(tree));
        out.maps.push_back(std::move(map));
    }

    const std::size_t L = used.n_labels();
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), std::size_t{0});
    for (std::size_t d = 0; d < chain.links.size(); ++d) {
        OrderedCategoryTable table;
        table.depth = d + 1;
        table.label_names = used.labels();
        for (std::size_t i = 0; i <= d; ++i) table.feature_sets.push_back(chain.links[i].set.name);

        std::map<RefinementKey, std::vector<std::size_t>> groups;
        for (std::size_t p : active) {
            const std::size_t parent = d == 0 ? 0 : out.placement[p].back();
            groups[{parent, predicted[d][p]}].push_back(p);
        }
        const OrderedCategoryTable* previous = d == 0 ? nullptr : &out.tables.back();
        for (const auto& [key, members] : groups) {
            CompositeCategory row;
            if (previous) {
                row.sets = previous->rows[key.parent].sets;
                row.parent = key.parent;
            }
            row.sets.push_back(key.set);
            row.counts.assign(L, 0);
            for (std::size_t p : members) ++row.counts[static_cast<std::size_t>(out.true_labels[p])];
            row.certain = std::count_if(row.counts.begin(), row.counts.end(), [](std::size_t c) { return c > 0; }) == 1;
            const std::size_t r = table.rows.size();
            for (std::size_t p : members) out.placement[p].push_back(r);
            table.rows.push_back(std::move(row));
        }

        std::vector<std::size_t> next;
        for (std::size_t p : active) {
            if (!table.rows[out.placement[p].back()].certain) next.push_back(p);
        }
        out.tables.push_back(std::move(table));
        active = std::move(next);
    }
    return out;
}

std::string_view to_string(DissectionCase c) {
    switch (c) {
        case DissectionCase::certain_coherent: return "certainty-coherent";
        case DissectionCase::certain_incoherent: return "certainty-incoherent";
        case DissectionCase::uncertain_coherent: return "uncertainty-coherent";
        case DissectionCase::uncertain_incoherent: return "uncertainty-incoherent";
    }
    return "unknown";
}

std::size_t DissectionReport::total() const { return std::accumulate(totals.begin(), totals.end(), std::size_t{0}); }

DissectionReport dissect_external(const ExternalPredictions& external, const ChainResult& chain) {
    if (chain.tables.empty()) throw_data("dissection needs at least one chain table");
    std::set<std::size_t> chain_ids(chain.row_ids.begin(), chain.row_ids.end());
    for (const auto& [id, label] : external) {
        if (!chain_ids.count(id)) throw_data("dissection: external row id " + std::to_string(id) + " is not a test point");
    }

    DissectionReport report;
    report.label_names = chain.tables.front().label_names;
    for (std::size_t p = 0; p < chain.row_ids.size(); ++p) {
        auto it = external.find(chain.row_ids[p]);
        if (it == external.end()) {
            throw_data("dissection: no external prediction for row id " + std::to_string(chain.row_ids[p]));
        }
        DissectionRecord rec;
        rec.row_id = chain.row_ids[p];
        rec.external = it->second;
        rec.true_label = chain.true_labels[p];
        rec.depth = chain.placement[p].size();
        rec.row = chain.placement[p].back();
        const OrderedCategoryTable& table = chain.tables[rec.depth - 1];
        const CompositeCategory& row = table.rows[rec.row];
        rec.category = table.row_name(rec.row);
        rec.certain = row.certain;
        const auto& last = row.sets.back();
        rec.coherent = std::binary_search(last.begin(), last.end(), rec.external);
        rec.kase = rec.certain ? (rec.coherent ? DissectionCase::certain_coherent : DissectionCase::certain_incoherent)
                               : (rec.coherent ? DissectionCase::uncertain_coherent
                                               : DissectionCase::uncertain_incoherent);
        ++report.totals[static_cast<std::size_t>(rec.kase)];
        report.records.push_back(std::move(rec));
    }
    return report;
}

ExternalPredictions read_external_predictions(std::istream& in, const std::vector<std::string>& label_names) {
    const csv::Document doc = csv::read(in);
    auto column = [&](std::string_view name) {
        auto it = std::find(doc.header.begin(), doc.header.end(), name);
        if (it == doc.header.end()) throw_data("external predictions lack a '" + std::string(name) + "' column");
        return static_cast<std::size_t>(it - doc.header.begin());
    };
    const std::size_t id_col = column("row_id");
    const std::size_t label_col = column("predicted_label");
    ExternalPredictions out;
    for (std::size_t r = 0; r < doc.rows.size(); ++r) {
        const auto& row = doc.rows[r];
        const std::string where = "external predictions line " + std::to_string(doc.line_numbers[r]);
        if (row.size() <= std::max(id_col, label_col)) throw_data(where + ": too few fields");
        std::size_t id = 0;
        const std::string& id_text = row[id_col];
        auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
        if (ec != std::errc{} || ptr != id_text.data() + id_text.size()) {
            throw_data(where + ": bad row_id '" + id_text + "'");
        }
        auto lit = std::find(label_names.begin(), label_names.end(), row[label_col]);
        if (lit == label_names.end()) throw_data(where + ": unknown label '" + row[label_col] + "'");
        if (!out.emplace(id, static_cast<int>(lit - label_names.begin())).second) {
            throw_data(where + ": duplicate row_id " + id_text);
        }
    }
    return out;
}

void write_external_predictions(std::ostream& out, const ExternalPredictions& predictions,
                                const std::vector<std::string>& label_names) {
    csv::write_row(out, {"row_id", "predicted_label"});
    for (const auto& [id, label] : predictions) {
        csv::write_row(out, {std::to_string(id), label_names.at(static_cast<std::size_t>(label))});
    }
}

ExternalPredictions knn_majority_predict(const LabeledDataset& train, const LabeledDataset& test,
                                         std::span<const std::string> features, std::size_t k, bool zscore) {
    if (k < 1) throw_config("knn: k must be >= 1");
    const Standardizer scaler = zscore ? Standardizer::fit(train.table(), features) : Standardizer::identity(features);
    const FeatureMatrix ref = extract_features(train.table(), features, scaler);
    if (ref.kept.empty()) throw_data("knn: no complete training row");
    std::vector<int> ref_codes;
    for (std::size_t r : ref.kept) ref_codes.push_back(train.label_codes()[r]);
    const FeatureMatrix query = extract_features(test.table(), features, scaler);
    if (query.kept.size() < test.n_rows()) {
        warn("knn: skipped " + std::to_string(test.n_rows() - query.kept.size()) + " test row(s) with missing features");
    }

    const std::size_t m = ref.values.rows();
    const std::size_t kk = std::min(k, m);
    const std::size_t L = train.n_labels();
    std::vector<int> predicted(query.kept.size());
    parallel_for(query.kept.size(), [&](std::size_t q) {
        const auto x = query.values.row(q);
        std::vector<double> dist(m);
        for (std::size_t i = 0; i < m; ++i) {
            const auto y = ref.values.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - y[j]) * (x[j] - y[j]);
            dist[i] = s;
        }
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                          [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
        std::vector<std::size_t> votes(L, 0);
        for (std::size_t i = 0; i < kk; ++i) ++votes[static_cast<std::size_t>(ref_codes[order[i]])];
        const std::size_t best = *std::max_element(votes.begin(), votes.end());
        // neighbours are in distance order, so the first tied label seen is the closest one
        for (std::size_t i = 0; i < kk; ++i) {
            const int c = ref_codes[order[i]];
            if (votes[static_cast<std::size_t>(c)] == best) {
                predicted[q] = c;
                break;
            }
        }
    });

    ExternalPredictions out;
    for (std::size_t q = 0; q < query.kept.size(); ++q) out[test.table().row_ids()[query.kept[q]]] = predicted[q];
    return out;
}

void write_category_table_csv(std::ostream& out, const OrderedCategoryTable& table) {
    std::string title;
    for (std::size_t i = 0; i < table.feature_sets.size(); ++i) {
        if (i) title += "->";
        title += table.feature_sets[i];
    }
    std::vector<std::string> header{title.empty() ? "category" : title};
    header.insert(header.end(), table.label_names.begin(), table.label_names.end());
    csv::write_row(out, header);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::vector<std::string> row{table.row_name(r)};
        for (std::size_t c : table.rows[r].counts) row.push_back(std::to_string(c));
        csv::write_row(out, row);
    }
}

nlohmann::json chain_json(const ChainResult& chain) {
    nlohmann::json j;
    nlohmann::json tables = nlohmann::json::array();
    for (const auto& t : chain.tables) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const auto& row = t.rows[r];
            nlohmann::json e{{"name", t.row_name(r)}, {"counts", row.counts}, {"certain", row.certain}};
            if (row.parent) e["parent"] = *row.parent;
            rows.push_back(e);
        }
        tables.push_back({{"depth", t.depth},
                          {"feature_sets", t.feature_sets},
                          {"certain_fraction", t.certain_fraction()},
                          {"rows", rows}});
    }
    j["tables"] = tables;
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : chain.trees) trees.push_back(t.to_newick());
    j["trees"] = trees;
    return j;
}

void write_dissection_csv(std::ostream& out, const DissectionReport& report) {
    csv::write_row(out, {"row_id", "external", "true_label", "category", "depth", "certain", "coherent", "case"});
    for (const auto& r : report.records) {
        csv::write_row(out, {std::to_string(r.row_id), report.label_names.at(static_cast<std::size_t>(r.external)),
                             report.label_names.at(static_cast<std::size_t>(r.true_label)), r.category,
                             std::to_string(r.depth), r.certain ? "1" : "0", r.coherent ? "1" : "0",
                             std::string(to_string(r.kase))});
    }
}

nlohmann::json dissection_json(const DissectionReport& report) {
    nlohmann::json totals;
    for (std::size_t c = 0; c < 4; ++c) totals[std::string(to_string(static_cast<DissectionCase>(c)))] = report.totals[c];
    std::size_t errors = 0;
    std::size_t errors_uncertain = 0;
    std::size_t correct = 0;
    std::size_t correct_uncertain = 0;
    for (const auto& r : report.records) {
        if (r.external == r.true_label) {
            ++correct;
            if (!r.certain) ++correct_uncertain;
        } else {
            ++errors;
            if (!r.certain) ++errors_uncertain;
        }
    }
    return {{"totals", totals},
            {"points", report.total()},
            {"external_errors", errors},
            {"external_errors_in_uncertain", errors_uncertain},
            {"external_correct", correct},
            {"external_correct_in_uncertain", correct_uncertain}};
}

}  // namespace ceda
