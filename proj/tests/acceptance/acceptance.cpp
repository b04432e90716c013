// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/association.hpp"
#include "ceda/chain.hpp"
#include "ceda/discretize.hpp"
#include "ceda/hclust.hpp"
#include "ceda/let.hpp"
#include "ceda/log.hpp"
#include "ceda/pmap.hpp"
#include "ceda/rma.hpp"
#include "ceda/rng.hpp"
#include "ceda/synth.hpp"

namespace fs = std::filesystem;
using namespace ceda;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream o;
    o.precision(digits);
    o << v;
    return o.str();
}

LabeledDataset clouds(std::vector<std::vector<double>> centers, double sd, std::size_t n, std::uint64_t seed) {
    GaussCloudsParams p;
    p.centers = std::move(centers);
    p.sd = {sd};
    p.n_per_label = n;
    return synth_generate(p, seed);
}

std::pair<LabeledDataset, LabeledDataset> halves(const LabeledDataset& ds, std::uint64_t seed) {
    SplitSpec s;
    s.seed = seed;
    return split_train_test(ds, s);
}

// ---------------------------------------------------------------- entropy

double oracle_dce(const std::vector<std::vector<double>>& t) {
    // H(col | row) / H(col) straight from the counts
    double n = 0.0;
    std::vector<double> row(t.size(), 0.0);
    std::vector<double> col(t[0].size(), 0.0);
    for (std::size_t r = 0; r < t.size(); ++r) {
        for (std::size_t c = 0; c < t[r].size(); ++c) {
            n += t[r][c];
            row[r] += t[r][c];
            col[c] += t[r][c];
        }
    }
    double h_cond = 0.0;
    for (std::size_t r = 0; r < t.size(); ++r) {
        for (std::size_t c = 0; c < t[r].size(); ++c) {
            if (t[r][c] > 0) h_cond += t[r][c] / n * std::log(row[r] / t[r][c]);
        }
    }
    double h = 0.0;
    for (double v : col) {
        if (v > 0) h += v / n * std::log(n / v);
    }
    return h_cond / h;
}

Outcome entropy_correctness() {
    Rng rng(20240611);
    double worst = 0.0;
    std::size_t tables = 0;
    while (tables < 1000) {
        const std::size_t r = 2 + rng.index(5);
        const std::size_t c = 2 + rng.index(5);
        std::vector<std::vector<std::int64_t>> counts(r, std::vector<std::int64_t>(c));
        std::vector<std::vector<double>> dense(r, std::vector<double>(c));
        std::vector<std::vector<double>> transposed(c, std::vector<double>(r));
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                counts[i][j] = rng.uniform() < 0.2 ? 0 : static_cast<std::int64_t>(rng.index(30));
                dense[i][j] = transposed[j][i] = static_cast<double>(counts[i][j]);
            }
        }
        auto occupied = [](const std::vector<std::vector<double>>& t) {
            std::set<std::size_t> cols;
            for (const auto& row : t) {
                for (std::size_t j = 0; j < row.size(); ++j) {
                    if (row[j] > 0) cols.insert(j);
                }
            }
            return cols.size();
        };
        if (occupied(dense) < 2 || occupied(transposed) < 2) continue;
        const ContingencyTable t = make_contingency(counts);
        worst = std::max(worst, std::abs(directed_conditional_entropy(t, Direction::row_to_col) - oracle_dce(dense)));
        worst = std::max(worst, std::abs(directed_conditional_entropy(t, Direction::col_to_row) - oracle_dce(transposed)));
        ++tables;
    }

    // MCE matrix properties on a categorical table with planted dependence
    const std::size_t n = 400;
    std::vector<std::vector<std::string>> cells(5, std::vector<std::string>(n));
    const std::vector<std::string> alphabet{"a", "b", "c", "d", "e"};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = rng.index(4);
        cells[0][i] = alphabet[base];
        cells[1][i] = alphabet[rng.uniform() < 0.8 ? base : rng.index(4)];
        cells[2][i] = alphabet[rng.index(3)];
        cells[3][i] = alphabet[(base + rng.index(2)) % 5];
        cells[4][i] = alphabet[rng.index(5)];
    }
    auto build = [&](const std::vector<std::vector<std::string>>& cols, const std::vector<std::size_t>& order) {
        std::vector<Column> columns;
        for (std::size_t k : order) columns.push_back(make_categorical("v" + std::to_string(k), cols[k]));
        return DataTable(columns);
    };
    std::vector<std::size_t> order{0, 1, 2, 3, 4};
    const DataTable base_table = build(cells, order);
    const auto names = base_table.names();
    const MceMatrix base = mce_matrix(base_table, names, {});
    bool symmetric = true;
    for (std::size_t i = 0; i < base.features.size(); ++i) {
        if (base.values(i, i) != 0.0) symmetric = false;
        for (std::size_t j = 0; j < base.features.size(); ++j) {
            if (base.values(i, j) != base.values(j, i)) symmetric = false;
        }
    }
    double perm_worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto relabeled = cells;
        for (auto& col : relabeled) {
            std::vector<std::string> perm = alphabet;
            shuffle(perm, rng);
            for (auto& v : col) v = perm[static_cast<std::size_t>(v[0] - 'a')];
        }
        shuffle(order, rng);
        const DataTable t = build(relabeled, order);
        const auto tn = t.names();
        const MceMatrix m = mce_matrix(t, tn, {});
        for (const auto& a : names) {
            for (const auto& b : names) {
                const double d = std::abs(m.values(m.index_of(a), m.index_of(b)) -
                                          base.values(base.index_of(a), base.index_of(b)));
                perm_worst = std::max(perm_worst, d);
            }
        }
    }
    const bool pass = worst <= 1e-12 && symmetric && perm_worst <= 1e-12;
    return {pass, "max |DCE - oracle| = " + fmt(worst) + " over 1000 tables; symmetric/zero-diagonal = " +
                      (symmetric ? "yes" : "no") + "; max relabel drift = " + fmt(perm_worst)};
}

Outcome mce_ordering() {
    int wins = 0;
    for (int run = 0; run < 50; ++run) {
        MagnusParams p;
        p.labels = 4;
        p.n_per_label = 500;
        const LabeledDataset ds = synth_generate(p, derive_seed(77, run));
        const std::vector<std::string> f{"spin_dir", "pfx_x", "noise"};
        const BinningSet bins = build_binnings(ds.table(), f);
        const double signal = mutual_conditional_entropy(contingency_table(ds.table(), "spin_dir", "pfx_x", bins));
        const double noise = mutual_conditional_entropy(contingency_table(ds.table(), "noise", "pfx_x", bins));
        if (signal < noise) ++wins;
    }
    return {wins == 50, std::to_string(wins) + "/50 runs with MCE(spin_dir, pfx_x) < MCE(noise, pfx_x)"};
}

// ---------------------------------------------------------------- clustering

std::vector<Merge> brute_force(const Matrix& d, Linkage linkage) {
    struct Cluster {
        std::size_t slot;
        std::size_t node;
        std::vector<std::size_t> members;
    };
    const std::size_t n = d.rows();
    std::vector<Cluster> active;
    for (std::size_t i = 0; i < n; ++i) active.push_back({i, i, {i}});
    std::vector<Merge> merges;
    while (active.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t ba = 0;
        std::size_t bb = 0;
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = 0; b < active.size(); ++b) {
                if (active[a].slot >= active[b].slot) continue;
                double v = 0.0;
                if (linkage == Linkage::average) {
                    double s = 0.0;
                    for (std::size_t i : active[a].members) {
                        for (std::size_t j : active[b].members) s += d(i, j);
                    }
                    v = s / static_cast<double>(active[a].members.size() * active[b].members.size());
                } else {
                    v = linkage == Linkage::complete ? -1.0 : std::numeric_limits<double>::infinity();
                    for (std::size_t i : active[a].members) {
                        for (std::size_t j : active[b].members) {
                            v = linkage == Linkage::complete ? std::max(v, d(i, j)) : std::min(v, d(i, j));
                        }
                    }
                }
                const auto key = std::make_pair(active[a].slot, active[b].slot);
                if (v < best || (v == best && key < std::make_pair(active[ba].slot, active[bb].slot))) {
                    best = v;
                    ba = a;
                    bb = b;
                }
            }
        }
        Merge m;
        m.left = active[ba].node;
        m.right = active[bb].node;
        m.height = best;
        m.size = active[ba].members.size() + active[bb].members.size();
        merges.push_back(m);
        active[ba].members.insert(active[ba].members.end(), active[bb].members.begin(), active[bb].members.end());
        active[ba].node = n + merges.size() - 1;
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bb));
    }
    return merges;
}

Outcome clustering_oracle() {
    Rng rng(4242);
    std::size_t matched = 0;
    std::size_t total = 0;
    for (int k = 0; k < 500; ++k) {
        const std::size_t n = 2 + rng.index(7);
        Matrix d(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = static_cast<double>(rng.index(17)) / 64.0;
        }
        bool ok = true;
        for (Linkage l : {Linkage::average, Linkage::complete, Linkage::single}) {
            const Dendrogram got = agglomerate(d, l);
            const std::vector<Merge> want = brute_force(d, l);
            if (got.merges.size() != want.size()) ok = false;
            for (std::size_t s = 0; ok && s < want.size(); ++s) {
                const Merge& a = got.merges[s];
                const Merge& b = want[s];
                ok = a.left == b.left && a.right == b.right && a.height == b.height && a.size == b.size;
            }
        }
        matched += ok ? 1 : 0;
        ++total;
    }
    return {matched == total, std::to_string(matched) + "/" + std::to_string(total) +
                                  " matrices identical to the brute-force oracle (average, complete, single)"};
}

// ---------------------------------------------------------------- LET

Outcome let_recovery() {
    int wins = 0;
    for (int run = 0; run < 50; ++run) {
        const LabeledDataset ds = clouds({{0, 0}, {1, 0}, {10, 10}}, 0.1, 200, derive_seed(11, run));
        const auto [train, test] = halves(ds, derive_seed(12, run));
        LetOptions opts;
        opts.samples_per_triplet = 200;
        opts.seed = derive_seed(13, run);
        const LabelTree tree = build_let(train, std::vector<std::string>{"f1", "f2"}, opts);
        if (tree.node(3).labels == std::vector<int>{0, 1}) ++wins;
    }
    return {wins == 50, std::to_string(wins) + "/50 runs join L1 and L2 first"};
}

// ---------------------------------------------------------------- predictive map

struct MapStats {
    std::size_t points = 0;
    std::size_t singleton_correct = 0;
    std::size_t singletons = 0;
    std::size_t shared = 0;
};

MapStats map_stats(const PredictiveMap& map) {
    MapStats s;
    for (const auto& p : map.points) {
        ++s.points;
        const auto& labels = p.prediction.labels;
        if (labels.size() == 1) {
            ++s.singletons;
            if (labels[0] == p.true_label) ++s.singleton_correct;
        }
        if (labels.size() == map.label_names.size()) ++s.shared;
    }
    return s;
}

PredictiveMap run_map(const LabeledDataset& ds, std::uint64_t seed, const CompetitionConfig& cfg) {
    const auto [train, test] = halves(ds, derive_seed(seed, 1));
    LetOptions opts;
    opts.seed = derive_seed(seed, 2);
    const std::vector<std::string> f{"f1", "f2"};
    const LabelTree tree = build_let(train, f, opts);
    return predictive_map(test, tree, train, f, cfg);
}

Outcome predictive_map_behavior() {
    CompetitionConfig standard;
    standard.k_star = 20;
    standard.c_lower = 0.65;
    standard.c_upper = 100.0 / 65.0;
    standard.outlier_enabled = false;
    CompetitionConfig forced = standard;
    forced.c_lower = forced.c_upper = 1.0;

    double worst_separable = 1.0;
    MapStats overlap_total;
    std::size_t forced_points = 0;
    std::size_t forced_singletons = 0;
    for (int run = 0; run < 10; ++run) {
        const LabeledDataset sep =
            clouds({{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 2}}, 0.05, 200, derive_seed(21, run));
        const MapStats s = map_stats(run_map(sep, derive_seed(22, run), standard));
        worst_separable = std::min(worst_separable, static_cast<double>(s.singleton_correct) / s.points);

        const LabeledDataset mixed = clouds({{0, 0}, {0, 0}}, 1.0, 200, derive_seed(23, run));
        const MapStats o = map_stats(run_map(mixed, derive_seed(24, run), standard));
        overlap_total.points += o.points;
        overlap_total.shared += o.shared;

        for (const LabeledDataset* ds : {&sep, &mixed}) {
            const MapStats f = map_stats(run_map(*ds, derive_seed(25, run), forced));
            forced_points += f.points;
            forced_singletons += f.singletons;
        }
    }
    const double shared = static_cast<double>(overlap_total.shared) / overlap_total.points;
    const bool pass = worst_separable >= 0.99 && shared >= 0.80 && forced_singletons == forced_points;
    return {pass, "separable singleton-correct (worst of 10) = " + fmt(worst_separable) +
                      "; overlapping stop at {both} = " + fmt(shared) + "; thresholds (1,1) singletons = " +
                      std::to_string(forced_singletons) + "/" + std::to_string(forced_points)};
}

// ---------------------------------------------------------------- chain

bool conserved(const ChainResult& chain) {
    for (std::size_t d = 1; d < chain.tables.size(); ++d) {
        const auto& parent = chain.tables[d - 1];
        const auto& child = chain.tables[d];
        std::vector<std::vector<std::size_t>> sums(parent.rows.size(),
                                                   std::vector<std::size_t>(parent.label_names.size(), 0));
        for (const auto& row : child.rows) {
            if (!row.parent) return false;
            for (std::size_t l = 0; l < row.counts.size(); ++l) sums[*row.parent][l] += row.counts[l];
        }
        for (std::size_t r = 0; r < parent.rows.size(); ++r) {
            const bool refined = std::any_of(sums[r].begin(), sums[r].end(), [](std::size_t v) { return v > 0; });
            if (parent.rows[r].certain) {
                if (refined) return false;
            } else if (sums[r] != parent.rows[r].counts) {
                return false;
            }
        }
    }
    return true;
}

Outcome chain_refinement() {
    double worst = 1.0;
    int conserved_runs = 0;
    for (int run = 0; run < 10; ++run) {
        const LabeledDataset ds = clouds({{0, 0}, {10, 0}, {10, 10}}, 1.0, 200, derive_seed(31, run));
        const auto [train, test] = halves(ds, derive_seed(32, run));
        CompetitionConfig cfg;
        cfg.outlier_enabled = false;
        FeatureChain chain;
        chain.links.push_back({{"set1", {"f1"}}, cfg});
        chain.links.push_back({{"set2", {"f2"}}, cfg});
        ChainOptions opts;
        opts.let.seed = derive_seed(33, run);
        const ChainResult result = chain_categories(test, train, chain, opts);
        worst = std::min(worst, result.tables[1].certain_fraction());
        if (conserved(result)) ++conserved_runs;
    }
    return {worst >= 0.99 && conserved_runs == 10,
            "depth-2 certain fraction (worst of 10) = " + fmt(worst) + "; exact conservation in " +
                std::to_string(conserved_runs) + "/10 runs"};
}

// ---------------------------------------------------------------- dissection

Outcome dissection() {
    int partitions = 0;
    int ordered = 0;
    std::string rates;
    for (int run = 0; run < 10; ++run) {
        const LabeledDataset ds =
            clouds({{0, 0}, {4, 0}, {0, 4}, {4, 4}, {4.5, 4.5}}, 0.5, 200, derive_seed(41, run));
        const auto [train, test] = halves(ds, derive_seed(42, run));
        FeatureChain chain;
        chain.links.push_back({{"xy", {"f1", "f2"}}, {}});
        ChainOptions opts;
        opts.let.seed = derive_seed(43, run);
        const ChainResult result = chain_categories(test, train, chain, opts);
        const ExternalPredictions knn = knn_majority_predict(train, test, std::vector<std::string>{"f1", "f2"});
        const DissectionReport report = dissect_external(knn, result);
        if (report.total() == test.n_rows() && report.records.size() == test.n_rows()) ++partitions;
        std::size_t err = 0, err_unc = 0, ok = 0, ok_unc = 0;
        for (const auto& r : report.records) {
            if (r.external == r.true_label) {
                ++ok;
                ok_unc += r.certain ? 0 : 1;
            } else {
                ++err;
                err_unc += r.certain ? 0 : 1;
            }
        }
        const double err_rate = err ? static_cast<double>(err_unc) / err : 0.0;
        const double ok_rate = ok ? static_cast<double>(ok_unc) / ok : 0.0;
        if (err > 0 && err_rate > ok_rate) ++ordered;
        if (run == 0) rates = "run 0: errors uncertain " + fmt(err_rate) + " vs correct " + fmt(ok_rate);
    }
    return {partitions == 10 && ordered == 10, "four-case totals exact in " + std::to_string(partitions) +
                                                   "/10 runs; errors more often uncertain in " +
                                                   std::to_string(ordered) + "/10 runs (" + rates + ")"};
}

// ---------------------------------------------------------------- RMA

LabeledDataset magnus(std::size_t n, std::uint64_t seed, std::size_t labels = 1, double turn = 180.0) {
    MagnusParams p;
    p.labels = labels;
    p.spin_dir_min = 90.0;
    p.spin_dir_max = 90.0 + turn;
    p.n_per_label = n / labels;
    return synth_generate(p, seed);
}

struct RmaRun {
    double mean_error = 0.0;
    double rmse = 0.0;
};

RmaRun rma_run(const LabeledDataset& train, const LabeledDataset& test) {
    ResponseSpec spec;
    spec.responses = {"pfx_x", "pfx_z"};
    spec.covariates = {"spin_dir", "spin_rate"};
    const std::vector<std::string> majors{"spin_dir", "spin_rate"};
    BinningSet bins;
    for (const auto& m : majors) bins[m] = build_histogram(train.table().column(m).values, 8, m);
    const LocalityLattice lattice = build_locality_lattice(train.table(), spec, majors, bins);
    const RmaModel model(train.table(), lattice, {}, {}, 20);
    const auto preds = model.predict_table(test.table());
    RmaRun out;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double ex = preds[i].response[0] - test.table().column("pfx_x").values[i];
        const double ez = preds[i].response[1] - test.table().column("pfx_z").values[i];
        out.mean_error += std::sqrt(ex * ex + ez * ez);
        out.rmse += ex * ex + ez * ez;
    }
    out.mean_error /= static_cast<double>(preds.size());
    out.rmse = std::sqrt(out.rmse / static_cast<double>(preds.size()));
    return out;
}

Outcome rma_consistency() {
    const LabeledDataset test = magnus(2000, 5150);
    const RmaRun main = rma_run(magnus(5000, 5151), test);
    const RmaRun full_turn = rma_run(magnus(5000, 5151, 1, 360.0), magnus(2000, 5150, 1, 360.0));

    std::vector<double> rmse;
    for (std::size_t n : {1000, 2000, 4000, 8000}) rmse.push_back(rma_run(magnus(n, 5152 + n), test).rmse);
    bool monotone = true;
    for (std::size_t i = 1; i < rmse.size(); ++i) monotone &= rmse[i] <= rmse[i - 1] * 1.05;

    // locality: scramble responses and minor values of every row outside the query's rectangle
    const LabeledDataset train = magnus(2000, 5153, 3);
    const LabeledDataset queries = magnus(150, 5154, 3);
    ResponseSpec spec;
    spec.responses = {"pfx_x", "pfx_z"};
    spec.covariates = {"spin_dir", "spin_rate", "label"};
    const std::vector<std::string> majors{"spin_dir", "spin_rate"};
    BinningSet bins;
    for (const auto& m : majors) bins[m] = build_histogram(train.table().column(m).values, 6, m);
    const LocalityLattice lattice = build_locality_lattice(train.table(), spec, majors, bins);
    const std::vector<std::string> minors{"label"};
    const RmaModel model(train.table(), lattice, minors, {}, 20);
    const auto base = model.predict_table(queries.table());
    Rng rng(99);
    std::size_t checked = 0;
    std::size_t changed = 0;
    for (std::size_t q = 0; q < base.size(); ++q) {
        if (base[q].flagged()) continue;
        std::vector<bool> inside(train.n_rows(), false);
        for (std::size_t r : lattice.cells[base[q].cell].members) inside[r] = true;
        std::vector<Column> cols = train.table().columns();
        for (auto& c : cols) {
            if (c.name != "pfx_x" && c.name != "pfx_z" && c.name != "label") continue;
            for (std::size_t r = 0; r < c.values.size(); ++r) {
                if (inside[r]) continue;
                c.values[r] = c.name == "label" ? static_cast<double>(rng.index(c.levels.size())) : rng.normal(0, 5);
            }
        }
        const DataTable perturbed(cols, train.table().row_ids());
        const RmaModel other(perturbed, lattice, minors, {}, 20);
        std::vector<double> x{queries.table().column("spin_dir").values[q], queries.table().column("spin_rate").values[q]};
        const RmaPrediction p = other.predict(x, other.minor_keys(queries.table(), q));
        ++checked;
        if (p.response != base[q].response) ++changed;
    }

    const bool pass = main.mean_error < 0.05 && monotone && checked > 0 && changed == 0;
    std::string series;
    for (double v : rmse) series += (series.empty() ? "" : ", ") + fmt(v);
    return {pass, "mean error (N=5000, 8x8 bins, k*=20, half-turn spin_dir) = " + fmt(main.mean_error) +
                      " (full turn, not gated: " + fmt(full_turn.mean_error) + "); RMSE for N=1k,2k,4k,8k = [" +
                      series + "]; locality: " + std::to_string(changed) + " of " + std::to_string(checked) +
                      " unflagged predictions changed"};
}

Outcome error_metric_checks() {
    const LabeledDataset train = magnus(900, 61);
    ResponseSpec spec;
    spec.responses = {"pfx_x", "pfx_z"};
    const std::vector<std::string> majors{"spin_dir", "spin_rate"};
    const LocalityLattice lattice =
        build_locality_lattice(train.table(), spec, majors, coarse_binnings(train.table(), majors));
    Rng rng(62);
    const std::size_t n = 300;
    Matrix pred(n, 2), truth(n, 2);
    std::vector<std::size_t> patch(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            truth(i, j) = rng.normal();
            pred(i, j) = truth(i, j) + rng.normal(0, 0.1);
        }
        patch[i] = rng.index(lattice.cells.size());
    }
    Matrix identity(2, 2);
    identity(0, 0) = identity(1, 1) = 1.0;
    const ErrorReport rep = error_metrics(pred, truth, patch, lattice, train.table(), identity);
    double worst = std::abs(rep.pooled.correlated_global - (rep.pooled.mse[0] + rep.pooled.mse[1]));
    for (const auto& pe : rep.patches) worst = std::max(worst, std::abs(pe.correlated_global - (pe.mse[0] + pe.mse[1])));

    // a patch whose two responses are identical has a singular covariance
    std::vector<Column> cols = train.table().columns();
    Column& x = cols[static_cast<std::size_t>(*train.table().find("pfx_x"))];
    Column& z = cols[static_cast<std::size_t>(*train.table().find("pfx_z"))];
    const std::size_t target = 4;
    for (std::size_t r : lattice.cells[target].members) z.values[r] = x.values[r];
    const DataTable singular(cols, train.table().row_ids());
    bool flagged = false;
    bool finite = false;
    bool aborted = false;
    try {
        const ErrorReport r2 = error_metrics(pred, truth, patch, lattice, singular);
        for (const auto& pe : r2.patches) {
            if (pe.patch == lattice.cells[target].name) {
                flagged = pe.ridge_patch;
                finite = pe.correlated_patch && std::isfinite(*pe.correlated_patch);
            }
        }
    } catch (const std::exception&) {
        aborted = true;
    }
    const bool pass = worst <= 1e-12 && flagged && finite && !aborted;
    return {pass, "max |metric(2, I) - sum of MSE| = " + fmt(worst) + "; ridge on singular patch " +
                      lattice.cells[target].name + ": " + (flagged ? "flagged" : "not flagged") +
                      (aborted ? ", aborted" : ", completed")};
}

// ---------------------------------------------------------------- OLS

std::vector<double> normal_equations(const Matrix& x, const std::vector<double>& y) {
    const std::size_t n = x.rows();
    const std::size_t q = x.cols() + 1;
    std::vector<std::vector<long double>> a(q, std::vector<long double>(q + 1, 0.0L));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<long double> row{1.0L};
        for (std::size_t j = 0; j < x.cols(); ++j) row.push_back(x(i, j));
        for (std::size_t r = 0; r < q; ++r) {
            for (std::size_t c = 0; c < q; ++c) a[r][c] += row[r] * row[c];
            a[r][q] += row[r] * y[i];
        }
    }
    for (std::size_t col = 0; col < q; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < q; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        }
        std::swap(a[col], a[piv]);
        for (std::size_t r = 0; r < q; ++r) {
            if (r == col) continue;
            const long double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c <= q; ++c) a[r][c] -= f * a[col][c];
        }
    }
    std::vector<double> beta(q);
    for (std::size_t r = 0; r < q; ++r) beta[r] = static_cast<double>(a[r][q] / a[r][r]);
    return beta;
}

Outcome ols_checks() {
    Rng rng(71);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 30 + rng.index(60);
        const std::size_t p = 1 + rng.index(4);
        Matrix x(n, p);
        std::vector<double> y(n);
        std::vector<double> truth(p + 1);
        for (auto& b : truth) b = rng.normal(0, 3);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = truth[0];
            for (std::size_t j = 0; j < p; ++j) {
                x(i, j) = rng.normal(rng.uniform(-5, 5), rng.uniform(0.5, 4));
                y[i] += truth[j + 1] * x(i, j);
            }
            y[i] += rng.normal(0, 0.5);
        }
        std::vector<std::string> names;
        for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
        const OlsFit fit = ols_fit_design(x, y, names);
        const auto oracle = normal_equations(x, y);
        worst = std::max(worst, std::abs(fit.intercept - oracle[0]));
        for (std::size_t j = 0; j < p; ++j) worst = std::max(worst, std::abs(fit.slopes[j] - oracle[j + 1]));
    }

    LinearSpeedParams lp;
    lp.noise_sd = 0.0;
    lp.alpha = {0.04, 0.5, -1.0};
    lp.beta1 = {-0.05, 0.1, 0.02};
    lp.beta2 = {0.92, 0.9, 0.95};
    const LabeledDataset exact = synth_generate(lp, 72);
    const std::vector<std::string> cov{"x0", "start_speed"};
    const auto fits = ols_fit(exact, "end_speed", cov);
    double coef_err = 0.0;
    double max_se = 0.0;
    for (std::size_t l = 0; l < fits.size(); ++l) {
        coef_err = std::max({coef_err, std::abs(fits[l].intercept - lp.alpha[l]),
                             std::abs(fits[l].slopes[0] - lp.beta1[l]), std::abs(fits[l].slopes[1] - lp.beta2[l])});
        max_se = std::max(max_se, fits[l].residual_se);
    }

    LinearSpeedParams noisy;
    const auto table_fits = ols_fit(synth_generate(noisy, 73), "end_speed", cov);
    std::ostringstream csv;
    write_ols_table_csv(csv, table_fits);
    std::istringstream lines(csv.str());
    std::string header;
    std::string first;
    std::getline(lines, header);
    std::getline(lines, first);
    std::ptrdiff_t marks = 0;
    for (std::size_t term = 0; term < 3; ++term) marks += table_fits[0].significant(term) ? 1 : 0;
    const bool layout = header == "label,intercept,x0,start_speed,residual_std_error,df" &&
                        std::count(first.begin(), first.end(), '*') == marks &&
                        first.substr(first.rfind(',') + 1) == std::to_string(table_fits[0].df);

    const bool pass = worst <= 1e-9 && coef_err <= 1e-9 && max_se <= 1e-9 && layout;
    return {pass, "max |coef - normal equations| = " + fmt(worst) + " over 100 instances; noiseless recovery error = " +
                      fmt(coef_err) + ", residual SE = " + fmt(max_se) + "; table layout " + (layout ? "ok" : "wrong") +
                      " (" + header + ")"};
}

// ---------------------------------------------------------------- CLI reproducibility

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream o;
    o << in.rdbuf();
    return o.str();
}

bool same_reports(const fs::path& a, const fs::path& b, std::string& why, bool skip_manifest = false) {
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
    std::set<std::string> other;
    for (const auto& e : fs::directory_iterator(b)) other.insert(e.path().filename().string());
    if (names != other) {
        why = "different file sets";
        return false;
    }
    for (const auto& n : names) {
        if (skip_manifest && n == "manifest.json") continue;
        std::string x = slurp(a / n);
        std::string y = slurp(b / n);
        if (n == "manifest.json") {
            auto jx = nlohmann::json::parse(x);
            auto jy = nlohmann::json::parse(y);
            jx.erase("timestamp");
            jy.erase("timestamp");
            x = jx.dump();
            y = jy.dump();
        }
        if (x != y) {
            why = n + " differs";
            return false;
        }
    }
    return true;
}

Outcome cli_reproducibility() {
    const fs::path root = fs::temp_directory_path() / "ceda_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string cli = CEDA_CLI_PATH;

    auto write = [&](const std::string& name, const nlohmann::json& j) {
        std::ofstream(root / name) << j.dump(2);
        return (root / name).string();
    };
    auto run = [&](const std::string& command, const std::string& config, const fs::path& out,
                   const std::string& extra = "") {
        const std::string line = "\"" + cli + "\" " + command + " --config \"" + config + "\" --out \"" + out.string() +
                                 "\" " + extra + " > \"" + (root / "log.txt").string() + "\" 2>&1";
        return std::system(line.c_str());
    };

    nlohmann::json clouds_cfg = {{"seed", 5},
                                 {"synth",
                                  {{"kind", "gauss-clouds"},
                                   {"centers", {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {1.2, 1.2}}},
                                   {"sd", {0.3}},
                                   {"n_per_label", 120}}}};
    nlohmann::json magnus_cfg = {{"seed", 6},
                                 {"synth", {{"kind", "magnus-manifold"}, {"labels", 3}, {"n_per_label", 600},
                                            {"label_spread", 0.5}, {"noise_sd", 0.01}}}};
    if (run("synth", write("synth_clouds.json", clouds_cfg), root / "clouds") != 0 ||
        run("synth", write("synth_magnus.json", magnus_cfg), root / "magnus") != 0) {
        return {false, "synth failed: " + slurp(root / "log.txt")};
    }

    nlohmann::json analysis = {
        {"seed", 9},
        {"dataset", {{"path", (root / "clouds" / "data.csv").string()}}},
        {"chain", {{{"name", "x"}, {"features", {"f1"}}}, {{"name", "y"}, {"features", {"f2"}}},
                   {{"name", "xy"}, {"features", {"f1", "f2"}}}}}};
    nlohmann::json rma = {{"seed", 9},
                          {"dataset", {{"path", (root / "magnus" / "data.csv").string()}}},
                          {"rma",
                           {{"responses", {"pfx_x", "pfx_z"}},
                            {"major_candidates", {"spin_dir", "spin_rate", "noise", "start_speed"}},
                            {"minor_candidates", {"label", "noise"}},
                            {"ols", {{"response", "pfx_x"}, {"covariates", {"spin_rate", "start_speed"}}}}}}};
    const std::string analysis_cfg = write("analysis.json", analysis);
    const std::string rma_cfg = write("rma.json", rma);

    const std::vector<std::pair<std::string, std::string>> commands{
        {"synth", write("synth_again.json", clouds_cfg)},
        {"mce", analysis_cfg},
        {"let", analysis_cfg},
        {"pmap", analysis_cfg},
        {"chain", analysis_cfg},
        {"dissect", analysis_cfg},
        {"rma", rma_cfg}};
    std::size_t identical = 0;
    std::string failures;
    for (const auto& [command, cfg] : commands) {
        const fs::path out = root / command;
        const fs::path saved = root / (command + "_first");
        const int ra = run(command, cfg, out);
        if (ra == 0) fs::rename(out, saved);
        const int rb = ra == 0 ? run(command, cfg, out) : ra;
        std::string why;
        if (ra != 0 || rb != 0) {
            failures += " " + command + "(exit " + std::to_string(ra) + ": " + slurp(root / "log.txt") + ")";
        } else if (!same_reports(saved, out, why)) {
            failures += " " + command + "(" + why + ")";
        } else {
            // worker count must not leak into any report
            fs::remove_all(saved);
            fs::rename(out, saved);
            run(command, cfg, out, "--threads 3");
            if (!same_reports(saved, out, why, true)) {
                failures += " " + command + "(--threads 3: " + why + ")";
            } else {
                ++identical;
            }
        }
    }
    return {identical == commands.size(), std::to_string(identical) + "/" + std::to_string(commands.size()) +
                                              " commands byte-identical on re-run (reports also identical with --threads 3)" +
                                              (failures.empty() ? "" : ";" + failures)};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget_seconds;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {"entropy-correctness", 5, entropy_correctness},
        {"mce-ordering-magnus", 10, mce_ordering},
        {"clustering-oracle", 10, clustering_oracle},
        {"let-recovery", 10, let_recovery},
        {"predictive-map-behavior", 30, predictive_map_behavior},
        {"chain-refinement", 30, chain_refinement},
        {"dissection", 30, dissection},
        {"rma-prediction-consistency", 60, rma_consistency},
        {"error-metrics", 5, error_metric_checks},
        {"ols", 5, ols_checks},
        {"cli-reproducibility", 60, cli_reproducibility},
    };

    WarningCapture quiet;
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = o.pass && in_time;
        if (!pass) ++failed;
        std::cout << (pass ? "PASS " : "FAIL ") << c.name << " (" << fmt(secs, 3) << " s of " << c.budget_seconds
                  << " s): " << o.detail << (in_time ? "" : " [over time budget]") << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
