#include "ceda/let.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "ceda/csv.hpp"
#include "ceda/error.hpp"
#include "ceda/log.hpp"
#include "ceda/parallel.hpp"
#include "ceda/rng.hpp"

namespace ceda {

std::size_t DominanceMatrix::pair_index(int a, int b) const {
    if (a > b) std::swap(a, b);
    const auto L = static_cast<std::size_t>(labels.size());
    const auto ua = static_cast<std::size_t>(a);
    const auto ub = static_cast<std::size_t>(b);
    // pairs before row a: sum_{i<a} (L - 1 - i)
    return ua * (2 * L - ua - 1) / 2 + (ub - ua - 1);
}

std::string DominanceMatrix::pair_name(std::size_t p) const {
    const auto [a, b] = pairs[p];
    return labels[static_cast<std::size_t>(a)] + "|" + labels[static_cast<std::size_t>(b)];
}

namespace {

double squared_distance(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s;
}

}  // namespace

DominanceMatrix sample_triplet_orderings(const LabeledDataset& train, std::span<const std::string> features,
                                         const LetOptions& options) {
    const std::size_t L = train.n_labels();
    if (L < 3) throw_data("triplet sampling needs at least 3 labels, got " + std::to_string(L));
    if (features.empty()) throw_config("triplet sampling needs at least one feature");
    if (options.samples_per_triplet < 1) throw_config("samples_per_triplet must be >= 1");

    const Standardizer scaler =
        options.zscore ? Standardizer::fit(train.table(), features) : Standardizer::identity(features);
    const FeatureMatrix fm = extract_features(train.table(), features, scaler);
    if (fm.kept.size() < train.n_rows()) {
        warn("triplet sampling: dropped " + std::to_string(train.n_rows() - fm.kept.size()) +
             " training row(s) with missing features");
    }
    std::vector<std::vector<std::size_t>> members(L);
    for (std::size_t i = 0; i < fm.kept.size(); ++i) {
        members[static_cast<std::size_t>(train.label_codes()[fm.kept[i]])].push_back(i);
    }
    for (std::size_t l = 0; l < L; ++l) {
        if (members[l].empty()) throw_data("label '" + train.labels()[l] + "' has no training rows");
    }

    DominanceMatrix dm;
    dm.labels = train.labels();
    for (std::size_t a = 0; a < L; ++a) {
        for (std::size_t b = a + 1; b < L; ++b) dm.pairs.emplace_back(static_cast<int>(a), static_cast<int>(b));
    }
    const std::size_t P = dm.pairs.size();
    dm.samples_per_triplet = options.samples_per_triplet;
    dm.seed = options.seed;

    struct Triple {
        int a, b, c;
    };
    std::vector<Triple> triples;
    for (int a = 0; a < static_cast<int>(L); ++a) {
        for (int b = a + 1; b < static_cast<int>(L); ++b) {
            for (int c = b + 1; c < static_cast<int>(L); ++c) triples.push_back({a, b, c});
        }
    }

    // per-triple tallies: dominated counts of (ab, ac, bc) and valid samples
    struct Tally {
        std::uint64_t closest[3] = {0, 0, 0};
        std::uint64_t valid = 0;
        std::uint64_t dropped = 0;
    };
    std::vector<Tally> tallies(triples.size());
    parallel_for(triples.size(), [&](std::size_t t) {
        const Triple tr = triples[t];
        Rng rng(derive_seed(options.seed, t));
        const auto& ma = members[static_cast<std::size_t>(tr.a)];
        const auto& mb = members[static_cast<std::size_t>(tr.b)];
        const auto& mc = members[static_cast<std::size_t>(tr.c)];
        Tally& tally = tallies[t];
        for (std::size_t s = 0; s < options.samples_per_triplet; ++s) {
            bool recorded = false;
            for (std::size_t attempt = 0; attempt <= options.max_tie_retries && !recorded; ++attempt) {
                const auto xa = fm.values.row(ma[rng.index(ma.size())]);
                const auto xb = fm.values.row(mb[rng.index(mb.size())]);
                const auto xc = fm.values.row(mc[rng.index(mc.size())]);
                const double d[3] = {squared_distance(xa, xb), squared_distance(xa, xc), squared_distance(xb, xc)};
                int best = 0;
                for (int k = 1; k < 3; ++k) {
                    if (d[k] < d[best]) best = k;
                }
                bool strict = true;
                for (int k = 0; k < 3; ++k) {
                    if (k != best && d[k] == d[best]) strict = false;
                }
                if (!strict) continue;
                ++tally.closest[best];
                ++tally.valid;
                recorded = true;
            }
            if (!recorded) ++tally.dropped;
        }
    });

    dm.counts = Matrix(P, P);
    dm.exposure.assign(P, 0);
    for (std::size_t t = 0; t < triples.size(); ++t) {
        const Triple tr = triples[t];
        const std::size_t pp[3] = {dm.pair_index(tr.a, tr.b), dm.pair_index(tr.a, tr.c), dm.pair_index(tr.b, tr.c)};
        const Tally& tally = tallies[t];
        for (int k = 0; k < 3; ++k) {
            dm.exposure[pp[k]] += tally.valid;
            for (int other = 0; other < 3; ++other) {
                if (other != k) dm.counts(pp[k], pp[other]) += static_cast<double>(tally.closest[k]);
            }
        }
        dm.dropped_samples += tally.dropped;
    }
    if (dm.dropped_samples > 0) {
        warn("triplet sampling: dropped " + std::to_string(dm.dropped_samples) + " sample(s) with tied distances");
    }
    return dm;
}

Matrix dominance_to_distance(const DominanceMatrix& dm, bool normalize) {
    const std::size_t L = dm.labels.size();
    const std::size_t P = dm.pairs.size();
    if (P == 0 || dm.counts.rows() != P) throw_data("dominance matrix is empty");
    std::uint64_t total_exposure = 0;
    for (auto e : dm.exposure) total_exposure += e;
    if (total_exposure == 0) throw_data("dominance matrix is empty: no valid samples");

    Matrix rd(L, L);
    for (std::size_t q = 0; q < P; ++q) {
        double col = 0.0;
        for (std::size_t p = 0; p < P; ++p) col += dm.counts(p, q);
        if (normalize) col = dm.exposure[q] > 0 ? col / static_cast<double>(dm.exposure[q]) : 0.0;
        const auto [a, b] = dm.pairs[q];
        rd(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) = col;
        rd(static_cast<std::size_t>(b), static_cast<std::size_t>(a)) = col;
    }
    return rd;
}

std::vector<double> dominance_closeness(const DominanceMatrix& dm, bool normalize) {
    const std::size_t P = dm.pairs.size();
    std::vector<double> out(P, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
        double row = 0.0;
        for (std::size_t q = 0; q < P; ++q) row += dm.counts(p, q);
        if (normalize) row = dm.exposure[p] > 0 ? row / static_cast<double>(dm.exposure[p]) : 0.0;
        out[p] = row;
    }
    return out;
}

LabelTree build_label_tree(const Matrix& relative_distance, std::vector<std::string> label_names) {
    const std::size_t L = label_names.size();
    if (L == 0) throw_data("label tree needs at least one label");
    if (relative_distance.rows() != L || relative_distance.cols() != L) {
        throw_data("relative-distance matrix does not match the label count");
    }
    LabelTree tree;
    tree.label_names = label_names;
    tree.relative_distance = relative_distance;
    tree.nodes.resize(L);
    for (std::size_t l = 0; l < L; ++l) tree.nodes[l].labels = {static_cast<int>(l)};

    const Dendrogram dendro = agglomerate(relative_distance, Linkage::average, std::move(label_names));
    for (const Merge& m : dendro.merges) {
        TreeNode node;
        node.left = static_cast<int>(m.left);
        node.right = static_cast<int>(m.right);
        node.height = m.height;
        const auto& l = tree.nodes[m.left].labels;
        const auto& r = tree.nodes[m.right].labels;
        node.labels = l;
        node.labels.insert(node.labels.end(), r.begin(), r.end());
        std::sort(node.labels.begin(), node.labels.end());
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes[m.left].parent = id;
        tree.nodes[m.right].parent = id;
        tree.nodes.push_back(std::move(node));
    }
    tree.root = static_cast<int>(tree.nodes.size()) - 1;
    return tree;
}

LabelTree build_let(const LabeledDataset& train, std::span<const std::string> features, const LetOptions& options,
                    DominanceMatrix* dominance_out) {
    const std::size_t L = train.n_labels();
    for (std::size_t l = 0; l < L; ++l) {
        if (train.count_of(static_cast<int>(l)) == 0) {
            throw_data("label '" + train.labels()[l] + "' has no training rows");
        }
    }
    if (L >= 3) {
        DominanceMatrix dm = sample_triplet_orderings(train, features, options);
        LabelTree tree = build_label_tree(dominance_to_distance(dm, options.normalize), train.labels());
        if (dominance_out) *dominance_out = std::move(dm);
        return tree;
    }
    Matrix rd(L, L);
    if (L == 2) rd(0, 1) = rd(1, 0) = 1.0;
    return build_label_tree(rd, train.labels());
}

std::string LabelTree::to_newick() const {
    std::function<std::string(int)> render = [&](int id) -> std::string {
        const TreeNode& n = node(id);
        if (n.is_leaf()) return label_names[static_cast<std::size_t>(n.labels.front())];
        const TreeNode& l = node(n.left);
        const TreeNode& r = node(n.right);
        return "(" + render(n.left) + ":" + csv::format_double(n.height - l.height) + "," + render(n.right) + ":" +
               csv::format_double(n.height - r.height) + ")";
    };
    return render(root) + ";";
}

nlohmann::json LabelTree::to_json() const {
    nlohmann::json j;
    j["labels"] = label_names;
    j["root"] = root;
    nlohmann::json ns = nlohmann::json::array();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        std::vector<std::string> names;
        for (int l : n.labels) names.push_back(label_names[static_cast<std::size_t>(l)]);
        nlohmann::json e{{"id", i}, {"labels", names}, {"height", n.height}, {"parent", n.parent}};
        if (!n.is_leaf()) {
            e["left"] = n.left;
            e["right"] = n.right;
        }
        ns.push_back(e);
    }
    j["nodes"] = ns;
    j["newick"] = to_newick();
    return j;
}

void write_dominance_csv(std::ostream& out, const DominanceMatrix& dm) {
    std::vector<std::string> header{"dominated_pair"};
    for (std::size_t q = 0; q < dm.pairs.size(); ++q) header.push_back(dm.pair_name(q));
    csv::write_row(out, header);
    for (std::size_t p = 0; p < dm.pairs.size(); ++p) {
        std::vector<std::string> row{dm.pair_name(p)};
        for (std::size_t q = 0; q < dm.pairs.size(); ++q) row.push_back(csv::format_double(dm.counts(p, q)));
        csv::write_row(out, row);
    }
}

void write_square_csv(std::ostream& out, const std::vector<std::string>& names, const Matrix& m) {
    std::vector<std::string> header{""};
    header.insert(header.end(), names.begin(), names.end());
    csv::write_row(out, header);
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::vector<std::string> row{names[i]};
        for (std::size_t j = 0; j < names.size(); ++j) row.push_back(csv::format_double(m(i, j)));
        csv::write_row(out, row);
    }
}

}  // namespace ceda
