#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/dataset.hpp"
#include "ceda/hclust.hpp"
#include "ceda/matrix.hpp"

namespace ceda {

struct LetOptions {
    std::size_t samples_per_triplet = 200;
    std::uint64_t seed = 0;
    bool zscore = true;
    /// Divide column sums by the number of samples the pair took part in.
    bool normalize = true;
    /// Exact-tie samples are redrawn up to this many times before the sample
    /// is dropped.
    std::size_t max_tie_retries = 64;
};

/// Pair-by-pair dominance tallies over all label triples.
///
/// Pairs are the C(L, 2) label pairs (a < b) in lexicographic order.
/// counts(p, q) is the number of sampled point triples in which pair q's
/// distance exceeded that of pair p, p being the strictly closest pair of the
/// triple. exposure[q] counts the samples pair q took part in.
struct DominanceMatrix {
    std::vector<std::string> labels;
    std::vector<std::pair<int, int>> pairs;
    Matrix counts;
    std::vector<std::uint64_t> exposure;
    std::size_t samples_per_triplet = 0;
    std::uint64_t seed = 0;
    std::size_t dropped_samples = 0;

    std::size_t pair_index(int a, int b) const;
    std::string pair_name(std::size_t p) const;
};

/// For each label triple (a < b < c), in lexicographic order, draws
/// `samples_per_triplet` point triples (one uniform row per label, with
/// replacement) from an Rng seeded with derive_seed(seed, triple index), so
/// results do not depend on the worker count.
DominanceMatrix sample_triplet_orderings(const LabeledDataset& train, std::span<const std::string> features,
                                         const LetOptions& options);

/// L x L relative-distance matrix from column sums; normalized by exposure
/// unless `normalize` is false.
Matrix dominance_to_distance(const DominanceMatrix& dm, bool normalize = true);

/// Row sums ("relative closeness") per pair, normalized like the distances.
std::vector<double> dominance_closeness(const DominanceMatrix& dm, bool normalize = true);

struct TreeNode {
    int left = -1;
    int right = -1;
    int parent = -1;
    std::vector<int> labels;  // label codes under this node, ascending
    double height = 0.0;

    bool is_leaf() const { return left < 0; }
};

/// Binary tree over labels. Leaves are nodes 0..L-1 (node id == label code);
/// internal nodes follow in merge order; the root is the last node.
struct LabelTree {
    std::vector<std::string> label_names;
    std::vector<TreeNode> nodes;
    int root = -1;
    Matrix relative_distance;

    const TreeNode& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
    std::size_t n_labels() const { return label_names.size(); }
    std::string to_newick() const;
    nlohmann::json to_json() const;
};

/// Average-linkage clustering of the relative-distance matrix, annotated
/// with branch label sets.
LabelTree build_label_tree(const Matrix& relative_distance, std::vector<std::string> label_names);

/// Full pipeline from training data. With fewer than 3 labels there are no
/// triples: one label gives a single-leaf tree, two labels a single internal
/// node over both.
LabelTree build_let(const LabeledDataset& train, std::span<const std::string> features, const LetOptions& options,
                    DominanceMatrix* dominance_out = nullptr);

void write_dominance_csv(std::ostream& out, const DominanceMatrix& dm);
void write_square_csv(std::ostream& out, const std::vector<std::string>& names, const Matrix& m);

}  // namespace ceda
