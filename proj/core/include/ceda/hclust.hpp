#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/dataset.hpp"
#include "ceda/matrix.hpp"

namespace ceda {

enum class Linkage { average, complete, single };

std::string_view to_string(Linkage linkage);
Linkage parse_linkage(std::string_view text);

/// One agglomeration step. Node ids follow the usual convention: leaves are
/// 0..n-1 and the cluster formed by merge m is node n + m.
struct Merge {
    std::size_t left = 0;
    std::size_t right = 0;
    double height = 0.0;
    std::size_t size = 0;
};

struct Dendrogram {
    std::vector<std::string> leaves;
    std::vector<Merge> merges;

    std::size_t n_leaves() const { return leaves.size(); }
    /// Leaves in drawing order (left subtree before right subtree).
    std::vector<std::size_t> leaf_order() const;
    /// Leaf ids under a node.
    std::vector<std::size_t> members(std::size_t node) const;
    /// Newick text with branch lengths parent height - child height.
    std::string to_newick() const;
    nlohmann::json to_json() const;
};

/// Agglomerative clustering of a symmetric, zero-diagonal, non-negative
/// dissimilarity matrix.
///
/// Clusters live in slots; a cluster's slot is the smallest leaf index it
/// contains. Each step merges the pair of slots (i < j) with the smallest
/// linkage distance, ties going to the lexicographically smallest (i, j);
/// the merged cluster keeps slot i and becomes the left child. Average
/// linkage keeps exact sums of leaf-pair dissimilarities and reports
/// sum / (|A| |B|).
Dendrogram agglomerate(const Matrix& dissimilarity, Linkage linkage = Linkage::average,
                       std::vector<std::string> leaves = {});

struct FeatureGroups {
    std::size_t k = 0;
    /// Group index per leaf; groups are numbered by their smallest leaf.
    std::vector<int> assignment;
    std::vector<std::vector<std::string>> groups;
};

/// Partition left after undoing the k - 1 last (highest) merges.
FeatureGroups cut(const Dendrogram& dendrogram, std::size_t k);

struct ClusterCategorizeOptions {
    Linkage linkage = Linkage::average;
    bool zscore = true;
    /// Above this many complete rows, a seeded subsample of this size is
    /// clustered and every row is assigned to the nearest cluster centroid.
    std::size_t max_rows = 2000;
    std::uint64_t seed = 0;
    std::string column_name;
};

/// Clusters rows on Euclidean distance over `features` and returns a new
/// categorical column with levels h1..hk (zero padded past 9, numbered by
/// smallest member row).
/// Rows missing any feature get a missing cell.
Column categorize_by_clustering(const DataTable& table, std::span<const std::string> features, std::size_t k,
                                const ClusterCategorizeOptions& options = {});

}  // namespace ceda
