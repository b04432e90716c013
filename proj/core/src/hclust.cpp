#include "ceda/hclust.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "ceda/csv.hpp"
#include "ceda/error.hpp"
#include "ceda/log.hpp"
#include "ceda/rng.hpp"

namespace ceda {

std::string_view to_string(Linkage linkage) {
    switch (linkage) {
        case Linkage::average: return "average";
        case Linkage::complete: return "complete";
        case Linkage::single: return "single";
    }
    return "unknown";
}

Linkage parse_linkage(std::string_view text) {
    if (text == "average") return Linkage::average;
    if (text == "complete") return Linkage::complete;
    if (text == "single") return Linkage::single;
    throw_config("unknown linkage '" + std::string(text) + "' (expected average, complete or single)");
}

std::vector<std::size_t> Dendrogram::members(std::size_t node) const {
    const std::size_t n = n_leaves();
    std::vector<std::size_t> out;
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
        const std::size_t id = stack.back();
        stack.pop_back();
        if (id < n) {
            out.push_back(id);
        } else {
            const Merge& m = merges[id - n];
            stack.push_back(m.right);
            stack.push_back(m.left);
        }
    }
    return out;
}

std::vector<std::size_t> Dendrogram::leaf_order() const {
    if (n_leaves() == 0) return {};
    if (merges.empty()) return {0};
    return members(n_leaves() + merges.size() - 1);
}

std::string Dendrogram::to_newick() const {
    const std::size_t n = n_leaves();
    if (n == 0) return ";";
    auto height_of = [&](std::size_t id) { return id < n ? 0.0 : merges[id - n].height; };
    auto quote = [](const std::string& name) {
        if (name.find_first_of(" ,;:()[]'") == std::string::npos) return name;
        std::string q = "'";
        for (char c : name) {
            if (c == '\'') q.push_back('\'');
            q.push_back(c);
        }
        return q + "'";
    };
    std::function<std::string(std::size_t)> render = [&](std::size_t id) -> std::string {
        if (id < n) return quote(leaves[id]);
        const Merge& m = merges[id - n];
        return "(" + render(m.left) + ":" + csv::format_double(m.height - height_of(m.left)) + "," + render(m.right) +
               ":" + csv::format_double(m.height - height_of(m.right)) + ")";
    };
    return render(merges.empty() ? 0 : n + merges.size() - 1) + ";";
}

nlohmann::json Dendrogram::to_json() const {
    nlohmann::json j;
    j["leaves"] = leaves;
    nlohmann::json ms = nlohmann::json::array();
    for (std::size_t i = 0; i < merges.size(); ++i) {
        const Merge& m = merges[i];
        ms.push_back({{"node", n_leaves() + i}, {"left", m.left}, {"right", m.right}, {"height", m.height}, {"size", m.size}});
    }
    j["merges"] = ms;
    std::vector<std::string> order;
    for (std::size_t id : leaf_order()) order.push_back(leaves[id]);
    j["leaf_order"] = order;
    return j;
}

namespace {

void validate_dissimilarity(const Matrix& d) {
    if (d.rows() != d.cols()) throw_data("dissimilarity matrix must be square");
    for (std::size_t i = 0; i < d.rows(); ++i) {
        if (d(i, i) != 0.0) throw_data("dissimilarity matrix must have a zero diagonal");
        for (std::size_t j = 0; j < d.cols(); ++j) {
            const double v = d(i, j);
            if (std::isnan(v) || v < 0.0) throw_data("dissimilarity matrix must be non-negative");
            if (v != d(j, i)) throw_data("dissimilarity matrix must be symmetric");
        }
    }
}

}  // namespace

Dendrogram agglomerate(const Matrix& dissimilarity, Linkage linkage, std::vector<std::string> leaves) {
    validate_dissimilarity(dissimilarity);
    const std::size_t n = dissimilarity.rows();
    if (leaves.empty()) {
        for (std::size_t i = 0; i < n; ++i) leaves.push_back(std::to_string(i));
    }
    if (leaves.size() != n) throw_data("leaf names do not match the dissimilarity matrix size");

    Dendrogram out;
    out.leaves = std::move(leaves);
    if (n < 2) return out;

    // `link` holds the linkage quantity per slot pair: the pairwise sum for
    // average linkage, the distance itself for single/complete.
    Matrix link = dissimilarity;
    std::vector<std::size_t> size(n, 1);
    std::vector<std::size_t> node(n);
    std::iota(node.begin(), node.end(), std::size_t{0});
    std::vector<bool> active(n, true);

    auto distance = [&](std::size_t i, std::size_t j) {
        if (linkage == Linkage::average) return link(i, j) / static_cast<double>(size[i] * size[j]);
        return link(i, j);
    };

    // nearest[i]: best slot j > i (smallest distance, then smallest j).
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> nearest(n, none);
    std::vector<double> nearest_d(n, std::numeric_limits<double>::infinity());
    auto refresh = [&](std::size_t i) {
        nearest[i] = none;
        nearest_d[i] = std::numeric_limits<double>::infinity();
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!active[j]) continue;
            const double dij = distance(i, j);
            if (dij < nearest_d[i]) {
                nearest_d[i] = dij;
                nearest[i] = j;
            }
        }
    };
    for (std::size_t i = 0; i < n; ++i) refresh(i);

    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t a = none;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i] || nearest[i] == none) continue;
            if (a == none || nearest_d[i] < nearest_d[a]) a = i;
        }
        const std::size_t b = nearest[a];
        const double height = nearest_d[a];
        out.merges.push_back({node[a], node[b], height, size[a] + size[b]});

        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == a || k == b) continue;
            double v = 0.0;
            switch (linkage) {
                case Linkage::average: v = link(a, k) + link(b, k); break;
                case Linkage::complete: v = std::max(link(a, k), link(b, k)); break;
                case Linkage::single: v = std::min(link(a, k), link(b, k)); break;
            }
            link(a, k) = v;
            link(k, a) = v;
        }
        active[b] = false;
        size[a] += size[b];
        node[a] = n + step;

        refresh(a);
        for (std::size_t k = 0; k < a; ++k) {
            if (!active[k]) continue;
            if (nearest[k] == a || nearest[k] == b) {
                refresh(k);
                continue;
            }
            const double dka = distance(k, a);
            if (dka < nearest_d[k] || (dka == nearest_d[k] && a < nearest[k])) {
                nearest_d[k] = dka;
                nearest[k] = a;
            }
        }
        for (std::size_t k = a + 1; k < n; ++k) {
            if (active[k] && nearest[k] == b) refresh(k);
        }
    }
    return out;
}

FeatureGroups cut(const Dendrogram& dendrogram, std::size_t k) {
    const std::size_t n = dendrogram.n_leaves();
    if (k < 1 || k > n) throw_config("group count k must lie in [1, " + std::to_string(n) + "]");

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    // representative leaf of every node id
    std::vector<std::size_t> rep(n + dendrogram.merges.size());
    std::iota(rep.begin(), rep.begin() + static_cast<std::ptrdiff_t>(n), std::size_t{0});
    for (std::size_t m = 0; m < dendrogram.merges.size(); ++m) {
        const Merge& mg = dendrogram.merges[m];
        rep[n + m] = rep[mg.left];
        if (m < n - k) {
            const std::size_t ra = find(rep[mg.left]);
            const std::size_t rb = find(rep[mg.right]);
            parent[std::max(ra, rb)] = std::min(ra, rb);
        }
    }

    FeatureGroups g;
    g.k = k;
    g.assignment.assign(n, -1);
    std::vector<int> group_of_root(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        if (group_of_root[r] < 0) {
            group_of_root[r] = static_cast<int>(g.groups.size());
            g.groups.emplace_back();
        }
        g.assignment[i] = group_of_root[r];
        g.groups[static_cast<std::size_t>(group_of_root[r])].push_back(dendrogram.leaves[i]);
    }
    return g;
}

Column categorize_by_clustering(const DataTable& table, std::span<const std::string> features, std::size_t k,
                                const ClusterCategorizeOptions& options) {
    if (features.empty()) throw_config("clustering needs at least one feature");
    for (const auto& f : features) {
        if (table.column(f).kind != FeatureKind::continuous) {
            throw_config("clustering feature '" + f + "' must be continuous");
        }
    }
    const Standardizer scaler =
        options.zscore ? Standardizer::fit(table, features) : Standardizer::identity(features);
    const FeatureMatrix fm = extract_features(table, features, scaler);
    const std::size_t n = fm.kept.size();
    if (k < 1) throw_config("category count k must be >= 1");
    if (k > n) throw_data("category count k=" + std::to_string(k) + " exceeds the " + std::to_string(n) + " usable rows");
    if (table.n_rows() > n) {
        warn(std::to_string(table.n_rows() - n) + " row(s) with missing features left uncategorized");
    }

    std::vector<std::size_t> sample(n);
    std::iota(sample.begin(), sample.end(), std::size_t{0});
    const bool subsampled = n > options.max_rows && options.max_rows >= k;
    if (subsampled) {
        Rng rng(options.seed);
        shuffle(sample, rng);
        sample.resize(options.max_rows);
        std::sort(sample.begin(), sample.end());
    }

    const std::size_t m = sample.size();
    const std::size_t dims = fm.values.cols();
    Matrix d(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto xi = fm.values.row(sample[i]);
        for (std::size_t j = i + 1; j < m; ++j) {
            const auto xj = fm.values.row(sample[j]);
            double s = 0.0;
            for (std::size_t c = 0; c < dims; ++c) s += (xi[c] - xj[c]) * (xi[c] - xj[c]);
            d(i, j) = d(j, i) = std::sqrt(s);
        }
    }
    const FeatureGroups groups = cut(agglomerate(d, options.linkage), k);

    std::vector<int> cluster(n, -1);
    if (!subsampled) {
        for (std::size_t i = 0; i < n; ++i) cluster[i] = groups.assignment[i];
    } else {
        Matrix centroid(k, dims);
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < m; ++i) {
            const auto g = static_cast<std::size_t>(groups.assignment[i]);
            ++count[g];
            for (std::size_t c = 0; c < dims; ++c) centroid(g, c) += fm.values(sample[i], c);
        }
        for (std::size_t g = 0; g < k; ++g) {
            for (std::size_t c = 0; c < dims; ++c) centroid(g, c) /= static_cast<double>(count[g]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t g = 0; g < k; ++g) {
                double s = 0.0;
                for (std::size_t c = 0; c < dims; ++c) {
                    const double diff = fm.values(i, c) - centroid(g, c);
                    s += diff * diff;
                }
                if (s < best) {
                    best = s;
                    cluster[i] = static_cast<int>(g);
                }
            }
        }
    }

    // number clusters by their smallest member row
    std::vector<int> renumber(k, -1);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = renumber[static_cast<std::size_t>(cluster[i])];
        if (r < 0) r = next++;
    }

    Column col;
    col.name = options.column_name.empty() ? "cluster" : options.column_name;
    col.kind = FeatureKind::categorical;
    // zero padded so lexical level order matches cluster numbering
    const std::size_t width = std::to_string(next).size();
    for (int g = 1; g <= next; ++g) {
        std::string digits = std::to_string(g);
        digits.insert(0, width - digits.size(), '0');
        col.levels.push_back("h" + digits);
    }
    col.values.assign(table.n_rows(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) {
        col.values[fm.kept[i]] = renumber[static_cast<std::size_t>(cluster[i])];
    }
    return col;
}

}  // namespace ceda
