#include "ceda/rma.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "ceda/association.hpp"
#include "ceda/csv.hpp"
#include "ceda/error.hpp"
#include "ceda/log.hpp"
#include "ceda/parallel.hpp"

namespace ceda {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool contains(const std::vector<std::string>& names, const std::string& name) {
    return std::find(names.begin(), names.end(), name) != names.end();
}

std::vector<std::string> concat(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::string> out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::string letters(std::size_t i) {
    std::string s;
    ++i;
    while (i > 0) {
        --i;
        s.insert(s.begin(), static_cast<char>('A' + i % 26));
        i /= 26;
    }
    return s;
}

std::string cell_name(const std::vector<int>& bins) {
    std::string name = letters(static_cast<std::size_t>(bins.front()));
    for (std::size_t j = 1; j < bins.size(); ++j) {
        if (j > 1) name += ".";
        name += std::to_string(bins[j] + 1);
    }
    return name;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
    }
    return e;
}

Matrix from_eigen(const Eigen::MatrixXd& e) {
    Matrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
        for (Eigen::Index j = 0; j < e.cols(); ++j) m(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = e(i, j);
    }
    return m;
}

const Column& numeric_column(const DataTable& table, const std::string& name, std::string_view role) {
    const Column& c = table.column(name);
    if (c.kind == FeatureKind::categorical) {
        throw_config(std::string(role) + " '" + name + "' must be numeric");
    }
    return c;
}

Binning binning_for(const DataTable& table, const std::string& feature, const BinningSet& binnings) {
    if (auto it = binnings.find(feature); it != binnings.end()) return it->second;
    return build_histogram(table.column(feature).values, std::nullopt, feature);
}

}  // namespace

void ResponseSpec::validate(const DataTable& table) const {
    if (responses.empty()) throw_config("rma.responses: at least one response is required");
    for (const auto& r : responses) {
        if (!table.has_column(r)) throw_config("rma.responses: unknown feature '" + r + "'");
        if (contains(covariates, r)) throw_config("rma: '" + r + "' is both a response and a covariate");
    }
    for (const auto& c : covariates) {
        if (!table.has_column(c)) throw_config("rma.covariates: unknown feature '" + c + "'");
    }
}

MajorFeatureScore score_major_candidate(const DataTable& train, const ResponseSpec& spec, const std::string& candidate,
                                        const BinningSet& binnings, double threshold) {
    spec.validate(train);
    std::vector<std::string> used{candidate};
    used.insert(used.end(), spec.responses.begin(), spec.responses.end());
    const DataTable sub = train.select_rows(train.complete_rows(used));
    if (sub.n_rows() < 2) throw_data("major scoring: fewer than 2 complete rows for '" + candidate + "'");

    const Categorization cand = categorize_column(sub, candidate, binnings);
    std::vector<Categorization> resp;
    for (const auto& r : spec.responses) resp.push_back(categorize_column(sub, r, binnings));

    Categorization joint;
    joint.feature = "response cells";
    std::map<std::vector<int>, int> cells;
    joint.codes.resize(sub.n_rows());
    for (std::size_t i = 0; i < sub.n_rows(); ++i) {
        std::vector<int> key;
        for (const auto& r : resp) key.push_back(r.codes[i]);
        auto [it, inserted] = cells.emplace(key, static_cast<int>(cells.size()));
        joint.codes[i] = it->second;
    }
    for (std::size_t c = 0; c < cells.size(); ++c) joint.names.push_back("cell" + std::to_string(c));

    std::vector<std::size_t> per_bin(cand.n_categories(), 0);
    for (int c : cand.codes) ++per_bin[static_cast<std::size_t>(c)];
    if (std::count_if(per_bin.begin(), per_bin.end(), [](std::size_t n) { return n > 0; }) < 2) {
        throw_data("degenerate candidate '" + candidate + "': a single occupied category");
    }

    const ContingencyTable table = tally(cand, joint);
    MajorFeatureScore out;
    out.feature = candidate;
    out.threshold = threshold;
    out.score = std::clamp(1.0 - directed_conditional_entropy(table, Direction::row_to_col), 0.0, 1.0);
    out.major = out.score >= threshold;

    const std::size_t m = spec.responses.size();
    std::vector<const Column*> rcols;
    for (const auto& r : spec.responses) rcols.push_back(&sub.column(r));
    for (std::size_t b = 0; b < cand.n_categories(); ++b) {
        StripStat s;
        s.bin = cand.names[b];
        s.count = per_bin[b];
        s.response_mean.assign(m, 0.0);
        s.response_sd.assign(m, 0.0);
        if (s.count == 0) {
            out.strips.push_back(std::move(s));
            continue;
        }
        for (std::size_t i = 0; i < sub.n_rows(); ++i) {
            if (cand.codes[i] != static_cast<int>(b)) continue;
            for (std::size_t j = 0; j < m; ++j) s.response_mean[j] += rcols[j]->values[i];
        }
        for (auto& v : s.response_mean) v /= static_cast<double>(s.count);
        if (s.count > 1) {
            for (std::size_t i = 0; i < sub.n_rows(); ++i) {
                if (cand.codes[i] != static_cast<int>(b)) continue;
                for (std::size_t j = 0; j < m; ++j) {
                    const double d = rcols[j]->values[i] - s.response_mean[j];
                    s.response_sd[j] += d * d;
                }
            }
            for (auto& v : s.response_sd) v = std::sqrt(v / static_cast<double>(s.count - 1));
        }
        out.strips.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------- lattice

std::size_t LocalityLattice::cell_index(std::span<const int> bins) const {
    std::size_t idx = 0;
    for (std::size_t j = 0; j < binnings.size(); ++j) {
        idx = idx * binnings[j].n_bins() + static_cast<std::size_t>(bins[j]);
    }
    return idx;
}

std::vector<int> LocalityLattice::locate(std::span<const double> values, bool* clamped) const {
    if (values.size() != binnings.size()) throw_data("lattice query has the wrong number of majors");
    std::vector<int> bins(values.size());
    bool any = false;
    for (std::size_t j = 0; j < values.size(); ++j) {
        const BinAssignment a = categorize(binnings[j], values[j]);
        bins[j] = a.bin;
        any |= a.out_of_range;
    }
    if (clamped) *clamped = any;
    return bins;
}

std::size_t LocalityLattice::occupied_cells() const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [](const LatticeCell& c) { return !c.members.empty(); }));
}

std::optional<std::size_t> LocalityLattice::find_cell(const std::string& name) const {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].name == name) return i;
    }
    return std::nullopt;
}

LocalityLattice build_locality_lattice(const DataTable& train, const ResponseSpec& spec,
                                       std::span<const std::string> majors, const BinningSet& binnings) {
    spec.validate(train);
    if (majors.empty()) throw_config("rma.majors: at least one major feature is required");
    LocalityLattice lat;
    lat.responses = spec.responses;
    for (const auto& f : majors) {
        if (contains(lat.majors, f)) throw_config("rma.majors: duplicate feature '" + f + "'");
        if (contains(spec.responses, f)) throw_config("rma.majors: '" + f + "' is a response");
        numeric_column(train, f, "major feature");
        lat.majors.push_back(f);
        lat.binnings.push_back(binning_for(train, f, binnings));
    }

    const std::vector<std::size_t> usable = train.complete_rows(concat(majors, spec.responses));
    if (usable.empty()) throw_data("locality lattice: no complete training row");
    lat.usable_rows = usable.size();
    lat.excluded_rows = train.n_rows() - usable.size();
    if (lat.excluded_rows > 0) {
        warn("locality lattice: excluded " + std::to_string(lat.excluded_rows) + " row(s) with missing values");
    }
    lat.scaler = Standardizer::fit(train.select_rows(usable), lat.majors);

    std::size_t total = 1;
    for (const auto& b : lat.binnings) total *= b.n_bins();
    lat.cells.resize(total);
    std::vector<int> bins(majors.size(), 0);
    for (std::size_t c = 0; c < total; ++c) {
        std::size_t rest = c;
        for (std::size_t j = majors.size(); j-- > 0;) {
            bins[j] = static_cast<int>(rest % lat.binnings[j].n_bins());
            rest /= lat.binnings[j].n_bins();
        }
        lat.cells[c].bins = bins;
        lat.cells[c].name = cell_name(bins);
    }

    std::vector<const Column*> cols;
    for (const auto& f : lat.majors) cols.push_back(&train.column(f));
    std::vector<double> x(cols.size());
    for (std::size_t r : usable) {
        for (std::size_t j = 0; j < cols.size(); ++j) x[j] = cols[j]->values[r];
        lat.cells[lat.cell_index(lat.locate(x))].members.push_back(r);
    }
    const bool all_single = std::all_of(lat.cells.begin(), lat.cells.end(),
                                        [](const LatticeCell& c) { return c.members.size() <= 1; });
    if (all_single) warn("locality lattice: every occupied cell holds a single row; the lattice is over-binned");
    return lat;
}

BinningSet coarse_binnings(const DataTable& train, std::span<const std::string> features, std::size_t bins) {
    BinningSet out;
    for (const auto& f : features) {
        out[f] = build_histogram(numeric_column(train, f, "feature").values, bins, f);
    }
    return out;
}

MinorFeatureReport minor_feature_entropy(const LocalityLattice& lattice, const DataTable& train,
                                         std::span<const std::string> candidates, const BinningSet& binnings,
                                         double threshold) {
    MinorFeatureReport report;
    report.threshold = threshold;
    for (const auto& f : candidates) {
        const Categorization cat = categorize_column(train, f, binnings);
        const std::size_t C = cat.n_categories();
        if (C < 2) {
            warn("minor features: skipping '" + f + "' with a single category");
            continue;
        }
        MinorFeatureSummary sum;
        sum.feature = f;
        sum.min_entropy = std::numeric_limits<double>::infinity();
        sum.max_entropy = -std::numeric_limits<double>::infinity();
        for (const auto& cell : lattice.cells) {
            std::vector<double> counts(C, 0.0);
            std::size_t members = 0;
            for (std::size_t r : cell.members) {
                const int c = cat.codes[r];
                if (c < 0) continue;
                counts[static_cast<std::size_t>(c)] += 1.0;
                ++members;
            }
            if (members < 2) continue;
            MinorEntropy e;
            e.patch = cell.name;
            e.feature = f;
            e.members = members;
            e.categories = C;
            e.normalized = shannon_entropy(counts) / std::log(static_cast<double>(C));
            sum.min_entropy = std::min(sum.min_entropy, e.normalized);
            sum.max_entropy = std::max(sum.max_entropy, e.normalized);
            report.entries.push_back(std::move(e));
        }
        if (sum.min_entropy > sum.max_entropy) {
            warn("minor features: no patch has 2 members with a value of '" + f + "'");
            continue;
        }
        sum.minor = sum.min_entropy < threshold;
        report.summary.push_back(sum);
    }
    return report;
}

// ---------------------------------------------------------- prediction

RmaModel::RmaModel(const DataTable& train, LocalityLattice lattice, std::vector<std::string> minors,
                   const BinningSet& minor_binnings, std::size_t k_star)
    : lattice_(std::move(lattice)), minors_(std::move(minors)), k_star_(k_star) {
    if (k_star_ < 1) throw_config("rma.k_star must be >= 1");
    for (const auto& f : minors_) {
        if (!train.has_column(f)) throw_config("rma.minors: unknown feature '" + f + "'");
        if (contains(lattice_.majors, f) || contains(lattice_.responses, f)) {
            throw_config("rma.minors: '" + f + "' is already a major or a response");
        }
        const Column& c = train.column(f);
        if (c.kind == FeatureKind::continuous) {
            minor_binnings_.push_back(binning_for(train, f, minor_binnings));
        } else {
            minor_binnings_.push_back(std::nullopt);
        }
        minor_levels_.push_back(c.levels);
    }

    const std::size_t n = train.n_rows();
    const std::size_t k = lattice_.majors.size();
    const std::size_t m = lattice_.responses.size();
    points_ = Matrix(n, k);
    responses_ = Matrix(n, m);
    keys_ = Matrix(n, minors_.size());
    std::vector<double> x(k);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < k; ++j) x[j] = train.column(lattice_.majors[j]).values[r];
        lattice_.scaler.apply(x);
        for (std::size_t j = 0; j < k; ++j) points_(r, j) = x[j];
        for (std::size_t j = 0; j < m; ++j) responses_(r, j) = train.column(lattice_.responses[j]).values[r];
        const auto keys = minor_keys(train, r);
        for (std::size_t j = 0; j < keys.size(); ++j) keys_(r, j) = keys[j];
    }
}

std::vector<double> RmaModel::minor_keys(const DataTable& table, std::size_t row) const {
    std::vector<double> keys(minors_.size(), kNaN);
    for (std::size_t j = 0; j < minors_.size(); ++j) {
        const Column& c = table.column(minors_[j]);
        if (c.missing(row)) continue;
        if (c.kind == FeatureKind::categorical) {
            const auto& levels = minor_levels_[j];
            auto it = std::find(levels.begin(), levels.end(), c.text(row));
            // unseen levels match no training row
            keys[j] = it == levels.end() ? -1.0 : static_cast<double>(it - levels.begin());
        } else if (minor_binnings_[j]) {
            keys[j] = categorize(*minor_binnings_[j], c.values[row]).bin;
        } else {
            keys[j] = c.values[row];
        }
    }
    return keys;
}

RmaPrediction RmaModel::predict(std::span<const double> majors, std::span<const double> minor_keys) const {
    if (minor_keys.size() != minors_.size()) throw_data("rma query has the wrong number of minor keys");
    RmaPrediction out;
    const std::vector<int> bins = lattice_.locate(majors, &out.clamped);
    out.cell = lattice_.cell_index(bins);

    std::vector<std::size_t> pool = lattice_.cells[out.cell].members;
    if (pool.empty()) {
        const std::size_t k = bins.size();
        std::size_t combos = 1;
        for (std::size_t j = 0; j < k; ++j) combos *= 3;
        std::vector<int> nb(k);
        for (std::size_t c = 0; c < combos; ++c) {
            std::size_t rest = c;
            bool inside = true;
            bool self = true;
            for (std::size_t j = 0; j < k; ++j) {
                const int off = static_cast<int>(rest % 3) - 1;
                rest /= 3;
                nb[j] = bins[j] + off;
                self &= off == 0;
                inside &= nb[j] >= 0 && nb[j] < static_cast<int>(lattice_.binnings[j].n_bins());
            }
            if (self || !inside) continue;
            const auto& members = lattice_.cells[lattice_.cell_index(nb)].members;
            pool.insert(pool.end(), members.begin(), members.end());
        }
        if (pool.empty()) throw_computation("uncovered covariate region at cell " + lattice_.cells[out.cell].name);
        std::sort(pool.begin(), pool.end());
        out.spilled = true;
    }

    std::vector<double> z(majors.begin(), majors.end());
    lattice_.scaler.apply(z);
    std::vector<double> dist(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto p = points_.row(pool[i]);
        double s = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) s += (z[j] - p[j]) * (z[j] - p[j]);
        dist[i] = s;
    }
    const std::size_t kk = std::min(k_star_, pool.size());
    out.underfilled = pool.size() < k_star_;
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
    order.resize(kk);
    out.neighbors = kk;

    std::vector<std::size_t> focal;
    for (std::size_t i : order) {
        const std::size_t r = pool[i];
        bool match = true;
        for (std::size_t j = 0; j < minors_.size() && match; ++j) {
            if (std::isnan(minor_keys[j])) continue;
            match = keys_(r, j) == minor_keys[j];
        }
        if (match) focal.push_back(r);
    }
    if (focal.empty()) {
        out.sieve_fallback = true;
        for (std::size_t i : order) focal.push_back(pool[i]);
    }
    out.focal = focal.size();

    out.response.assign(responses_.cols(), 0.0);
    for (std::size_t r : focal) {
        for (std::size_t j = 0; j < responses_.cols(); ++j) out.response[j] += responses_(r, j);
    }
    for (auto& v : out.response) v /= static_cast<double>(focal.size());
    return out;
}

std::vector<RmaPrediction> RmaModel::predict_table(const DataTable& test, std::vector<std::size_t>* rows) const {
    const std::vector<std::size_t> usable = test.complete_rows(lattice_.majors);
    if (usable.size() < test.n_rows()) {
        warn("rma: skipped " + std::to_string(test.n_rows() - usable.size()) + " test row(s) with missing majors");
    }
    std::vector<const Column*> cols;
    for (const auto& f : lattice_.majors) cols.push_back(&test.column(f));
    std::vector<RmaPrediction> out(usable.size());
    parallel_for(usable.size(), [&](std::size_t i) {
        std::vector<double> x(cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j) x[j] = cols[j]->values[usable[i]];
        out[i] = predict(x, minor_keys(test, usable[i]));
    });
    if (rows) *rows = usable;
    return out;
}

// ---------------------------------------------------------- error metrics

Matrix sample_covariance(const Matrix& rows) {
    const std::size_t n = rows.rows();
    const std::size_t m = rows.cols();
    if (n < 2) throw_data("covariance needs at least 2 rows");
    std::vector<double> mean(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) mean[j] += rows(i, j);
    }
    for (auto& v : mean) v /= static_cast<double>(n);
    Matrix cov(m, m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = 0; b < m; ++b) cov(a, b) += (rows(i, a) - mean[a]) * (rows(i, b) - mean[b]);
        }
    }
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) cov(a, b) /= static_cast<double>(n - 1);
    }
    return cov;
}

GuardedInverse guarded_inverse(const Matrix& covariance) {
    if (covariance.rows() != covariance.cols() || covariance.rows() == 0) throw_data("covariance must be square");
    const Eigen::MatrixXd s = to_eigen(covariance);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    if (eig.info() != Eigen::Success) throw_computation("covariance eigen-decomposition failed");
    Eigen::VectorXd values = eig.eigenvalues();
    const double top = values.cwiseAbs().maxCoeff();
    GuardedInverse out;
    if (!(values.minCoeff() > 1e-12 * top)) {
        double eps = 1e-8 * s.trace() / static_cast<double>(s.rows());
        if (!(eps > 0.0)) eps = 1e-8;
        values.array() += eps;
        out.ridge = true;
    }
    const Eigen::MatrixXd inv = eig.eigenvectors() * values.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    out.inverse = from_eigen(inv);
    return out;
}

namespace {

double quadratic_form(const Matrix& inv, std::span<const double> e) {
    double s = 0.0;
    for (std::size_t a = 0; a < e.size(); ++a) {
        for (std::size_t b = 0; b < e.size(); ++b) s += e[a] * inv(a, b) * e[b];
    }
    return s;
}

Matrix member_responses(const DataTable& train, const std::vector<std::string>& responses,
                        const std::vector<std::size_t>& members) {
    Matrix out(members.size(), responses.size());
    for (std::size_t j = 0; j < responses.size(); ++j) {
        const Column& c = train.column(responses[j]);
        for (std::size_t i = 0; i < members.size(); ++i) out(i, j) = c.values[members[i]];
    }
    return out;
}

}  // namespace

ErrorReport error_metrics(const Matrix& predictions, const Matrix& truths, std::span<const std::size_t> patch_of,
                          const LocalityLattice& lattice, const DataTable& train,
                          const std::optional<Matrix>& sigma_override) {
    const std::size_t n = predictions.rows();
    const std::size_t m = lattice.responses.size();
    if (truths.rows() != n || patch_of.size() != n) throw_data("error metrics: predictions and truths differ in length");
    if (predictions.cols() != m || truths.cols() != m) throw_data("error metrics: wrong number of responses");
    if (n == 0) throw_data("error metrics: no test points");

    ErrorReport rep;
    rep.responses = lattice.responses;
    if (sigma_override) {
        if (sigma_override->rows() != m || sigma_override->cols() != m) throw_config("error metrics: sigma must be m x m");
        rep.sigma = *sigma_override;
    } else {
        std::vector<std::size_t> all;
        for (const auto& c : lattice.cells) all.insert(all.end(), c.members.begin(), c.members.end());
        std::sort(all.begin(), all.end());
        rep.sigma = sample_covariance(member_responses(train, lattice.responses, all));
    }
    const GuardedInverse global = guarded_inverse(rep.sigma);

    std::vector<std::optional<GuardedInverse>> local(lattice.cells.size());
    std::vector<std::vector<std::size_t>> points(lattice.cells.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (patch_of[i] >= lattice.cells.size()) throw_data("error metrics: patch index out of range");
        points[patch_of[i]].push_back(i);
    }

    auto summarize = [&](const std::string& name, const std::vector<std::size_t>& idx) {
        PatchError pe;
        pe.patch = name;
        pe.n = idx.size();
        pe.mse.assign(m, 0.0);
        pe.ridge_global = global.ridge;
        double local_sum = 0.0;
        std::size_t local_n = 0;
        std::vector<double> e(m);
        for (std::size_t i : idx) {
            for (std::size_t j = 0; j < m; ++j) {
                e[j] = predictions(i, j) - truths(i, j);
                pe.mse[j] += e[j] * e[j];
            }
            pe.correlated_global += quadratic_form(global.inverse, e);
            const auto& li = local[patch_of[i]];
            if (li) {
                local_sum += quadratic_form(li->inverse, e);
                ++local_n;
                pe.ridge_patch |= li->ridge;
            }
        }
        for (auto& v : pe.mse) v /= static_cast<double>(idx.size());
        pe.correlated_global /= static_cast<double>(idx.size());
        if (local_n > 0) pe.correlated_patch = local_sum / static_cast<double>(local_n);
        return pe;
    };

    for (std::size_t c = 0; c < lattice.cells.size(); ++c) {
        if (points[c].empty()) continue;
        const auto& members = lattice.cells[c].members;
        if (members.size() >= 3) {
            local[c] = guarded_inverse(sample_covariance(member_responses(train, lattice.responses, members)));
        }
    }
    for (std::size_t c = 0; c < lattice.cells.size(); ++c) {
        if (!points[c].empty()) rep.patches.push_back(summarize(lattice.cells[c].name, points[c]));
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    rep.pooled = summarize("pooled", all);

    rep.patch_mean.patch = "patch_mean";
    rep.patch_mean.n = n;
    rep.patch_mean.mse.assign(m, 0.0);
    double local_sum = 0.0;
    std::size_t local_n = 0;
    for (const auto& pe : rep.patches) {
        for (std::size_t j = 0; j < m; ++j) rep.patch_mean.mse[j] += pe.mse[j];
        rep.patch_mean.correlated_global += pe.correlated_global;
        rep.patch_mean.ridge_global |= pe.ridge_global;
        rep.patch_mean.ridge_patch |= pe.ridge_patch;
        if (pe.correlated_patch) {
            local_sum += *pe.correlated_patch;
            ++local_n;
        }
    }
    const auto np = static_cast<double>(rep.patches.size());
    for (auto& v : rep.patch_mean.mse) v /= np;
    rep.patch_mean.correlated_global /= np;
    if (local_n > 0) rep.patch_mean.correlated_patch = local_sum / static_cast<double>(local_n);
    return rep;
}

// ---------------------------------------------------------- OLS

OlsFit ols_fit_design(const Matrix& x, std::span<const double> y, std::vector<std::string> covariates,
                      std::string label, std::string response) {
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (y.size() != n) throw_data("ols: response length differs from the design");
    if (covariates.size() != p) throw_data("ols: one name per covariate is required");
    if (n <= p + 1) {
        throw_data("ols" + (label.empty() ? std::string() : " for '" + label + "'") + ": " + std::to_string(n) +
                   " rows are too few for " + std::to_string(p) + " covariates");
    }

    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        a(ii, 0) = 1.0;
        for (std::size_t j = 0; j < p; ++j) a(ii, static_cast<Eigen::Index>(j + 1)) = x(i, j);
        b(ii) = y[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    const auto q = static_cast<Eigen::Index>(p + 1);
    if (qr.rank() < q) {
        auto name_of = [&](Eigen::Index col) {
            return col == 0 ? std::string("intercept") : covariates[static_cast<std::size_t>(col - 1)];
        };
        const auto& perm = qr.colsPermutation().indices();
        Eigen::MatrixXd kept(a.rows(), qr.rank());
        for (Eigen::Index k = 0; k < qr.rank(); ++k) kept.col(k) = a.col(perm(k));
        std::string names;
        for (Eigen::Index k = qr.rank(); k < q; ++k) {
            const Eigen::Index col = perm(k);
            // the kept columns that reproduce the dropped one
            const Eigen::VectorXd coef = kept.colPivHouseholderQr().solve(a.col(col));
            std::string with;
            for (Eigen::Index j = 0; j < coef.size(); ++j) {
                if (std::abs(coef(j)) * kept.col(j).norm() <= 1e-9 * a.col(col).norm()) continue;
                with += (with.empty() ? "" : ", ") + name_of(perm(j));
            }
            if (!names.empty()) names += "; ";
            names += name_of(col) + (with.empty() ? "" : " (with " + with + ")");
        }
        throw_data("ols" + (label.empty() ? std::string() : " for '" + label + "'") +
                   ": rank-deficient design; collinear column(s): " + names);
    }
    const Eigen::VectorXd beta = qr.solve(b);
    const Eigen::VectorXd resid = b - a * beta;

    OlsFit fit;
    fit.label = std::move(label);
    fit.response = std::move(response);
    fit.covariates = std::move(covariates);
    fit.n = n;
    fit.df = n - p - 1;
    fit.intercept = beta(0);
    for (std::size_t j = 0; j < p; ++j) fit.slopes.push_back(beta(static_cast<Eigen::Index>(j + 1)));
    const double sigma2 = resid.squaredNorm() / static_cast<double>(fit.df);
    fit.residual_se = std::sqrt(sigma2);

    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(q, q));
    const Eigen::MatrixXd cov_perm = rinv * rinv.transpose();
    const Eigen::MatrixXd cov = qr.colsPermutation() * cov_perm * qr.colsPermutation().transpose();

    const boost::math::students_t dist(static_cast<double>(fit.df));
    for (Eigen::Index k = 0; k < q; ++k) {
        const double se = std::sqrt(sigma2 * cov(k, k));
        fit.std_errors.push_back(se);
        double pv = 1.0;
        if (se > 0.0) {
            pv = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(beta(k) / se)));
        } else if (beta(k) != 0.0) {
            pv = 0.0;
        }
        fit.p_values.push_back(pv);
    }
    return fit;
}

std::vector<OlsFit> ols_fit(const LabeledDataset& ds, const std::string& response,
                            std::span<const std::string> covariates, bool per_label) {
    if (covariates.empty()) throw_config("ols: at least one covariate is required");
    numeric_column(ds.table(), response, "ols response");
    for (const auto& c : covariates) numeric_column(ds.table(), c, "ols covariate");
    std::vector<std::string> used{response};
    used.insert(used.end(), covariates.begin(), covariates.end());
    const std::vector<std::size_t> rows = ds.table().complete_rows(used);
    if (rows.size() < ds.n_rows()) {
        warn("ols: dropped " + std::to_string(ds.n_rows() - rows.size()) + " row(s) with missing values");
    }

    auto fit_rows = [&](const std::vector<std::size_t>& idx, const std::string& label) {
        Matrix x(idx.size(), covariates.size());
        std::vector<double> y(idx.size());
        const Column& yc = ds.table().column(response);
        for (std::size_t j = 0; j < covariates.size(); ++j) {
            const Column& c = ds.table().column(covariates[j]);
            for (std::size_t i = 0; i < idx.size(); ++i) x(i, j) = c.values[idx[i]];
        }
        for (std::size_t i = 0; i < idx.size(); ++i) y[i] = yc.values[idx[i]];
        return ols_fit_design(x, y, std::vector<std::string>(covariates.begin(), covariates.end()), label, response);
    };

    std::vector<OlsFit> fits;
    if (!per_label) {
        fits.push_back(fit_rows(rows, "all"));
        return fits;
    }
    for (std::size_t l = 0; l < ds.n_labels(); ++l) {
        std::vector<std::size_t> idx;
        for (std::size_t r : rows) {
            if (ds.label_codes()[r] == static_cast<int>(l)) idx.push_back(r);
        }
        if (idx.empty()) continue;
        fits.push_back(fit_rows(idx, ds.labels()[l]));
    }
    return fits;
}

void write_ols_table_csv(std::ostream& out, const std::vector<OlsFit>& fits) {
    if (fits.empty()) return;
    std::vector<std::string> header{"label", "intercept"};
    header.insert(header.end(), fits.front().covariates.begin(), fits.front().covariates.end());
    header.push_back("residual_std_error");
    header.push_back("df");
    csv::write_row(out, header);
    for (const auto& f : fits) {
        auto cell = [&](double v, std::size_t term) {
            return csv::format_fixed(v, 3) + (f.significant(term) ? "*" : "");
        };
        std::vector<std::string> row{f.label, cell(f.intercept, 0)};
        for (std::size_t j = 0; j < f.slopes.size(); ++j) row.push_back(cell(f.slopes[j], j + 1));
        row.push_back(csv::format_fixed(f.residual_se, 3));
        row.push_back(std::to_string(f.df));
        csv::write_row(out, row);
    }
}

// ---------------------------------------------------------- reports

void write_major_scores_csv(std::ostream& out, const std::vector<MajorFeatureScore>& scores) {
    csv::write_row(out, {"feature", "score", "threshold", "major"});
    for (const auto& s : scores) {
        csv::write_row(out, {s.feature, csv::format_double(s.score), csv::format_double(s.threshold),
                             s.major ? "1" : "0"});
    }
}

nlohmann::json lattice_json(const LocalityLattice& lattice) {
    nlohmann::json j;
    j["majors"] = lattice.majors;
    j["responses"] = lattice.responses;
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : lattice.binnings) bins.push_back(to_json(b));
    j["binnings"] = bins;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : lattice.cells) {
        cells.push_back({{"name", c.name}, {"bins", c.bins}, {"count", c.members.size()}, {"empty", c.members.empty()}});
    }
    j["cells"] = cells;
    j["occupied_cells"] = lattice.occupied_cells();
    j["usable_rows"] = lattice.usable_rows;
    j["excluded_rows"] = lattice.excluded_rows;
    return j;
}

void write_minor_entropy_csv(std::ostream& out, const MinorFeatureReport& report) {
    csv::write_row(out, {"patch", "feature", "members", "categories", "normalized_entropy"});
    for (const auto& e : report.entries) {
        csv::write_row(out, {e.patch, e.feature, std::to_string(e.members), std::to_string(e.categories),
                             csv::format_double(e.normalized)});
    }
}

void write_error_report_csv(std::ostream& out, const ErrorReport& report) {
    std::vector<std::string> header{"patch", "n"};
    for (const auto& r : report.responses) header.push_back("mse_" + r);
    for (const char* h : {"correlated_global", "correlated_patch", "ridge_global", "ridge_patch"}) header.push_back(h);
    csv::write_row(out, header);
    auto emit = [&](const PatchError& pe) {
        std::vector<std::string> row{pe.patch, std::to_string(pe.n)};
        for (double v : pe.mse) row.push_back(csv::format_double(v));
        row.push_back(csv::format_double(pe.correlated_global));
        row.push_back(pe.correlated_patch ? csv::format_double(*pe.correlated_patch) : "");
        row.push_back(pe.ridge_global ? "1" : "0");
        row.push_back(pe.ridge_patch ? "1" : "0");
        csv::write_row(out, row);
    };
    for (const auto& pe : report.patches) emit(pe);
    emit(report.pooled);
    emit(report.patch_mean);
}

void write_manifold_plot_data(std::ostream& out, const DataTable& train, const LocalityLattice& lattice,
                              const std::string& label_column) {
    std::vector<std::size_t> cell_of(train.n_rows(), lattice.cells.size());
    for (std::size_t c = 0; c < lattice.cells.size(); ++c) {
        for (std::size_t r : lattice.cells[c].members) cell_of[r] = c;
    }
    out << "# row_id";
    for (const auto& r : lattice.responses) out << ' ' << r;
    for (const auto& m : lattice.majors) out << ' ' << m;
    out << " patch";
    if (!label_column.empty()) out << ' ' << label_column;
    out << '\n';
    const Column* label = label_column.empty() ? nullptr : &train.column(label_column);
    for (std::size_t r = 0; r < train.n_rows(); ++r) {
        if (cell_of[r] == lattice.cells.size()) continue;
        out << train.row_ids()[r];
        for (const auto& f : lattice.responses) out << ' ' << csv::format_double(train.column(f).values[r]);
        for (const auto& f : lattice.majors) out << ' ' << csv::format_double(train.column(f).values[r]);
        out << ' ' << lattice.cells[cell_of[r]].name;
        if (label) out << ' ' << label->text(r);
        out << '\n';
    }
}

}  // namespace ceda
