#include "ceda/synth.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ceda/error.hpp"
#include "ceda/rng.hpp"

namespace ceda {

namespace {

double per_label(const std::vector<double>& values, std::size_t label, const char* what) {
    if (values.empty()) throw_config(std::string("synth parameter '") + what + "' is empty");
    if (values.size() == 1) return values.front();
    if (label >= values.size()) throw_config(std::string("synth parameter '") + what + "' has too few entries");
    return values[label];
}

void validate(const GaussCloudsParams& p) {
    if (p.centers.empty()) throw_config("gauss-clouds needs at least one center");
    const std::size_t dims = p.centers.front().size();
    if (dims == 0) throw_config("gauss-clouds centers must have at least one coordinate");
    for (const auto& c : p.centers) {
        if (c.size() != dims) throw_config("gauss-clouds centers differ in dimension");
    }
    if (p.n_per_label < 1) throw_config("gauss-clouds n_per_label must be >= 1");
    if (p.covariances.empty()) {
        if (p.sd.size() != 1 && p.sd.size() != p.centers.size()) {
            throw_config("gauss-clouds sd needs one value or one per label");
        }
        for (double s : p.sd) {
            if (!(s > 0.0)) throw_config("gauss-clouds spread must be positive");
        }
    } else if (p.covariances.size() != p.centers.size()) {
        throw_config("gauss-clouds covariances need one matrix per label");
    }
}

void validate(const MagnusParams& p) {
    if (p.labels < 1 || p.n_per_label < 1) throw_config("magnus-manifold counts must be >= 1");
    if (!(p.a > 0.0)) throw_config("magnus-manifold amplitude a must be positive");
    if (p.noise_sd < 0.0) throw_config("magnus-manifold noise_sd must be non-negative");
    if (!(p.spin_dir_max > p.spin_dir_min) || !(p.spin_rate_max > p.spin_rate_min)) {
        throw_config("magnus-manifold ranges must have positive width");
    }
    if (!(p.label_spread > 0.0 && p.label_spread <= 1.0)) {
        throw_config("magnus-manifold label_spread must lie in (0, 1]");
    }
}

void validate(const LinearSpeedParams& p) {
    if (p.labels < 1 || p.n_per_label < 1) throw_config("linear-speed counts must be >= 1");
    if (p.noise_sd < 0.0) throw_config("linear-speed noise_sd must be non-negative");
    if (!(p.x0_sd > 0.0)) throw_config("linear-speed x0_sd must be positive");
    if (!(p.start_speed_max > p.start_speed_min)) throw_config("linear-speed start_speed range must have positive width");
    for (const auto* v : {&p.alpha, &p.beta1, &p.beta2}) {
        if (v->size() != 1 && v->size() != p.labels) {
            throw_config("linear-speed coefficients need one value or one per label");
        }
    }
}

Column numeric(std::string name, std::vector<double> values) {
    Column c;
    c.name = std::move(name);
    c.kind = FeatureKind::continuous;
    c.values = std::move(values);
    return c;
}

Column label_column(const std::vector<std::string>& names, const std::vector<int>& codes) {
    Column c;
    c.name = "label";
    c.kind = FeatureKind::categorical;
    c.levels = names;
    c.values.reserve(codes.size());
    for (int code : codes) c.values.push_back(code);
    return c;
}

LabeledDataset generate(const GaussCloudsParams& p, Rng& rng) {
    validate(p);
    const std::size_t labels = p.centers.size();
    const std::size_t dims = p.centers.front().size();

    std::vector<Eigen::MatrixXd> factors;
    for (std::size_t l = 0; l < labels; ++l) {
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(dims));
        if (p.covariances.empty()) {
            const double sd = per_label(p.sd, l, "sd");
            cov.diagonal().setConstant(sd * sd);
        } else {
            const auto& m = p.covariances[l];
            if (m.size() != dims) throw_config("gauss-clouds covariance has wrong shape");
            for (std::size_t i = 0; i < dims; ++i) {
                if (m[i].size() != dims) throw_config("gauss-clouds covariance has wrong shape");
                for (std::size_t j = 0; j < dims; ++j) {
                    cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
                }
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) throw_config("gauss-clouds covariance is not positive definite");
        factors.push_back(llt.matrixL());
    }

    const std::size_t n = labels * p.n_per_label;
    std::vector<std::vector<double>> cols(dims + p.noise_dims, std::vector<double>(n));
    std::vector<int> codes(n);
    Eigen::VectorXd z(static_cast<Eigen::Index>(dims));
    std::size_t row = 0;
    for (std::size_t l = 0; l < labels; ++l) {
        for (std::size_t k = 0; k < p.n_per_label; ++k, ++row) {
            for (std::size_t d = 0; d < dims; ++d) z(static_cast<Eigen::Index>(d)) = rng.normal();
            const Eigen::VectorXd x = factors[l] * z;
            for (std::size_t d = 0; d < dims; ++d) cols[d][row] = p.centers[l][d] + x(static_cast<Eigen::Index>(d));
            for (std::size_t d = 0; d < p.noise_dims; ++d) cols[dims + d][row] = rng.normal();
            codes[row] = static_cast<int>(l);
        }
    }

    std::vector<Column> columns;
    for (std::size_t d = 0; d < dims; ++d) columns.push_back(numeric("f" + std::to_string(d + 1), std::move(cols[d])));
    for (std::size_t d = 0; d < p.noise_dims; ++d) {
        columns.push_back(numeric("noise" + std::to_string(d + 1), std::move(cols[dims + d])));
    }
    columns.push_back(label_column(synth_label_names(labels), codes));
    return LabeledDataset(DataTable(std::move(columns), "synth:gauss-clouds"), "label");
}

LabeledDataset generate(const MagnusParams& p, Rng& rng) {
    validate(p);
    const std::size_t n = p.labels * p.n_per_label;
    std::vector<double> spin_dir(n), spin_rate(n), pfx_x(n), pfx_z(n), noise(n), start_speed(n);
    std::vector<int> codes(n);
    const double range = p.spin_dir_max - p.spin_dir_min;
    const double width = p.label_spread * range;
    std::size_t row = 0;
    for (std::size_t l = 0; l < p.labels; ++l) {
        const double start =
            p.labels > 1 ? p.spin_dir_min + (range - width) * static_cast<double>(l) / static_cast<double>(p.labels - 1)
                         : p.spin_dir_min;
        const double offset = p.label_offset * static_cast<double>(l);
        for (std::size_t k = 0; k < p.n_per_label; ++k, ++row) {
            const double s = rng.uniform(start, start + width);
            const double r = rng.uniform(p.spin_rate_min, p.spin_rate_max);
            const double rad = s * std::numbers::pi / 180.0;
            spin_dir[row] = s;
            spin_rate[row] = r;
            pfx_x[row] = p.a * r * std::sin(rad) + offset;
            pfx_z[row] = p.a * r * std::cos(rad) + offset;
            if (p.noise_sd > 0.0) {
                pfx_x[row] += rng.normal(0.0, p.noise_sd);
                pfx_z[row] += rng.normal(0.0, p.noise_sd);
            }
            noise[row] = rng.uniform();
            start_speed[row] = rng.uniform(85.0, 95.0);
            codes[row] = static_cast<int>(l);
        }
    }
    std::vector<Column> columns;
    columns.push_back(numeric("spin_dir", std::move(spin_dir)));
    columns.push_back(numeric("spin_rate", std::move(spin_rate)));
    columns.push_back(numeric("pfx_x", std::move(pfx_x)));
    columns.push_back(numeric("pfx_z", std::move(pfx_z)));
    columns.push_back(numeric("noise", std::move(noise)));
    columns.push_back(numeric("start_speed", std::move(start_speed)));
    columns.push_back(label_column(synth_label_names(p.labels), codes));
    return LabeledDataset(DataTable(std::move(columns), "synth:magnus-manifold"), "label");
}

LabeledDataset generate(const LinearSpeedParams& p, Rng& rng) {
    validate(p);
    const std::size_t n = p.labels * p.n_per_label;
    std::vector<double> x0(n), start_speed(n), end_speed(n);
    std::vector<int> codes(n);
    std::size_t row = 0;
    for (std::size_t l = 0; l < p.labels; ++l) {
        const double center = p.labels > 1 ? -p.x0_spread / 2.0 + p.x0_spread * static_cast<double>(l) /
                                                                        static_cast<double>(p.labels - 1)
                                           : 0.0;
        const double alpha = per_label(p.alpha, l, "alpha");
        const double b1 = per_label(p.beta1, l, "beta1");
        const double b2 = per_label(p.beta2, l, "beta2");
        for (std::size_t k = 0; k < p.n_per_label; ++k, ++row) {
            x0[row] = rng.normal(center, p.x0_sd);
            start_speed[row] = rng.uniform(p.start_speed_min, p.start_speed_max);
            end_speed[row] = alpha + b1 * x0[row] + b2 * start_speed[row];
            if (p.noise_sd > 0.0) end_speed[row] += rng.normal(0.0, p.noise_sd);
            codes[row] = static_cast<int>(l);
        }
    }
    std::vector<Column> columns;
    columns.push_back(numeric("x0", std::move(x0)));
    columns.push_back(numeric("start_speed", std::move(start_speed)));
    columns.push_back(numeric("end_speed", std::move(end_speed)));
    columns.push_back(label_column(synth_label_names(p.labels), codes));
    return LabeledDataset(DataTable(std::move(columns), "synth:linear-speed"), "label");
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
        throw_config(std::string("synth.") + key + " has the wrong type");
    }
}

/// Accepts a scalar or an array for vector-valued parameters.
void read_vector(const nlohmann::json& j, const char* key, std::vector<double>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_number()) {
        out = {v.get<double>()};
    } else {
        read_field(j, key, out);
    }
}

}  // namespace

std::string synth_kind_name(const SynthParams& params) {
    switch (params.index()) {
        case 0: return "gauss-clouds";
        case 1: return "magnus-manifold";
        default: return "linear-speed";
    }
}

SynthParams synth_params_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) throw_config("synth parameters need a 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gauss-clouds") {
        GaussCloudsParams p;
        read_field(j, "centers", p.centers);
        read_vector(j, "sd", p.sd);
        read_field(j, "covariances", p.covariances);
        read_field(j, "n_per_label", p.n_per_label);
        read_field(j, "noise_dims", p.noise_dims);
        return p;
    }
    if (kind == "magnus-manifold") {
        MagnusParams p;
        read_field(j, "labels", p.labels);
        read_field(j, "n_per_label", p.n_per_label);
        read_field(j, "a", p.a);
        read_field(j, "noise_sd", p.noise_sd);
        read_field(j, "spin_dir_min", p.spin_dir_min);
        read_field(j, "spin_dir_max", p.spin_dir_max);
        read_field(j, "spin_rate_min", p.spin_rate_min);
        read_field(j, "spin_rate_max", p.spin_rate_max);
        read_field(j, "label_spread", p.label_spread);
        read_field(j, "label_offset", p.label_offset);
        return p;
    }
    if (kind == "linear-speed") {
        LinearSpeedParams p;
        read_field(j, "labels", p.labels);
        read_field(j, "n_per_label", p.n_per_label);
        read_vector(j, "alpha", p.alpha);
        read_vector(j, "beta1", p.beta1);
        read_vector(j, "beta2", p.beta2);
        read_field(j, "noise_sd", p.noise_sd);
        read_field(j, "x0_spread", p.x0_spread);
        read_field(j, "x0_sd", p.x0_sd);
        read_field(j, "start_speed_min", p.start_speed_min);
        read_field(j, "start_speed_max", p.start_speed_max);
        return p;
    }
    throw_config("unknown synth kind '" + kind + "' (expected gauss-clouds, magnus-manifold or linear-speed)");
}

nlohmann::json synth_params_to_json(const SynthParams& params) {
    nlohmann::json j;
    j["kind"] = synth_kind_name(params);
    if (const auto* g = std::get_if<GaussCloudsParams>(&params)) {
        j["centers"] = g->centers;
        j["sd"] = g->sd;
        if (!g->covariances.empty()) j["covariances"] = g->covariances;
        j["n_per_label"] = g->n_per_label;
        j["noise_dims"] = g->noise_dims;
    } else if (const auto* m = std::get_if<MagnusParams>(&params)) {
        j["labels"] = m->labels;
        j["n_per_label"] = m->n_per_label;
        j["a"] = m->a;
        j["noise_sd"] = m->noise_sd;
        j["spin_dir_min"] = m->spin_dir_min;
        j["spin_dir_max"] = m->spin_dir_max;
        j["spin_rate_min"] = m->spin_rate_min;
        j["spin_rate_max"] = m->spin_rate_max;
        j["label_spread"] = m->label_spread;
        j["label_offset"] = m->label_offset;
    } else {
        const auto& s = std::get<LinearSpeedParams>(params);
        j["labels"] = s.labels;
        j["n_per_label"] = s.n_per_label;
        j["alpha"] = s.alpha;
        j["beta1"] = s.beta1;
        j["beta2"] = s.beta2;
        j["noise_sd"] = s.noise_sd;
        j["x0_spread"] = s.x0_spread;
        j["x0_sd"] = s.x0_sd;
        j["start_speed_min"] = s.start_speed_min;
        j["start_speed_max"] = s.start_speed_max;
    }
    return j;
}

std::vector<std::string> synth_label_names(std::size_t count) {
    const std::size_t width = std::to_string(count).size();
    std::vector<std::string> out;
    out.reserve(count);
    for (std::size_t i = 1; i <= count; ++i) {
        std::string digits = std::to_string(i);
        if (count >= 10) digits.insert(0, width - digits.size(), '0');
        out.push_back("L" + digits);
    }
    return out;
}

LabeledDataset synth_generate(const SynthParams& params, std::uint64_t seed) {
    Rng rng(seed);
    return std::visit([&](const auto& p) { return generate(p, rng); }, params);
}

nlohmann::json synth_ground_truth(const SynthParams& params, std::uint64_t seed, const LabeledDataset& data) {
    nlohmann::json j;
    j["generator"] = synth_params_to_json(params);
    j["seed"] = seed;
    j["rows"] = data.n_rows();
    j["label_column"] = data.label_column();
    j["labels"] = data.labels();
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [label, count] : data.per_label_counts()) counts[label] = count;
    j["per_label_counts"] = counts;
    nlohmann::json columns = nlohmann::json::array();
    for (const auto& c : data.table().columns()) columns.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
    j["columns"] = columns;

    if (const auto* m = std::get_if<MagnusParams>(&params)) {
        nlohmann::json per_label = nlohmann::json::array();
        const double range = m->spin_dir_max - m->spin_dir_min;
        const double width = m->label_spread * range;
        for (std::size_t l = 0; l < m->labels; ++l) {
            const double start = m->labels > 1 ? m->spin_dir_min + (range - width) * static_cast<double>(l) /
                                                                       static_cast<double>(m->labels - 1)
                                               : m->spin_dir_min;
            per_label.push_back({{"label", data.labels()[l]},
                                 {"spin_dir_window", {start, start + width}},
                                 {"offset", m->label_offset * static_cast<double>(l)}});
        }
        j["per_label"] = per_label;
    } else if (const auto* s = std::get_if<LinearSpeedParams>(&params)) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t l = 0; l < s->labels; ++l) {
            rows.push_back({{"label", data.labels()[l]},
                                 {"alpha", per_label(s->alpha, l, "alpha")},
                                 {"beta1", per_label(s->beta1, l, "beta1")},
                                 {"beta2", per_label(s->beta2, l, "beta2")}});
        }
        j["per_label"] = rows;
    }
    return j;
}

}  // namespace ceda
