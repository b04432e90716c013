#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "ceda/association.hpp"
#include "ceda/csv.hpp"
#include "ceda/discretize.hpp"
#include "ceda/error.hpp"
#include "ceda/log.hpp"
#include "ceda/parallel.hpp"
#include "ceda/rma.hpp"
#include "ceda/rng.hpp"

#ifndef CEDA_VERSION
#define CEDA_VERSION "unknown"
#endif

namespace ceda::cli {

using nlohmann::json;
namespace fs = std::filesystem;

Command parse_command(std::string_view text) {
    static const std::pair<std::string_view, Command> table[] = {
        {"mce", Command::mce},     {"let", Command::let},         {"pmap", Command::pmap}, {"chain", Command::chain},
        {"dissect", Command::dissect}, {"rma", Command::rma}, {"synth", Command::synth}};
    for (const auto& [name, cmd] : table) {
        if (name == text) return cmd;
    }
    throw_config("unknown command '" + std::string(text) + "'");
}

std::string_view to_string(Command command) {
    switch (command) {
        case Command::mce: return "mce";
        case Command::let: return "let";
        case Command::pmap: return "pmap";
        case Command::chain: return "chain";
        case Command::dissect: return "dissect";
        case Command::rma: return "rma";
        case Command::synth: return "synth";
    }
    return "unknown";
}

// ---------------------------------------------------------- config parsing

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) { throw_config(path + ": " + what); }

void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) bad(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) bad(path + "." + key, "unknown key");
    }
}

std::size_t as_count(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::size_t>(v.get<long long>());
    bad(path, "expected a non-negative integer");
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) bad(path, "expected a number");
    return v.get<double>();
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) bad(path, "expected true or false");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) bad(path, "expected a string");
    return v.get<std::string>();
}

std::vector<std::string> as_strings(const json& v, const std::string& path) {
    if (!v.is_array()) bad(path, "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_string(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

CompetitionConfig parse_competition(const json& j, const std::string& path, CompetitionConfig cfg) {
    check_keys(j, path, {"k_star", "c_lower", "c_upper", "dominant_fraction", "outlier_quantile", "outlier_enabled"});
    if (j.contains("k_star")) cfg.k_star = as_count(j["k_star"], path + ".k_star");
    if (j.contains("c_lower")) cfg.c_lower = as_number(j["c_lower"], path + ".c_lower");
    if (j.contains("c_upper")) cfg.c_upper = as_number(j["c_upper"], path + ".c_upper");
    if (j.contains("dominant_fraction")) cfg.dominant_fraction = as_number(j["dominant_fraction"], path + ".dominant_fraction");
    if (j.contains("outlier_quantile")) cfg.outlier_quantile = as_number(j["outlier_quantile"], path + ".outlier_quantile");
    if (j.contains("outlier_enabled")) cfg.outlier_enabled = as_bool(j["outlier_enabled"], path + ".outlier_enabled");
    try {
        cfg.validate();
    } catch (const Error& e) {
        bad(path, e.what());
    }
    return cfg;
}

void parse_dataset(const json& j, const fs::path& base, RunConfig& cfg) {
    const std::string path = "config.dataset";
    check_keys(j, path, {"path", "label_column", "kinds", "discrete_max_distinct"});
    DatasetConfig d;
    if (!j.contains("path")) bad(path + ".path", "required");
    d.path = resolve(base, as_string(j["path"], path + ".path"));
    if (j.contains("label_column")) d.label_column = as_string(j["label_column"], path + ".label_column");
    if (j.contains("kinds")) {
        if (!j["kinds"].is_object()) bad(path + ".kinds", "expected an object");
        for (const auto& [name, kind] : j["kinds"].items()) {
            try {
                d.kinds[name] = parse_feature_kind(as_string(kind, path + ".kinds." + name));
            } catch (const Error& e) {
                bad(path + ".kinds." + name, e.what());
            }
        }
    }
    if (j.contains("discrete_max_distinct")) {
        d.discrete_max_distinct = as_count(j["discrete_max_distinct"], path + ".discrete_max_distinct");
    }
    cfg.dataset = d;
}

void parse_rma(const json& j, RunConfig& cfg) {
    const std::string path = "config.rma";
    check_keys(j, path, {"responses", "major_candidates", "majors", "minor_candidates", "minors", "k_star", "tau",
                         "minor_threshold", "bins", "coarse_bins", "ols"});
    RmaConfig& r = cfg.rma;
    if (j.contains("responses")) r.responses = as_strings(j["responses"], path + ".responses");
    if (j.contains("major_candidates")) r.major_candidates = as_strings(j["major_candidates"], path + ".major_candidates");
    if (j.contains("majors")) r.majors = as_strings(j["majors"], path + ".majors");
    if (j.contains("minor_candidates")) r.minor_candidates = as_strings(j["minor_candidates"], path + ".minor_candidates");
    if (j.contains("minors")) r.minors = as_strings(j["minors"], path + ".minors");
    if (j.contains("k_star")) r.k_star = as_count(j["k_star"], path + ".k_star");
    if (r.k_star < 1) bad(path + ".k_star", "must be >= 1");
    if (j.contains("tau")) r.tau = as_number(j["tau"], path + ".tau");
    if (!(r.tau >= 0.0 && r.tau <= 1.0)) bad(path + ".tau", "must lie in [0, 1]");
    if (j.contains("minor_threshold")) r.minor_threshold = as_number(j["minor_threshold"], path + ".minor_threshold");
    if (j.contains("bins")) r.bins = as_count(j["bins"], path + ".bins");
    if (r.bins < 1) bad(path + ".bins", "must be >= 1");
    if (j.contains("coarse_bins")) r.coarse_bins = as_count(j["coarse_bins"], path + ".coarse_bins");
    if (r.coarse_bins < 1) bad(path + ".coarse_bins", "must be >= 1");
    if (j.contains("ols")) {
        const json& o = j["ols"];
        check_keys(o, path + ".ols", {"response", "covariates", "per_label"});
        OlsConfig ols;
        if (!o.contains("response")) bad(path + ".ols.response", "required");
        ols.response = as_string(o["response"], path + ".ols.response");
        if (!o.contains("covariates")) bad(path + ".ols.covariates", "required");
        ols.covariates = as_strings(o["covariates"], path + ".ols.covariates");
        if (o.contains("per_label")) ols.per_label = as_bool(o["per_label"], path + ".ols.per_label");
        r.ols = ols;
    }
}

}  // namespace

RunConfig parse_config(const json& j, const fs::path& base_dir) {
    RunConfig cfg;
    cfg.raw = j.is_null() ? json::object() : j;
    const json& root = cfg.raw;
    check_keys(root, "config",
               {"dataset", "split", "binning", "features", "competition", "let", "chain", "dissect", "mce", "rma", "synth",
                "output_dir", "seed", "threads"});

    if (root.contains("seed")) cfg.seed = as_count(root["seed"], "config.seed");
    if (root.contains("threads")) cfg.threads = static_cast<unsigned>(as_count(root["threads"], "config.threads"));
    if (root.contains("output_dir")) cfg.output_dir = resolve(base_dir, as_string(root["output_dir"], "config.output_dir"));
    if (root.contains("dataset")) parse_dataset(root["dataset"], base_dir, cfg);

    if (root.contains("split")) {
        const json& s = root["split"];
        check_keys(s, "config.split", {"train_fraction", "stratified"});
        if (s.contains("train_fraction")) cfg.split.train_fraction = as_number(s["train_fraction"], "config.split.train_fraction");
        if (s.contains("stratified")) cfg.split.stratified = as_bool(s["stratified"], "config.split.stratified");
        if (!(cfg.split.train_fraction > 0.0 && cfg.split.train_fraction < 1.0)) {
            bad("config.split.train_fraction", "must lie in (0, 1)");
        }
    }
    if (root.contains("binning")) {
        const json& b = root["binning"];
        check_keys(b, "config.binning", {"default_bins", "bins"});
        if (b.contains("default_bins") && !b["default_bins"].is_null()) {
            cfg.default_bins = as_count(b["default_bins"], "config.binning.default_bins");
            if (*cfg.default_bins < 1) bad("config.binning.default_bins", "must be >= 1");
        }
        if (b.contains("bins")) {
            if (!b["bins"].is_object()) bad("config.binning.bins", "expected an object");
            for (const auto& [name, v] : b["bins"].items()) {
                cfg.bins[name] = as_count(v, "config.binning.bins." + name);
                if (cfg.bins[name] < 1) bad("config.binning.bins." + name, "must be >= 1");
            }
        }
    }
    if (root.contains("features")) cfg.features = as_strings(root["features"], "config.features");
    if (root.contains("competition")) cfg.competition = parse_competition(root["competition"], "config.competition", {});
    if (root.contains("let")) {
        const json& l = root["let"];
        check_keys(l, "config.let", {"samples_per_triplet", "zscore", "normalize", "max_tie_retries"});
        if (l.contains("samples_per_triplet")) {
            cfg.let.samples_per_triplet = as_count(l["samples_per_triplet"], "config.let.samples_per_triplet");
            if (cfg.let.samples_per_triplet < 1) bad("config.let.samples_per_triplet", "must be >= 1");
        }
        if (l.contains("zscore")) cfg.let.zscore = as_bool(l["zscore"], "config.let.zscore");
        if (l.contains("normalize")) cfg.let.normalize = as_bool(l["normalize"], "config.let.normalize");
        if (l.contains("max_tie_retries")) cfg.let.max_tie_retries = as_count(l["max_tie_retries"], "config.let.max_tie_retries");
    }
    if (root.contains("chain")) {
        const json& c = root["chain"];
        if (!c.is_array()) bad("config.chain", "expected an array of feature sets");
        for (std::size_t i = 0; i < c.size(); ++i) {
            const std::string path = "config.chain[" + std::to_string(i) + "]";
            const json& link = c[i];
            check_keys(link, path, {"name", "features", "competition"});
            ChainLink cl;
            if (!link.contains("features")) bad(path + ".features", "required");
            cl.set.features = as_strings(link["features"], path + ".features");
            if (cl.set.features.empty()) bad(path + ".features", "empty feature set");
            cl.set.name = link.contains("name") ? as_string(link["name"], path + ".name") : "set" + std::to_string(i + 1);
            cl.config = link.contains("competition")
                            ? parse_competition(link["competition"], path + ".competition", cfg.competition)
                            : cfg.competition;
            cfg.chain.links.push_back(std::move(cl));
        }
    }
    if (root.contains("dissect")) {
        const json& d = root["dissect"];
        check_keys(d, "config.dissect", {"external", "knn_k", "knn_features"});
        if (d.contains("external")) cfg.external_predictions = resolve(base_dir, as_string(d["external"], "config.dissect.external"));
        if (d.contains("knn_k")) cfg.knn_k = as_count(d["knn_k"], "config.dissect.knn_k");
        if (cfg.knn_k < 1) bad("config.dissect.knn_k", "must be >= 1");
        if (d.contains("knn_features")) cfg.knn_features = as_strings(d["knn_features"], "config.dissect.knn_features");
    }
    if (root.contains("mce")) {
        const json& m = root["mce"];
        check_keys(m, "config.mce", {"groups", "linkage"});
        if (m.contains("groups")) cfg.mce_groups = as_count(m["groups"], "config.mce.groups");
        if (cfg.mce_groups < 1) bad("config.mce.groups", "must be >= 1");
        if (m.contains("linkage")) {
            try {
                cfg.linkage = parse_linkage(as_string(m["linkage"], "config.mce.linkage"));
            } catch (const Error& e) {
                bad("config.mce.linkage", e.what());
            }
        }
    }
    if (root.contains("rma")) parse_rma(root["rma"], cfg);
    if (root.contains("synth")) {
        try {
            cfg.synth = synth_params_from_json(root["synth"]);
        } catch (const Error& e) {
            bad("config.synth", e.what());
        } catch (const json::exception& e) {
            bad("config.synth", e.what());
        }
    }
    return cfg;
}

void apply_override(json& j, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) throw_config("override '" + std::string(assignment) + "' is not key=value");
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &j;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw_config("override key '" + key + "' has an empty component");
        if (!node->is_object()) *node = json::object();
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    *node = std::move(value);
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    return out;
}

int exit_code(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) return static_cast<int>(err->kind());
    if (dynamic_cast<const json::exception*>(&e)) return 1;
    return 3;
}

// ---------------------------------------------------------- running

namespace {

class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_)) throw_config("config.output_dir: cannot create '" + dir_.string() + "'");
    }

    void write(const std::string& name, const std::function<void(std::ostream&)>& fill) {
        std::ostringstream buf;
        fill(buf);
        const std::string bytes = buf.str();
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) throw_config("config.output_dir: cannot write '" + (dir_ / name).string() + "'");
        out << bytes;
        if (!out) throw_config("config.output_dir: failed writing '" + (dir_ / name).string() + "'");
        entries_.push_back({{"file", name}, {"bytes", bytes.size()}, {"fnv1a", fnv1a_hex(bytes)}});
        names_.push_back(name);
    }

    void write_json(const std::string& name, const json& j) {
        write(name, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
    }

    const json& entries() const { return entries_; }
    const std::vector<std::string>& names() const { return names_; }

private:
    fs::path dir_;
    json entries_ = json::array();
    std::vector<std::string> names_;
};

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

LabeledDataset load_dataset(const RunConfig& cfg) {
    if (!cfg.dataset) throw_config("config.dataset: required by this command");
    LoadOptions opts;
    opts.label_column = cfg.dataset->label_column;
    opts.kind_overrides = cfg.dataset->kinds;
    opts.discrete_max_distinct = cfg.dataset->discrete_max_distinct;
    return load_csv(cfg.dataset->path.string(), opts);
}

void require_features(const LabeledDataset& ds, const std::vector<std::string>& features, const std::string& path,
                      bool allow_label = false) {
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!ds.table().has_column(features[i])) {
            bad(path + "[" + std::to_string(i) + "]", "unknown feature '" + features[i] + "'");
        }
        if (!allow_label && features[i] == ds.label_column()) bad(path + "[" + std::to_string(i) + "]", "the label column is not a feature");
    }
}

std::vector<std::string> numeric_features(const LabeledDataset& ds) {
    std::vector<std::string> out;
    for (const auto& f : ds.feature_names()) {
        if (ds.table().column(f).kind != FeatureKind::categorical) out.push_back(f);
    }
    return out;
}

std::vector<std::string> distance_features(const RunConfig& cfg, const LabeledDataset& ds) {
    if (cfg.features.empty()) return numeric_features(ds);
    require_features(ds, cfg.features, "config.features");
    return cfg.features;
}

std::pair<LabeledDataset, LabeledDataset> split(const RunConfig& cfg, const LabeledDataset& ds) {
    SplitSpec spec = cfg.split;
    spec.seed = derive_seed(cfg.seed, stage::split);
    return split_train_test(ds, spec);
}

LetOptions let_options(const RunConfig& cfg) {
    LetOptions opts = cfg.let;
    opts.seed = derive_seed(cfg.seed, stage::let);
    return opts;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

void write_split_summary(Outputs& out, const LabeledDataset& train, const LabeledDataset& test) {
    out.write("split.csv", [&](std::ostream& o) {
        csv::write_row(o, {"row_id", "part"});
        std::vector<std::pair<std::size_t, std::string>> rows;
        for (std::size_t id : train.table().row_ids()) rows.emplace_back(id, "train");
        for (std::size_t id : test.table().row_ids()) rows.emplace_back(id, "test");
        std::sort(rows.begin(), rows.end());
        for (const auto& [id, part] : rows) csv::write_row(o, {std::to_string(id), part});
    });
}

void run_mce(const RunConfig& cfg, Outputs& out) {
    const LabeledDataset ds = load_dataset(cfg);
    std::vector<std::string> features = cfg.features;
    if (features.empty()) {
        features = ds.feature_names();
    } else {
        require_features(ds, features, "config.features");
    }
    const BinningSet binnings = build_binnings(ds.table(), features, cfg.bins, cfg.default_bins);
    const MceMatrix mce = mce_matrix(ds.table(), features, binnings, cfg.linkage);
    out.write("mce_matrix.csv", [&](std::ostream& o) { write_mce_csv(o, mce); });
    out.write_json("mce_groups.json", mce_groups_json(mce, cfg.mce_groups));
    json bins = json::object();
    for (const auto& [name, b] : binnings) bins[name] = to_json(b);
    out.write_json("binnings.json", bins);
    const auto ranking = rank_features_by_label_association(ds, features, binnings);
    out.write("label_association.csv", [&](std::ostream& o) { write_label_association_csv(o, ranking); });
}

void run_let(const RunConfig& cfg, Outputs& out) {
    const LabeledDataset ds = load_dataset(cfg);
    const auto features = distance_features(cfg, ds);
    const auto [train, test] = split(cfg, ds);
    write_split_summary(out, train, test);
    DominanceMatrix dm;
    const LabelTree tree = build_let(train, features, let_options(cfg), &dm);
    out.write_json("tree.json", tree.to_json());
    out.write("tree.nwk", [&](std::ostream& o) { o << tree.to_newick() << '\n'; });
    out.write("relative_distance.csv",
              [&](std::ostream& o) { write_square_csv(o, tree.label_names, tree.relative_distance); });
    if (!dm.pairs.empty()) {
        out.write("dominance.csv", [&](std::ostream& o) { write_dominance_csv(o, dm); });
    }
}

void run_pmap(const RunConfig& cfg, Outputs& out) {
    const LabeledDataset ds = load_dataset(cfg);
    const auto features = distance_features(cfg, ds);
    const auto [train, test] = split(cfg, ds);
    write_split_summary(out, train, test);
    const LabelTree tree = build_let(train, features, let_options(cfg));
    const TreeClassifier classifier(train, features, tree, cfg.competition, cfg.let.zscore);
    const PredictiveMap map = predictive_map(test, classifier, join(features, "&"));
    out.write_json("tree.json", tree.to_json());
    out.write("pmap.csv", [&](std::ostream& o) { write_predictive_map_csv(o, map); });
    out.write_json("pmap.json", predictive_map_json(map));
    out.write_json("pie.json", pie_chart_json(map));
}

ChainResult compute_chain(const RunConfig& cfg, const LabeledDataset& train, const LabeledDataset& test) {
    if (cfg.chain.links.empty()) throw_config("config.chain: empty chain");
    ChainOptions opts;
    opts.let = let_options(cfg);
    opts.zscore = cfg.let.zscore;
    return chain_categories(test, train, cfg.chain, opts);
}

void write_chain(Outputs& out, const ChainResult& chain) {
    for (std::size_t d = 0; d < chain.tables.size(); ++d) {
        out.write("chain_depth" + std::to_string(d + 1) + ".csv",
                  [&](std::ostream& o) { write_category_table_csv(o, chain.tables[d]); });
    }
    for (std::size_t i = 0; i < chain.maps.size(); ++i) {
        out.write("pmap_link" + std::to_string(i + 1) + ".csv",
                  [&](std::ostream& o) { write_predictive_map_csv(o, chain.maps[i]); });
    }
    out.write_json("chain.json", chain_json(chain));
}

void run_chain(const RunConfig& cfg, Outputs& out) {
    const LabeledDataset ds = load_dataset(cfg);
    const auto [train, test] = split(cfg, ds);
    write_split_summary(out, train, test);
    write_chain(out, compute_chain(cfg, train, test));
}

void run_dissect(const RunConfig& cfg, Outputs& out) {
    const LabeledDataset ds = load_dataset(cfg);
    const auto [train, test] = split(cfg, ds);
    write_split_summary(out, train, test);
    const ChainResult chain = compute_chain(cfg, train, test);
    write_chain(out, chain);

    ExternalPredictions external;
    if (cfg.external_predictions) {
        std::ifstream in(*cfg.external_predictions);
        if (!in) throw_data("cannot open external predictions '" + cfg.external_predictions->string() + "'");
        external = read_external_predictions(in, ds.labels());
    } else {
        std::vector<std::string> features = cfg.knn_features;
        if (features.empty()) {
            for (const auto& link : cfg.chain.links) {
                for (const auto& f : link.set.features) {
                    if (std::find(features.begin(), features.end(), f) == features.end()) features.push_back(f);
                }
            }
        } else {
            require_features(ds, features, "config.dissect.knn_features");
        }
        external = knn_majority_predict(train, test, features, cfg.knn_k, cfg.let.zscore);
        out.write("external_predictions.csv",
                  [&](std::ostream& o) { write_external_predictions(o, external, ds.labels()); });
    }
    const DissectionReport report = dissect_external(external, chain);
    out.write("dissection.csv", [&](std::ostream& o) { write_dissection_csv(o, report); });
    out.write_json("dissection.json", dissection_json(report));
}

void run_rma(const RunConfig& cfg, Outputs& out) {
    const LabeledDataset ds = load_dataset(cfg);
    const RmaConfig& rc = cfg.rma;
    if (rc.responses.empty()) throw_config("config.rma.responses: at least one response is required");
    require_features(ds, rc.responses, "config.rma.responses");
    const auto [train, test] = split(cfg, ds);
    write_split_summary(out, train, test);

    ResponseSpec spec;
    spec.responses = rc.responses;
    for (const auto& f : ds.feature_names()) {
        if (std::find(rc.responses.begin(), rc.responses.end(), f) == rc.responses.end()) spec.covariates.push_back(f);
    }
    std::vector<std::string> candidates = rc.major_candidates;
    if (candidates.empty()) {
        for (const auto& f : spec.covariates) {
            if (ds.table().column(f).kind != FeatureKind::categorical) candidates.push_back(f);
        }
    } else {
        require_features(ds, candidates, "config.rma.major_candidates");
    }
    std::vector<std::string> binned = rc.responses;
    binned.insert(binned.end(), candidates.begin(), candidates.end());
    const BinningSet score_bins = build_binnings(train.table(), binned, cfg.bins, cfg.default_bins);

    std::vector<MajorFeatureScore> scores;
    for (const auto& c : candidates) scores.push_back(score_major_candidate(train.table(), spec, c, score_bins, rc.tau));
    out.write("major_scores.csv", [&](std::ostream& o) { write_major_scores_csv(o, scores); });
    json strips = json::object();
    for (const auto& s : scores) {
        json rows = json::array();
        for (const auto& st : s.strips) {
            rows.push_back({{"bin", st.bin}, {"count", st.count}, {"mean", st.response_mean}, {"sd", st.response_sd}});
        }
        strips[s.feature] = rows;
    }
    out.write_json("major_strips.json", strips);

    std::vector<std::string> majors = rc.majors;
    if (majors.empty()) {
        std::vector<const MajorFeatureScore*> chosen;
        for (const auto& s : scores) {
            if (s.major) chosen.push_back(&s);
        }
        std::stable_sort(chosen.begin(), chosen.end(),
                         [](const MajorFeatureScore* a, const MajorFeatureScore* b) { return a->score > b->score; });
        for (const auto* s : chosen) majors.push_back(s->feature);
        if (majors.empty()) throw_computation("rma: no candidate reaches the major threshold " + csv::format_double(rc.tau));
    } else {
        require_features(ds, majors, "config.rma.majors");
    }

    std::map<std::string, std::size_t> major_bins;
    for (const auto& m : majors) major_bins[m] = cfg.bins.count(m) ? cfg.bins.at(m) : rc.bins;
    BinningSet lattice_bins;
    for (const auto& m : majors) {
        lattice_bins[m] = build_histogram(train.table().column(m).values, major_bins[m], m);
    }
    const LocalityLattice lattice = build_locality_lattice(train.table(), spec, majors, lattice_bins);
    out.write_json("lattice.json", lattice_json(lattice));

    const LocalityLattice coarse =
        build_locality_lattice(train.table(), spec, majors, coarse_binnings(train.table(), majors, rc.coarse_bins));
    out.write_json("lattice_coarse.json", lattice_json(coarse));
    std::vector<std::string> minors;
    if (!rc.minor_candidates.empty()) {
        require_features(ds, rc.minor_candidates, "config.rma.minor_candidates", true);
        const BinningSet minor_bins = build_binnings(train.table(), rc.minor_candidates, cfg.bins, cfg.default_bins);
        const MinorFeatureReport minor =
            minor_feature_entropy(coarse, train.table(), rc.minor_candidates, minor_bins, rc.minor_threshold);
        out.write("minor_entropy.csv", [&](std::ostream& o) { write_minor_entropy_csv(o, minor); });
        if (!rc.minors) {
            for (const auto& s : minor.summary) {
                if (s.minor) minors.push_back(s.feature);
            }
        }
    }
    if (rc.minors) {
        require_features(ds, *rc.minors, "config.rma.minors", true);
        minors = *rc.minors;
    }
    out.write("manifold.dat",
              [&](std::ostream& o) { write_manifold_plot_data(o, train.table(), coarse, ds.label_column()); });

    const BinningSet minor_bins = build_binnings(train.table(), minors, cfg.bins, cfg.default_bins);
    const RmaModel model(train.table(), lattice, minors, minor_bins, rc.k_star);
    std::vector<std::string> needed = majors;
    needed.insert(needed.end(), rc.responses.begin(), rc.responses.end());
    const DataTable scored = test.table().select_rows(test.table().complete_rows(needed));
    if (scored.n_rows() == 0) throw_data("rma: no complete test row");
    const std::vector<RmaPrediction> preds = model.predict_table(scored);

    const std::size_t m = rc.responses.size();
    Matrix predicted(preds.size(), m);
    Matrix truth(preds.size(), m);
    std::vector<std::size_t> patch_of;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            predicted(i, j) = preds[i].response[j];
            truth(i, j) = scored.column(rc.responses[j]).values[i];
        }
        patch_of.push_back(preds[i].cell);
    }
    out.write("rma_predictions.csv", [&](std::ostream& o) {
        std::vector<std::string> header{"row_id", "patch"};
        for (const auto& r : rc.responses) header.push_back("predicted_" + r);
        for (const auto& r : rc.responses) header.push_back("observed_" + r);
        for (const char* h : {"neighbors", "focal", "clamped", "underfilled", "spilled", "sieve_fallback"}) header.push_back(h);
        csv::write_row(o, header);
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const auto& p = preds[i];
            std::vector<std::string> row{std::to_string(scored.row_ids()[i]), lattice.cells[p.cell].name};
            for (std::size_t j = 0; j < m; ++j) row.push_back(csv::format_double(predicted(i, j)));
            for (std::size_t j = 0; j < m; ++j) row.push_back(csv::format_double(truth(i, j)));
            row.push_back(std::to_string(p.neighbors));
            row.push_back(std::to_string(p.focal));
            for (bool flag : {p.clamped, p.underfilled, p.spilled, p.sieve_fallback}) row.push_back(flag ? "1" : "0");
            csv::write_row(o, row);
        }
    });
    const ErrorReport errors = error_metrics(predicted, truth, patch_of, lattice, train.table());
    out.write("rma_errors.csv", [&](std::ostream& o) { write_error_report_csv(o, errors); });

    if (rc.ols) {
        require_features(ds, {rc.ols->response}, "config.rma.ols.response");
        require_features(ds, rc.ols->covariates, "config.rma.ols.covariates");
        const auto fits = ols_fit(ds, rc.ols->response, rc.ols->covariates, rc.ols->per_label);
        out.write("ols.csv", [&](std::ostream& o) { write_ols_table_csv(o, fits); });
    }
}

void run_synth(const RunConfig& cfg, Outputs& out) {
    if (!cfg.synth) throw_config("config.synth: required by this command");
    const std::uint64_t seed = derive_seed(cfg.seed, stage::synth);
    const LabeledDataset data = synth_generate(*cfg.synth, seed);
    out.write("data.csv", [&](std::ostream& o) { write_csv(o, data.table()); });
    out.write_json("ground_truth.json", synth_ground_truth(*cfg.synth, seed, data));
}

}  // namespace

std::vector<std::string> run(Command command, const RunConfig& cfg) {
    set_thread_count(cfg.threads);
    Outputs out(cfg.output_dir);
    std::vector<std::string> warnings;
    {
        WarningCapture capture;
        switch (command) {
            case Command::mce: run_mce(cfg, out); break;
            case Command::let: run_let(cfg, out); break;
            case Command::pmap: run_pmap(cfg, out); break;
            case Command::chain: run_chain(cfg, out); break;
            case Command::dissect: run_dissect(cfg, out); break;
            case Command::rma: run_rma(cfg, out); break;
            case Command::synth: run_synth(cfg, out); break;
        }
        warnings = capture.messages();
    }
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

    json manifest;
    manifest["command"] = to_string(command);
    manifest["version"] = CEDA_VERSION;
    manifest["seed"] = cfg.seed;
    manifest["stage_seeds"] = {{"synth", derive_seed(cfg.seed, stage::synth)},
                               {"split", derive_seed(cfg.seed, stage::split)},
                               {"let", derive_seed(cfg.seed, stage::let)}};
    manifest["config_hash"] = fnv1a_hex(cfg.raw.dump());
    manifest["config"] = cfg.raw;
    if (cfg.dataset) {
        std::ifstream in(cfg.dataset->path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        manifest["dataset"] = {{"path", cfg.dataset->path.string()}, {"fnv1a", fnv1a_hex(buf.str())}};
    }
    manifest["artifacts"] = out.entries();
    manifest["warnings"] = warnings;
    manifest["timestamp"] = utc_timestamp();
    std::vector<std::string> names = out.names();
    out.write_json("manifest.json", manifest);
    names.push_back("manifest.json");
    return names;
}

}  // namespace ceda::cli
