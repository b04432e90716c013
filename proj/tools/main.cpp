#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ceda/error.hpp"
#include "pipeline.hpp"

namespace {

const char* kCommands = "mce | let | pmap | chain | dissect | rma | synth";

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Categorical exploratory data analysis toolkit"};
    app.set_version_flag("--version", CEDA_VERSION);

    std::string command;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<unsigned> threads;
    std::string data_path;
    std::string features;
    std::vector<std::string> overrides;

    app.add_option("command", command, kCommands)->required()->check(
        CLI::IsMember({"mce", "let", "pmap", "chain", "dissect", "rma", "synth"}));
    app.add_option("--config,-c", config_path, "JSON configuration file");
    app.add_option("--seed", seed, "Global seed (overrides config.seed)");
    app.add_option("--out,-o", out_dir, "Output directory (overrides config.output_dir)");
    app.add_option("--threads", threads, "Worker cap; results do not depend on it");
    app.add_option("--data", data_path, "Dataset CSV (overrides config.dataset.path)");
    app.add_option("--features", features, "Comma-separated features (overrides config.features)");
    app.add_option("--set", overrides, "Override a config field, e.g. --set competition.k_star=10");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        nlohmann::json j = nlohmann::json::object();
        std::filesystem::path base;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) ceda::throw_config("cannot open config file '" + config_path + "'");
            try {
                j = nlohmann::json::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                ceda::throw_config("config file '" + config_path + "': " + e.what());
            }
            base = std::filesystem::path(config_path).parent_path();
        }
        if (seed) j["seed"] = *seed;
        if (threads) j["threads"] = *threads;
        // command-line paths are relative to the working directory
        if (!out_dir.empty()) j["output_dir"] = std::filesystem::absolute(out_dir).string();
        if (!data_path.empty()) j["dataset"]["path"] = std::filesystem::absolute(data_path).string();
        if (!features.empty()) {
            nlohmann::json list = nlohmann::json::array();
            std::size_t start = 0;
            while (start <= features.size()) {
                const auto comma = features.find(',', start);
                list.push_back(features.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            j["features"] = list;
        }
        for (const auto& o : overrides) ceda::cli::apply_override(j, o);

        const ceda::cli::RunConfig cfg = ceda::cli::parse_config(j, base);
        const auto artifacts = ceda::cli::run(ceda::cli::parse_command(command), cfg);
        std::cout << "wrote " << artifacts.size() << " file(s) to " << cfg.output_dir.string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ceda::cli::exit_code(e);
    }
}
