#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/chain.hpp"
#include "ceda/dataset.hpp"
#include "ceda/hclust.hpp"
#include "ceda/let.hpp"
#include "ceda/pmap.hpp"
#include "ceda/synth.hpp"

namespace ceda::cli {

enum class Command { mce, let, pmap, chain, dissect, rma, synth };

Command parse_command(std::string_view text);
std::string_view to_string(Command command);

/// Every stage draws its randomness from derive_seed(seed, stage).
namespace stage {
inline constexpr std::uint64_t synth = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t let = 3;
}  // namespace stage

struct DatasetConfig {
    std::filesystem::path path;
    std::string label_column = "label";
    std::map<std::string, FeatureKind> kinds;
    std::size_t discrete_max_distinct = 12;
};

struct OlsConfig {
    std::string response;
    std::vector<std::string> covariates;
    bool per_label = true;
};

struct RmaConfig {
    std::vector<std::string> responses;
    /// Empty means every numeric non-response feature.
    std::vector<std::string> major_candidates;
    /// Empty means the candidates that score as major.
    std::vector<std::string> majors;
    std::vector<std::string> minor_candidates;
    /// Empty means the candidates the entropy report marks as minor.
    std::optional<std::vector<std::string>> minors;
    std::size_t k_star = 20;
    double tau = 0.35;
    double minor_threshold = 0.5;
    std::size_t bins = 8;
    std::size_t coarse_bins = 3;
    std::optional<OlsConfig> ols;
};

struct RunConfig {
    /// Effective configuration after command-line overrides; hashed into the
    /// manifest.
    nlohmann::json raw;
    std::optional<DatasetConfig> dataset;
    SplitSpec split;
    std::map<std::string, std::size_t> bins;
    std::optional<std::size_t> default_bins;
    std::vector<std::string> features;
    CompetitionConfig competition;
    LetOptions let;
    FeatureChain chain;
    std::optional<std::filesystem::path> external_predictions;
    std::size_t knn_k = 20;
    std::vector<std::string> knn_features;
    std::size_t mce_groups = 3;
    Linkage linkage = Linkage::average;
    RmaConfig rma;
    std::optional<SynthParams> synth;
    std::filesystem::path output_dir = "ceda-out";
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

/// Parses and validates the JSON configuration. Relative paths resolve
/// against `base_dir`. Errors are config errors naming the field path, e.g.
/// "config.competition.k_star: expected a non-negative integer".
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Applies "a.b.c=value" to the JSON tree; value is parsed as JSON when it
/// parses, otherwise taken as a string.
void apply_override(nlohmann::json& j, std::string_view assignment);

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Runs one command, writing its reports and manifest.json into the output
/// directory. Returns the artifact file names in write order.
std::vector<std::string> run(Command command, const RunConfig& config);

/// 0 success, 1 config error, 2 data error, 3 computation error.
int exit_code(const std::exception& e);

}  // namespace ceda::cli
