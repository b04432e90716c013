#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceda/dataset.hpp"

namespace ceda {

/// Labeled Gaussian point clouds. Label i is centered at centers[i]; its
/// covariance is covariances[i] when given, otherwise diag(sd_i^2) with sd_i
/// taken from `sd` (one value, or one per label). Features are f1..fD, plus
/// `noise_dims` extra N(0, 1) columns noise1..noiseM.
struct GaussCloudsParams {
    std::vector<std::vector<double>> centers;
    std::vector<double> sd{0.1};
    std::vector<std::vector<std::vector<double>>> covariances;
    std::size_t n_per_label = 200;
    std::size_t noise_dims = 0;
};

/// Spin-driven movement manifold. Per row:
///   spin_dir  s ~ U(window of the row's label) in degrees
///   spin_rate r ~ U(spin_rate_min, spin_rate_max)
///   pfx_x = a r sin(s) + offset_l + e,  pfx_z = a r cos(s) + offset_l + e
///   noise ~ U(0, 1), start_speed ~ U(85, 95), both independent of the rest.
/// Each label's spin window has width label_spread * (max - min) and the
/// windows are spaced evenly across [spin_dir_min, spin_dir_max];
/// offset_l = label_offset * l for label index l.
struct MagnusParams {
    std::size_t labels = 3;
    std::size_t n_per_label = 300;
    double a = 1.0;
    double noise_sd = 0.0;
    double spin_dir_min = 0.0;
    double spin_dir_max = 360.0;
    double spin_rate_min = 0.5;
    double spin_rate_max = 1.5;
    double label_spread = 1.0;
    double label_offset = 0.0;
};

/// end_speed = alpha_l + beta1_l * x0 + beta2_l * start_speed + e, with
/// x0 ~ N(-x0_spread/2 + x0_spread * l / (L - 1), x0_sd) and
/// start_speed ~ U(start_speed_min, start_speed_max). Coefficient vectors hold
/// one value (shared) or one per label.
struct LinearSpeedParams {
    std::size_t labels = 3;
    std::size_t n_per_label = 300;
    std::vector<double> alpha{0.04};
    std::vector<double> beta1{-0.05};
    std::vector<double> beta2{0.92};
    double noise_sd = 0.03;
    double x0_spread = 2.0;
    double x0_sd = 0.2;
    double start_speed_min = 85.0;
    double start_speed_max = 95.0;
};

using SynthParams = std::variant<GaussCloudsParams, MagnusParams, LinearSpeedParams>;

std::string synth_kind_name(const SynthParams& params);

/// Parses {"kind": "gauss-clouds" | "magnus-manifold" | "linear-speed", ...}
/// with the field names of the structs above.
SynthParams synth_params_from_json(const nlohmann::json& j);
nlohmann::json synth_params_to_json(const SynthParams& params);

/// Label names for L generated labels: L1..LL, zero padded when L >= 10 so
/// lexical order equals generation order.
std::vector<std::string> synth_label_names(std::size_t count);

/// Deterministic for a fixed seed. The label column is named "label".
LabeledDataset synth_generate(const SynthParams& params, std::uint64_t seed);

/// Ground-truth description written next to generated data.
nlohmann::json synth_ground_truth(const SynthParams& params, std::uint64_t seed, const LabeledDataset& data);

}  // namespace ceda
