#ifndef FLATREG_CONFIG_HPP
#define FLATREG_CONFIG_HPP

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "flatreg/dynamics.hpp"

namespace flatreg {

// Full run configuration. Parsed from flat key=value text with [section]
// headers; unknown sections or keys are rejected so a config always means
// what it says.
struct ExperimentConfig {
    // [experiment]
    std::string kind = "verify";
    int replicas = 20;
    long record_stride = 1;
    std::string out = "runs/latest";

    // [model]
    std::string model_family = "quad_param";
    int model_dim = 4;          // quadratic dimension
    std::uint64_t model_seed = 7;
    int base_features = 4;      // quad_param: independent features
    int samples = 6;            // quad_param / mlp sample count
    double redundancy = 4.0;    // quad_param: scale of the duplicated block
    std::string anchor = "w_star";  // quad_param targets: w_star | sharp
    std::vector<int> widths = {3, 4, 1};

    // [hp]
    HyperParams hp;

    // [verify]
    std::vector<std::string> suites = {"spectral", "objective", "regularizer"};
    int fuzz = 25;

    // [couple]
    std::vector<double> lambda_grid = {1e-4, 2e-4, 4e-4};
    long couple_horizon = 2000;

    // [escape]
    std::vector<double> escape_eta_grid = {0.005, 0.01, 0.02};
    long escape_grid_steps = 10000;

    // [limits]
    std::vector<double> limits_eta_grid = {1e-3, 1e-2, 1e-1, 0.5, 1.0};
    double eig_max = 1.0;
    int eig_points = 101;
    std::vector<double> nu_grid = {1e-1, 1e-2, 1e-3, 1e-4};

    // [constants]
    std::vector<double> p_grid = {0.1, 0.2, 0.3, 0.5};

    bool operator==(const ExperimentConfig& other) const;
};

std::string noise_kind_name(NoiseKind kind);
NoiseKind noise_kind_from_name(const std::string& name);

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);

}  // namespace flatreg

#endif
