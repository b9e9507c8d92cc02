#include "flatreg/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flatreg/errors.hpp"

namespace flatreg {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double x = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value for '" + key + "': " + value);
    }
}

long parse_long(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long x = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value for '" + key + "': " + value);
    }
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const std::string& item : split_list(value)) out.push_back(parse_double(key, item));
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    for (const std::string& item : split_list(value)) {
        out.push_back(static_cast<int>(parse_long(key, item)));
    }
    return out;
}

// One setter per accepted key; lookup doubles as the unknown-key check.
using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& schema() {
    static const std::map<std::string, Setter> table = {
        {"experiment.kind", [](ExperimentConfig& c, const std::string& v) { c.kind = v; }},
        {"experiment.replicas",
         [](ExperimentConfig& c, const std::string& v) { c.replicas = static_cast<int>(parse_long("replicas", v)); }},
        {"experiment.record_stride",
         [](ExperimentConfig& c, const std::string& v) { c.record_stride = parse_long("record_stride", v); }},
        {"experiment.out", [](ExperimentConfig& c, const std::string& v) { c.out = v; }},

        {"model.family", [](ExperimentConfig& c, const std::string& v) { c.model_family = v; }},
        {"model.dim",
         [](ExperimentConfig& c, const std::string& v) { c.model_dim = static_cast<int>(parse_long("dim", v)); }},
        {"model.seed",
         [](ExperimentConfig& c, const std::string& v) { c.model_seed = static_cast<std::uint64_t>(parse_long("model.seed", v)); }},
        {"model.base_features",
         [](ExperimentConfig& c, const std::string& v) { c.base_features = static_cast<int>(parse_long("base_features", v)); }},
        {"model.samples",
         [](ExperimentConfig& c, const std::string& v) { c.samples = static_cast<int>(parse_long("samples", v)); }},
        {"model.redundancy",
         [](ExperimentConfig& c, const std::string& v) { c.redundancy = parse_double("redundancy", v); }},
        {"model.anchor", [](ExperimentConfig& c, const std::string& v) { c.anchor = v; }},
        {"model.widths",
         [](ExperimentConfig& c, const std::string& v) { c.widths = parse_int_list("widths", v); }},

        {"hp.eta", [](ExperimentConfig& c, const std::string& v) { c.hp.eta = parse_double("eta", v); }},
        {"hp.sigma", [](ExperimentConfig& c, const std::string& v) { c.hp.sigma = parse_double("sigma", v); }},
        {"hp.batch",
         [](ExperimentConfig& c, const std::string& v) { c.hp.batch = static_cast<int>(parse_long("batch", v)); }},
        {"hp.beta", [](ExperimentConfig& c, const std::string& v) { c.hp.beta = parse_double("beta", v); }},
        {"hp.p", [](ExperimentConfig& c, const std::string& v) { c.hp.p = parse_double("p", v); }},
        {"hp.steps", [](ExperimentConfig& c, const std::string& v) { c.hp.steps = parse_long("steps", v); }},
        {"hp.nu", [](ExperimentConfig& c, const std::string& v) { c.hp.nu = parse_double("nu", v); }},
        {"hp.rank_tol",
         [](ExperimentConfig& c, const std::string& v) { c.hp.rank_tol = parse_double("rank_tol", v); }},
        {"hp.seed",
         [](ExperimentConfig& c, const std::string& v) { c.hp.seed = static_cast<std::uint64_t>(parse_long("seed", v)); }},
        {"hp.noise",
         [](ExperimentConfig& c, const std::string& v) { c.hp.noise = noise_kind_from_name(v); }},

        {"verify.suites",
         [](ExperimentConfig& c, const std::string& v) { c.suites = split_list(v); }},
        {"verify.fuzz",
         [](ExperimentConfig& c, const std::string& v) { c.fuzz = static_cast<int>(parse_long("fuzz", v)); }},

        {"couple.lambda_grid",
         [](ExperimentConfig& c, const std::string& v) { c.lambda_grid = parse_double_list("lambda_grid", v); }},
        {"couple.horizon",
         [](ExperimentConfig& c, const std::string& v) { c.couple_horizon = parse_long("horizon", v); }},

        {"escape.eta_grid",
         [](ExperimentConfig& c, const std::string& v) { c.escape_eta_grid = parse_double_list("eta_grid", v); }},
        {"escape.grid_steps",
         [](ExperimentConfig& c, const std::string& v) { c.escape_grid_steps = parse_long("grid_steps", v); }},

        {"limits.eta_grid",
         [](ExperimentConfig& c, const std::string& v) { c.limits_eta_grid = parse_double_list("eta_grid", v); }},
        {"limits.eig_max",
         [](ExperimentConfig& c, const std::string& v) { c.eig_max = parse_double("eig_max", v); }},
        {"limits.eig_points",
         [](ExperimentConfig& c, const std::string& v) { c.eig_points = static_cast<int>(parse_long("eig_points", v)); }},
        {"limits.nu_grid",
         [](ExperimentConfig& c, const std::string& v) { c.nu_grid = parse_double_list("nu_grid", v); }},

        {"constants.p_grid",
         [](ExperimentConfig& c, const std::string& v) { c.p_grid = parse_double_list("p_grid", v); }},
    };
    return table;
}

void validate(const ExperimentConfig& c) {
    static const std::vector<std::string> kinds = {"verify", "escape",    "cycle",
                                                   "couple", "limits", "constants"};
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) {
        throw ConfigError("config: unknown experiment kind '" + c.kind + "'");
    }
    static const std::vector<std::string> families = {"quadratic", "quad_param", "mlp", "cycling"};
    if (std::find(families.begin(), families.end(), c.model_family) == families.end()) {
        throw ConfigError("config: unknown model family '" + c.model_family + "'");
    }
    if (c.anchor != "w_star" && c.anchor != "sharp") {
        throw ConfigError("config: model.anchor must be w_star or sharp");
    }
    if (c.hp.batch < 1) throw ConfigError("config: hp.batch must be >= 1");
    if (c.hp.steps < 0) throw ConfigError("config: hp.steps must be >= 0");
    if (!(c.hp.beta >= 0.0 && c.hp.beta < 1.0)) throw ConfigError("config: hp.beta must be in [0,1)");
    if (c.hp.noise == NoiseKind::LabelFlip && !(c.hp.p > 0.0 && c.hp.p < 1.0)) {
        throw ConfigError("config: hp.p must be in (0,1) for label-flip noise");
    }
    if (c.replicas < 1) throw ConfigError("config: experiment.replicas must be >= 1");
    if (c.record_stride < 1) throw ConfigError("config: experiment.record_stride must be >= 1");
}

}  // namespace

std::string noise_kind_name(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::RademacherLabel: return "rademacher-label";
        case NoiseKind::GaussianLabel: return "gaussian-label";
        case NoiseKind::LabelFlip: return "label-flip";
        case NoiseKind::GaussianCov: return "gaussian-cov";
        case NoiseKind::None: return "none";
    }
    return "rademacher-label";
}

NoiseKind noise_kind_from_name(const std::string& name) {
    if (name == "rademacher-label") return NoiseKind::RademacherLabel;
    if (name == "gaussian-label") return NoiseKind::GaussianLabel;
    if (name == "label-flip") return NoiseKind::LabelFlip;
    if (name == "gaussian-cov") return NoiseKind::GaussianCov;
    if (name == "none") return NoiseKind::None;
    throw ConfigError("config: unknown noise kind '" + name + "'");
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig config;
    std::stringstream ss(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config: malformed section header at line " + std::to_string(line_no));
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            throw ConfigError("config: key '" + key + "' appears before any [section]");
        }
        const std::string full = section + "." + key;
        const auto it = schema().find(full);
        if (it == schema().end()) {
            throw ConfigError("config: unknown key '" + full + "'");
        }
        it->second(config, value);
    }
    validate(config);
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"]["kind"] = c.kind;
    j["experiment"]["replicas"] = c.replicas;
    j["experiment"]["record_stride"] = c.record_stride;
    j["experiment"]["out"] = c.out;
    j["model"]["family"] = c.model_family;
    j["model"]["dim"] = c.model_dim;
    j["model"]["seed"] = c.model_seed;
    j["model"]["base_features"] = c.base_features;
    j["model"]["samples"] = c.samples;
    j["model"]["redundancy"] = c.redundancy;
    j["model"]["anchor"] = c.anchor;
    j["model"]["widths"] = c.widths;
    j["hp"]["eta"] = c.hp.eta;
    j["hp"]["sigma"] = c.hp.sigma;
    j["hp"]["batch"] = c.hp.batch;
    j["hp"]["beta"] = c.hp.beta;
    j["hp"]["p"] = c.hp.p;
    j["hp"]["steps"] = c.hp.steps;
    j["hp"]["nu"] = c.hp.nu;
    j["hp"]["rank_tol"] = c.hp.rank_tol;
    j["hp"]["seed"] = c.hp.seed;
    j["hp"]["noise"] = noise_kind_name(c.hp.noise);
    j["verify"]["suites"] = c.suites;
    j["verify"]["fuzz"] = c.fuzz;
    j["couple"]["lambda_grid"] = c.lambda_grid;
    j["couple"]["horizon"] = c.couple_horizon;
    j["escape"]["eta_grid"] = c.escape_eta_grid;
    j["escape"]["grid_steps"] = c.escape_grid_steps;
    j["limits"]["eta_grid"] = c.limits_eta_grid;
    j["limits"]["eig_max"] = c.eig_max;
    j["limits"]["eig_points"] = c.eig_points;
    j["limits"]["nu_grid"] = c.nu_grid;
    j["constants"]["p_grid"] = c.p_grid;
    return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.kind = j.at("experiment").at("kind").get<std::string>();
    c.replicas = j.at("experiment").at("replicas").get<int>();
    c.record_stride = j.at("experiment").at("record_stride").get<long>();
    c.out = j.at("experiment").at("out").get<std::string>();
    c.model_family = j.at("model").at("family").get<std::string>();
    c.model_dim = j.at("model").at("dim").get<int>();
    c.model_seed = j.at("model").at("seed").get<std::uint64_t>();
    c.base_features = j.at("model").at("base_features").get<int>();
    c.samples = j.at("model").at("samples").get<int>();
    c.redundancy = j.at("model").at("redundancy").get<double>();
    c.anchor = j.at("model").at("anchor").get<std::string>();
    c.widths = j.at("model").at("widths").get<std::vector<int>>();
    c.hp.eta = j.at("hp").at("eta").get<double>();
    c.hp.sigma = j.at("hp").at("sigma").get<double>();
    c.hp.batch = j.at("hp").at("batch").get<int>();
    c.hp.beta = j.at("hp").at("beta").get<double>();
    c.hp.p = j.at("hp").at("p").get<double>();
    c.hp.steps = j.at("hp").at("steps").get<long>();
    c.hp.nu = j.at("hp").at("nu").get<double>();
    c.hp.rank_tol = j.at("hp").at("rank_tol").get<double>();
    c.hp.seed = j.at("hp").at("seed").get<std::uint64_t>();
    c.hp.noise = noise_kind_from_name(j.at("hp").at("noise").get<std::string>());
    c.suites = j.at("verify").at("suites").get<std::vector<std::string>>();
    c.fuzz = j.at("verify").at("fuzz").get<int>();
    c.lambda_grid = j.at("couple").at("lambda_grid").get<std::vector<double>>();
    c.couple_horizon = j.at("couple").at("horizon").get<long>();
    c.escape_eta_grid = j.at("escape").at("eta_grid").get<std::vector<double>>();
    c.escape_grid_steps = j.at("escape").at("grid_steps").get<long>();
    c.limits_eta_grid = j.at("limits").at("eta_grid").get<std::vector<double>>();
    c.eig_max = j.at("limits").at("eig_max").get<double>();
    c.eig_points = j.at("limits").at("eig_points").get<int>();
    c.nu_grid = j.at("limits").at("nu_grid").get<std::vector<double>>();
    c.p_grid = j.at("constants").at("p_grid").get<std::vector<double>>();
    validate(c);
    return c;
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
    return config_to_json(*this) == config_to_json(other);
}

}  // namespace flatreg
