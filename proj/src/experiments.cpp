#include "flatreg/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>

#include "flatreg/artifacts.hpp"
#include "flatreg/errors.hpp"

namespace flatreg {

namespace {

using nlohmann::json;

constexpr const char* kLibraryVersion = "flatreg 0.1.0";

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

BuiltModel build_model(const ExperimentConfig& config) {
    BuiltModel built;
    if (config.model_family == "quadratic") {
        // Geometric spectrum eig_max * 2^-i in a seeded random basis; the
        // 2:1 top-eigenvalue gap is what the sharpness limit wants.
        const int d = config.model_dim;
        Rng rng(config.model_seed, 11);
        Matrix a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
        const Eigen::HouseholderQR<Matrix> qr(a);
        const Matrix q = qr.householderQ();
        Vector eigs(d);
        for (int i = 0; i < d; ++i) eigs[i] = config.eig_max * std::pow(2.0, -i);
        Matrix h = q * eigs.asDiagonal() * q.transpose();
        h = 0.5 * (h + h.transpose());
        auto [model, data] = make_quadratic(h, Vector::Zero(d));
        built.bundle = LossBundle::regression(model, data);
        built.init = Vector::Zero(d);
    } else if (config.model_family == "quad_param") {
        // Redundant design: each base feature z_j reappears scaled by
        // `redundancy`, so interpolating with weight on the scaled block is
        // roughly `redundancy` times sharper in tr hess L than the plain
        // block. Targets are evaluated at the sharp point bitwise, which
        // makes it an exact interpolating minimizer (residuals are 0.0 in
        // floating point) while keeping every coordinate away from zero --
        // a coordinate at exactly zero can never move under the quadratic
        // parametrization.
        const int m = config.base_features;
        const int n = config.samples;
        if (m < 2) throw ConfigError("quad_param model needs base_features >= 2");
        Rng rng(config.model_seed, 12);
        std::vector<Vector> design;
        design.reserve(n);
        for (int i = 0; i < n; ++i) {
            Vector x(2 * m);
            for (int j = 0; j < m; ++j) {
                const double z = rng.rademacher();
                x[j] = z;
                x[j + m] = config.redundancy * z;
            }
            design.push_back(std::move(x));
        }
        built.sharp_init = Vector::Zero(2 * m);
        for (int j = 0; j < m; ++j) {
            built.sharp_init[j] = 0.125;
            built.sharp_init[j + m] = 0.5;
        }
        built.flat_init = Vector::Zero(2 * m);
        built.flat_init[0] = 1.0;
        built.flat_init[1] = 1.0;

        if (config.anchor == "sharp") {
            auto [model, blank] = make_quad_param_regression(design, Vector::Zero(2 * m));
            (void)blank;
            Dataset data;
            data.targets.reserve(n);
            for (int i = 0; i < n; ++i) data.targets.push_back(model->eval(i, built.sharp_init));
            built.bundle = LossBundle::regression(model, data);
            built.init = built.sharp_init;
        } else {
            // Plain-block anchor: integer targets sum(w* z), exactly
            // interpolated by the flat point.
            Vector w_star = Vector::Zero(2 * m);
            w_star[0] = 1.0;
            w_star[1] = 1.0;
            auto [model, data] = make_quad_param_regression(design, w_star);
            built.bundle = LossBundle::regression(model, data);
            built.init = built.flat_init;
        }
        return built;
    } else if (config.model_family == "mlp") {
        auto [model, data] = make_mlp(config.widths, config.samples, config.model_seed);
        built.bundle = LossBundle::regression(model, data);
        Rng rng(config.model_seed, 13);
        Vector theta(model->param_dim());
        for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = 0.5 * rng.normal();
        built.init = theta;
    } else if (config.model_family == "cycling") {
        auto [model, data] = make_cycling_model();
        built.bundle = LossBundle::regression(model, data);
        Vector theta = Vector::Zero(6);
        theta[0] = 1.0;
        built.init = theta;
    } else {
        throw ConfigError("unknown model family '" + config.model_family + "'");
    }
    built.sharp_init = built.init;
    built.flat_init = built.init;
    return built;
}

EscapeResult run_escape(const ExperimentConfig& config) {
    if (config.model_family != "quad_param") {
        throw ConfigError("escape experiment requires the quad_param model");
    }
    if (config.anchor != "sharp") {
        throw ConfigError("escape experiment requires model.anchor = sharp");
    }
    const BuiltModel built = build_model(config);
    EscapeResult result;
    result.lambda = run_lambda(built.bundle, config.hp);

    auto make_arm = [&](const std::string& name, const HyperParams& hp, long stride) {
        EscapeArm arm;
        arm.name = name;
        arm.traj = run(built.bundle, built.sharp_init, hp, stride);
        arm.trh_initial = arm.traj.diagnostics.front().tr_hess;
        arm.trh_final = arm.traj.diagnostics.back().tr_hess;
        arm.reduction = arm.trh_final / arm.trh_initial;
        for (std::size_t k = 0; k < arm.traj.iterates.size(); ++k) {
            arm.max_displacement =
                std::max(arm.max_displacement, (arm.traj.iterates[k] - built.sharp_init).norm());
            arm.max_loss = std::max(arm.max_loss, arm.traj.diagnostics[k].loss);
        }
        return arm;
    };

    result.arms.push_back(make_arm("label_noise", config.hp, config.record_stride));

    HyperParams quiet = config.hp;
    quiet.sigma = 0.0;
    quiet.noise = NoiseKind::None;
    result.arms.push_back(make_arm("noiseless", quiet, /*stride=*/1));

    for (const double eta : config.escape_eta_grid) {
        HyperParams hp = config.hp;
        hp.eta = eta;
        hp.steps = config.escape_grid_steps;
        const EscapeArm arm = make_arm("grid", hp, std::max<long>(config.escape_grid_steps, 1));
        result.eta_grid_reduction.emplace_back(eta, arm.reduction);
    }
    return result;
}

CycleResult run_cycle(const ExperimentConfig& config) {
    if (config.model_family != "cycling") {
        throw ConfigError("cycle experiment requires the cycling model");
    }
    const BuiltModel built = build_model(config);
    const HyperParams& hp = config.hp;

    Rng rng(hp.seed, hp.stream);
    Vector theta = built.init;
    Vector theta_prev = theta;

    CycleResult result;
    double prev_angle = std::atan2(theta[1], theta[0]);
    double z_acc[4] = {0.0, 0.0, 0.0, 0.0};
    long window = 0;

    auto push_row = [&](long step) {
        CycleRow row;
        row.step = step;
        row.x = theta[0];
        row.y = theta[1];
        const double denom = window > 0 ? static_cast<double>(window) : 1.0;
        row.z1_sq = window > 0 ? z_acc[0] / denom : theta[2] * theta[2];
        row.z2_sq = window > 0 ? z_acc[1] / denom : theta[3] * theta[3];
        row.z3_sq = window > 0 ? z_acc[2] / denom : theta[4] * theta[4];
        row.z4_sq = window > 0 ? z_acc[3] / denom : theta[5] * theta[5];
        row.angle = result.total_angle;
        result.rows.push_back(row);
        for (double& z : z_acc) z = 0.0;
        window = 0;
    };
    push_row(0);
    result.max_circle_defect =
        std::abs(theta[0] * theta[0] + theta[1] * theta[1] - 1.0);

    for (long k = 0; k < hp.steps; ++k) {
        Vector stepped;
        switch (hp.noise) {
            case NoiseKind::None:
                stepped = step_minibatch(built.bundle, theta, hp, rng);
                break;
            case NoiseKind::RademacherLabel:
            case NoiseKind::GaussianLabel:
                stepped = step_label_noise(built.bundle, theta, hp, rng, nullptr, nullptr,
                                           hp.noise == NoiseKind::GaussianLabel);
                break;
            default:
                throw ConfigError("cycle experiment supports none or label noise");
        }
        Vector next = step_heavy_ball(stepped, theta, theta_prev, hp.beta);
        theta_prev = std::move(theta);
        theta = std::move(next);

        const double angle = std::atan2(theta[1], theta[0]);
        double delta = angle - prev_angle;
        if (delta > M_PI) delta -= 2.0 * M_PI;
        if (delta <= -M_PI) delta += 2.0 * M_PI;
        result.total_angle += delta;
        prev_angle = angle;
        result.max_circle_defect = std::max(
            result.max_circle_defect,
            std::abs(theta[0] * theta[0] + theta[1] * theta[1] - 1.0));

        z_acc[0] += theta[2] * theta[2];
        z_acc[1] += theta[3] * theta[3];
        z_acc[2] += theta[4] * theta[4];
        z_acc[3] += theta[5] * theta[5];
        ++window;
        if ((k + 1) % config.record_stride == 0 || k + 1 == hp.steps) push_row(k + 1);
    }
    return result;
}

int replica_threads() {
    if (const char* env = std::getenv("FLATREG_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

CoupleResult run_couple(const ExperimentConfig& config) {
    const BuiltModel built = build_model(config);
    const Vector theta_star = built.flat_init;
    const Vector delta0 = Vector::Zero(theta_star.size());

    CoupleResult result;
    result.grid.resize(config.lambda_grid.size());

    struct Job {
        std::size_t lambda_idx;
        int replica;
    };
    std::vector<Job> jobs;
    for (std::size_t li = 0; li < config.lambda_grid.size(); ++li) {
        result.grid[li].lambda = config.lambda_grid[li];
        result.grid[li].seeds.resize(config.replicas);
        for (int r = 0; r < config.replicas; ++r) jobs.push_back({li, r});
    }

    // Replicas share streams across lambda values, so the lambda comparison
    // is paired on identical draws.
    auto run_job = [&](const Job& job) {
        HyperParams hp = config.hp;
        const double lambda = config.lambda_grid[job.lambda_idx];
        hp.sigma = std::sqrt(lambda * hp.batch /hp.eta);
        hp.stream = static_cast<std::uint64_t>(job.replica) + 1;
        result.grid[job.lambda_idx].seeds[job.replica] =
            coupling_experiment(built.bundle, theta_star, delta0, hp, config.couple_horizon);
    };

    const int threads = std::min<int>(replica_threads(), static_cast<int>(jobs.size()));
    if (threads <= 1) {
        for (const Job& job : jobs) run_job(job);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> cursor{0};
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&]() {
                while (true) {
                    const std::size_t i = cursor.fetch_add(1);
                    if (i >= jobs.size()) return;
                    run_job(jobs[i]);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }

    std::vector<double> log_lambda, log_residual;
    result.min_improvement = std::numeric_limits<double>::infinity();
    for (CoupleLambda& cell : result.grid) {
        std::vector<double> res, phi;
        for (const CouplingReport& report : cell.seeds) {
            res.push_back(report.max_residual);
            phi.push_back(report.max_phi_dist);
        }
        cell.median_max_residual = median(res);
        cell.median_max_phi_dist = median(phi);
        cell.improvement = cell.median_max_phi_dist / cell.median_max_residual;
        result.min_improvement = std::min(result.min_improvement, cell.improvement);
        log_lambda.push_back(std::log(cell.lambda));
        log_residual.push_back(std::log(cell.median_max_residual));
    }
    result.slope = fit_slope(log_lambda, log_residual);
    return result;
}

LimitsResult run_limits(const ExperimentConfig& config) {
    LimitsResult result;
    for (const double eta : config.limits_eta_grid) {
        if (eta * config.eig_max >= 2.0) {
            throw ConfigError("limits: eta * eig_max must stay below 2");
        }
        for (int i = 0; i < config.eig_points; ++i) {
            const double lam = config.eig_max * i / (config.eig_points - 1);
            const double reg = -1.0 / (2.0 * eta) * std::log(1.0 - eta * lam / 2.0);
            result.reg_curve.push_back({eta, lam, reg, lam / 4.0});
        }
    }

    const BuiltModel built = build_model(config);
    for (const double nu : config.nu_grid) {
        const SharpnessResult sharp = normalized_sharpness(built.bundle, built.init, nu);
        result.sharpness.push_back({nu, sharp.value, sharp.top_eigenvalue, sharp.degenerate_top});
    }
    return result;
}

ConstantsResult run_constants(const ExperimentConfig& config) {
    ConstantsResult result;
    const std::vector<std::pair<std::string, ClsLoss>> losses = {
        {"logistic", ClsLoss::Logistic},
        {"exponential", ClsLoss::Exponential},
        {"square", ClsLoss::Square},
    };
    for (const auto& [name, kind] : losses) {
        for (const double p : config.p_grid) {
            const LossConstants closed = loss_constants(kind, p);
            const LossConstants numeric = loss_constants_numeric(kind, p);
            const QuadApproxReport quad = verify_quadratic_approx(kind, p);
            result.rows.push_back({name, p, closed.c, numeric.c, closed.sigma_sq,
                                   numeric.sigma_sq, closed.alpha, numeric.alpha, quad.nu,
                                   quad.exists});
        }
    }
    return result;
}

namespace {

json manifest_for(const ExperimentConfig& config, double wall_time_s) {
    json m;
    m["command"] = config.kind;
    m["config"] = config_to_json(config);
    m["config_hash"] = content_hash(config_to_json(config).dump());
    m["seed"] = config.hp.seed;
    m["library_version"] = kLibraryVersion;
    m["wall_time_s"] = wall_time_s;
    return m;
}

int emit_verify(const ExperimentConfig& config, bool quiet) {
    const VerifyResult result = run_verify(config);
    CsvWriter csv({"suite", "check", "measured", "bound", "pass", "note"});
    for (const CheckRow& row : result.checks) {
        csv.add_row({row.suite, row.name, fmt17(row.measured), fmt17(row.bound),
                     row.pass ? "1" : "0", row.note});
        if (!quiet) {
            std::cout << (row.pass ? "[PASS] " : "[FAIL] ") << row.suite << "/" << row.name
                      << "  measured=" << fmt17(row.measured) << "  bound=" << fmt17(row.bound)
                      << (row.note.empty() ? "" : "  (" + row.note + ")") << "\n";
        }
    }
    if (!quiet && result.checks.empty()) std::cout << "0 checks selected\n";
    csv.write(config.out + "/verify_report.csv");
    if (!quiet) {
        std::cout << (result.pass ? "verify: all " : "verify: FAILURES among ")
                  << result.checks.size() << " checks\n";
    }
    return result.pass ? 0 : 1;
}

void emit_escape(const ExperimentConfig& config, bool quiet, json& summary) {
    const EscapeResult result = run_escape(config);
    CsvWriter csv({"arm", "step", "loss", "trH", "R", "gradnorm"});
    for (const EscapeArm& arm : result.arms) {
        for (const DiagRow& row : arm.traj.diagnostics) {
            csv.add_row({arm.name, std::to_string(row.step), fmt17(row.loss), fmt17(row.tr_hess),
                         fmt17(row.reg), fmt17(row.grad_norm)});
        }
    }
    csv.write(config.out + "/escape.csv");

    CsvWriter grid({"eta", "trh_ratio"});
    bool monotone = true;
    for (std::size_t i = 0; i < result.eta_grid_reduction.size(); ++i) {
        const auto& [eta, ratio] = result.eta_grid_reduction[i];
        grid.add_row({fmt17(eta), fmt17(ratio)});
        if (i > 0 && ratio > result.eta_grid_reduction[i - 1].second) monotone = false;
    }
    grid.write(config.out + "/escape_grid.csv");

    summary["lambda"] = result.lambda;
    for (const EscapeArm& arm : result.arms) {
        summary["arms"][arm.name] = {{"trh_initial", arm.trh_initial},
                                     {"trh_final", arm.trh_final},
                                     {"trh_ratio", arm.reduction},
                                     {"max_displacement", arm.max_displacement},
                                     {"max_loss", arm.max_loss}};
    }
    summary["eta_grid_monotone"] = monotone;
    if (!quiet) {
        std::cout << "escape: label-noise trH ratio "
                  << fmt17(result.arms[0].reduction) << ", noiseless displacement "
                  << fmt17(result.arms[1].max_displacement) << "\n";
    }
}

void emit_cycle(const ExperimentConfig& config, bool quiet, json& summary) {
    const CycleResult result = run_cycle(config);
    CsvWriter csv({"step", "x", "y", "z1_sq", "z2_sq", "z3_sq", "z4_sq", "angle"});
    for (const CycleRow& row : result.rows) {
        csv.add_row({std::to_string(row.step), fmt17(row.x), fmt17(row.y), fmt17(row.z1_sq),
                     fmt17(row.z2_sq), fmt17(row.z3_sq), fmt17(row.z4_sq), fmt17(row.angle)});
    }
    csv.write(config.out + "/cycle.csv");
    summary["total_angle"] = result.total_angle;
    summary["max_circle_defect"] = result.max_circle_defect;
    if (!quiet) {
        std::cout << "cycle: swept " << fmt17(result.total_angle) << " rad, max |x^2+y^2-1| = "
                  << fmt17(result.max_circle_defect) << "\n";
    }
}

void emit_couple(const ExperimentConfig& config, bool quiet, json& summary) {
    const CoupleResult result = run_couple(config);
    for (std::size_t li = 0; li < result.grid.size(); ++li) {
        const CoupleLambda& cell = result.grid[li];
        for (std::size_t r = 0; r < cell.seeds.size(); ++r) {
            CsvWriter csv({"step", "residual", "xi_norm", "phi_dist"});
            const CouplingReport& report = cell.seeds[r];
            for (std::size_t k = 0; k < report.residual.size(); ++k) {
                csv.add_row({std::to_string(k), fmt17(report.residual[k]),
                             fmt17(report.xi_norm[k]), fmt17(report.phi_dist[k])});
            }
            csv.write(config.out + "/couple_l" + std::to_string(li) + "_s" + std::to_string(r) +
                      ".csv");
        }
        summary["grid"].push_back({{"lambda", cell.lambda},
                                   {"median_max_residual", cell.median_max_residual},
                                   {"median_max_phi_dist", cell.median_max_phi_dist},
                                   {"improvement", cell.improvement}});
    }
    summary["slope"] = result.slope;
    summary["min_improvement"] = result.min_improvement;
    if (!quiet) {
        std::cout << "couple: fitted residual exponent " << fmt17(result.slope)
                  << ", xi-removal improvement >= " << fmt17(result.min_improvement) << "\n";
    }
}

void emit_limits(const ExperimentConfig& config, bool quiet, json& summary) {
    const LimitsResult result = run_limits(config);
    CsvWriter curve({"eta", "lam", "R", "quarter_lam"});
    std::map<double, double> max_gap;
    for (const auto& row : result.reg_curve) {
        curve.add_row({fmt17(row.eta), fmt17(row.lam), fmt17(row.reg), fmt17(row.quarter_lam)});
        max_gap[row.eta] = std::max(max_gap[row.eta], std::abs(row.reg - row.quarter_lam));
    }
    curve.write(config.out + "/limits_regcurve.csv");

    CsvWriter sharp({"nu", "normalized_sharpness", "top_eig", "degenerate"});
    for (const auto& row : result.sharpness) {
        sharp.add_row({fmt17(row.nu), fmt17(row.value), fmt17(row.top_eig),
                       row.degenerate ? "1" : "0"});
    }
    sharp.write(config.out + "/limits_sharpness.csv");

    for (const auto& [eta, gap] : max_gap) {
        summary["max_gap_to_quarter_trace"].push_back({{"eta", eta}, {"max_gap", gap}});
    }
    for (const auto& row : result.sharpness) {
        summary["sharpness"].push_back({{"nu", row.nu}, {"value", row.value}});
    }
    if (!quiet) std::cout << "limits: wrote " << result.reg_curve.size() << " curve rows\n";
}

void emit_constants(const ExperimentConfig& config, bool quiet, json& summary) {
    const ConstantsResult result = run_constants(config);
    CsvWriter csv({"loss", "p", "c_closed", "c_numeric", "sigma_sq_closed", "sigma_sq_numeric",
                   "alpha_closed", "alpha_numeric", "nu_measured", "quadratic_ok"});
    double worst = 0.0;
    for (const ConstantsRow& row : result.rows) {
        csv.add_row({row.loss, fmt17(row.p), fmt17(row.c_closed), fmt17(row.c_numeric),
                     fmt17(row.sigma_sq_closed), fmt17(row.sigma_sq_numeric),
                     fmt17(row.alpha_closed), fmt17(row.alpha_numeric), fmt17(row.nu_measured),
                     row.quadratic_ok ? "1" : "0"});
        worst = std::max({worst, std::abs(row.c_closed - row.c_numeric),
                          std::abs(row.sigma_sq_closed - row.sigma_sq_numeric),
                          std::abs(row.alpha_closed - row.alpha_numeric)});
    }
    csv.write(config.out + "/constants.csv");
    summary["worst_closed_vs_numeric"] = worst;
    if (!quiet) std::cout << "constants: worst closed-vs-numeric gap " << fmt17(worst) << "\n";
}

}  // namespace

int execute_command(const ExperimentConfig& config, bool quiet) {
    const auto start = std::chrono::steady_clock::now();
    ensure_directory(config.out);

    int code = 0;
    json summary;
    if (config.kind == "verify") {
        code = emit_verify(config, quiet);
    } else if (config.kind == "escape") {
        emit_escape(config, quiet, summary);
    } else if (config.kind == "cycle") {
        emit_cycle(config, quiet, summary);
    } else if (config.kind == "couple") {
        emit_couple(config, quiet, summary);
    } else if (config.kind == "limits") {
        emit_limits(config, quiet, summary);
    } else if (config.kind == "constants") {
        emit_constants(config, quiet, summary);
    } else {
        throw ConfigError("unknown command '" + config.kind + "'");
    }
    if (config.kind != "verify") write_json(config.out + "/summary.json", summary);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(config.out + "/manifest.json", manifest_for(config, wall));
    return code;
}

}  // namespace flatreg
