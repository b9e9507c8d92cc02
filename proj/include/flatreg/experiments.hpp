#ifndef FLATREG_EXPERIMENTS_HPP
#define FLATREG_EXPERIMENTS_HPP

#include <string>
#include <vector>

#include "flatreg/config.hpp"
#include "flatreg/coupling.hpp"

namespace flatreg {

// Model instance plus the distinguished starting points the experiments use.
// For the quad_param family, `sharp_init` interpolates with all weight on the
// scaled redundant block (maximal tr hess L) and `flat_init` on the plain
// block; other families reuse `init` for all three.
struct BuiltModel {
    LossBundle bundle;
    Vector init;
    Vector sharp_init;
    Vector flat_init;
};

BuiltModel build_model(const ExperimentConfig& config);

struct CheckRow {
    std::string suite;
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    bool pass = false;
    std::string note;
};

struct VerifyResult {
    std::vector<CheckRow> checks;
    bool pass = true;
};

VerifyResult run_verify(const ExperimentConfig& config);

struct EscapeArm {
    std::string name;
    Trajectory traj;
    double trh_initial = 0.0;
    double trh_final = 0.0;
    double reduction = 0.0;  // trh_final / trh_initial
    double max_displacement = 0.0;
    double max_loss = 0.0;
};

struct EscapeResult {
    std::vector<EscapeArm> arms;  // label_noise, noiseless
    std::vector<std::pair<double, double>> eta_grid_reduction;  // (eta, trh ratio)
    double lambda = 0.0;
};

EscapeResult run_escape(const ExperimentConfig& config);

struct CycleRow {
    long step = 0;
    double x = 0.0, y = 0.0;
    double z1_sq = 0.0, z2_sq = 0.0, z3_sq = 0.0, z4_sq = 0.0;  // window means
    double angle = 0.0;  // unwrapped, counterclockwise positive
};

struct CycleResult {
    std::vector<CycleRow> rows;
    double total_angle = 0.0;
    double max_circle_defect = 0.0;
};

CycleResult run_cycle(const ExperimentConfig& config);

struct CoupleLambda {
    double lambda = 0.0;
    std::vector<CouplingReport> seeds;
    double median_max_residual = 0.0;
    double median_max_phi_dist = 0.0;
    double improvement = 0.0;  // phi_dist / residual medians
};

struct CoupleResult {
    std::vector<CoupleLambda> grid;
    double slope = 0.0;            // log-log fit of median residual vs lambda
    double min_improvement = 0.0;  // over the grid
};

CoupleResult run_couple(const ExperimentConfig& config);

struct LimitsResult {
    struct RegCurveRow {
        double eta, lam, reg, quarter_lam;
    };
    struct SharpnessRow {
        double nu, value, top_eig;
        bool degenerate;
    };
    std::vector<RegCurveRow> reg_curve;
    std::vector<SharpnessRow> sharpness;
};

LimitsResult run_limits(const ExperimentConfig& config);

struct ConstantsRow {
    std::string loss;
    double p;
    double c_closed, c_numeric;
    double sigma_sq_closed, sigma_sq_numeric;
    double alpha_closed, alpha_numeric;
    double nu_measured;
    bool quadratic_ok;
};

struct ConstantsResult {
    std::vector<ConstantsRow> rows;
};

ConstantsResult run_constants(const ExperimentConfig& config);

// Parallelism cap for replica fan-out (FLATREG_THREADS, else hardware).
int replica_threads();

// Runs the configured command, writes artifacts (manifest + CSV tables) into
// config.out, prints a short report, and returns the process exit code:
// 0 success / all checks pass, 1 check failure.
int execute_command(const ExperimentConfig& config, bool quiet = false);

}  // namespace flatreg

#endif
