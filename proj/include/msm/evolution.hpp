#pragma once

#include "msm/energy.hpp"

#include <functional>
#include <string>
#include <vector>

namespace msm {

/// kappa times the area of the symmetric difference of the p = 1 regions.
double dissipation_distance(const State& a, const State& b, const CellMesh& mesh, double kappa);

struct StepRecord {
    int index = 0;
    double t = 0.0;
    Vec2 H = Vec2::Zero();
    State state;
    EnergyBreakdown energy;
    double vol_frac = 0.0;
    Vec2 mean_m = Vec2::Zero();  // particle average, relative to saturation
    double d_step = 0.0;
    double diss_acc = 0.0;
    /// E_i + D_i - E_{i-1} and the interval it must lie in.
    double delta = 0.0;
    double est_lo = 0.0;
    double est_hi = 0.0;
    bool violation = false;
    bool backtracked = false;
    bool converged = true;
    int iterations = 0;
    std::string seed = "warm";
    int episode = -1;  // canceled records: backtracking episode that removed them
};

struct Trace {
    std::vector<StepRecord> steps;
    std::vector<StepRecord> canceled;
    int backtrack_episodes = 0;
    bool budget_exceeded = false;
};

double accumulated_dissipation(const Trace& trace);

using Functional = std::function<double(const Vector&)>;
/// Maps a gradient to a search direction; frozen entries must come back zero.
using Preconditioner = std::function<Vector(const Vector& g, const std::vector<char>& frozen)>;

struct Direction {
    Vector d;
    bool stuck = false;
    std::vector<char> frozen;  // zeroed entries
};

/// Search direction for F = E + D at z. g is the gradient with the zero
/// subgradient selected for the phase entries where p(z) = p(z_prev).
/// Phase entries with the largest one-sided slope are frozen until the
/// direction descends; Stuck when nothing is left. Trial steps have length
/// `trial` in the max norm.
Direction descent_direction(const Functional& F, const Vector& z, const Vector& g,
                            const Vector& z_prev, const std::vector<int>& phase,
                            std::vector<char> frozen = {}, const Preconditioner& precondition = {},
                            double trial = 1e-6);

struct LineSearchResult {
    double step = 0.0;
    Vector z;
    double F = 0.0;
    bool clamped = false;
};

/// Armijo backtracking from `step0` that never lets a phase entry cross its
/// previous-step value; a clamped step lands exactly on it.
LineSearchResult line_search(const Functional& F, const Vector& z, double Fz, const Vector& d,
                             double slope, const Vector& z_prev, const std::vector<int>& phase,
                             double c = 1e-4, double step0 = 1.0);

/// Result of (E-)/(E+) for one step.
struct EstimateCheck {
    double delta = 0.0;  // E(t_i, z_i) + D - E(t_{i-1}, z_{i-1})
    double lo = 0.0;
    double hi = 0.0;
    double tol = 0.0;
    /// Positive above hi + tol, negative below lo - tol, zero when passing.
    double violation = 0.0;
    bool pass() const { return violation == 0.0; }
};

EstimateCheck check_energy_estimates(const EnergyModel& model, const StepRecord& prev,
                                     const StepRecord& cur);

struct MinimizeResult {
    State state;
    double F = 0.0;
    int iterations = 0;
    bool converged = false;
    bool stuck = false;
};

/// Incremental problem: minimize E(t, .) + D(prev, .) over the layout entries.
class Evolver {
public:
    explicit Evolver(const SimulationConfig& config);

    const EnergyModel& model() const { return model_; }
    EnergyModel& model() { return model_; }
    const SimulationConfig& config() const { return model_.config(); }

    /// E(t, s) + D(prev, s).
    double step_objective(double t, const State& s, const State& prev) const;
    MinimizeResult minimize(double t, const State& start, const State& prev) const;
    /// Restart state named `seed` built from s.
    State seed_state(const std::string& seed, const State& s) const;

    /// Record for state s at sample i, with dissipation and estimates against prev.
    StepRecord make_record(int i, const State& s, const StepRecord* prev) const;
    /// Relaxed initial state at the first sample.
    StepRecord initial_step() const;
    /// Warm start from prev plus the restart seeds when due.
    StepRecord incremental_step(const StepRecord& prev, int i) const;

    Trace run() const;

private:
    /// Gradient of E + D; `energy_part` receives the gradient of E alone.
    Vector gradient(double t, const Vector& z, const State& base, const State& prev,
                    Vector* energy_part = nullptr) const;
    Matrix frozen_hessian(double t, const Vector& z, const State& base, const std::vector<char>& frozen) const;

    EnergyModel model_;
    std::vector<int> phase_;
    std::vector<char> fixed_;  // entries never optimized (rigid translation)
};

Trace run_evolution(const SimulationConfig& config);

}  // namespace msm
