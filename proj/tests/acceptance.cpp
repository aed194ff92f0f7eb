// Acceptance experiments on the periodic cell. Prints one PASS/FAIL line per
// criterion; exit status 1 when any criterion fails.
//
//   acceptance [criterion numbers...]   (default: all)

#include "msm/bem.hpp"
#include "msm/evolution.hpp"
#include "msm/output.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace msm;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double inf = std::numeric_limits<double>::infinity();

struct Run {
    SimulationConfig config;
    Trace trace;
    SummaryStats stats;
    double seconds = 0.0;
};

std::map<std::string, Run> cache;

const Run& run(const std::string& key, const std::function<void(SimulationConfig&)>& setup) {
    auto it = cache.find(key);
    if (it != cache.end()) {
        return it->second;
    }
    Run r;
    r.config = default_config();
    setup(r.config);
    r.config.material.update_lame();
    r.config.validate();
    std::fprintf(stderr, "  running %s ...", key.c_str());
    std::fflush(stderr);
    const auto t0 = std::chrono::steady_clock::now();
    r.trace = run_evolution(r.config);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.stats = summarize(r.trace, r.config);
    std::fprintf(stderr, " %.1f s, %d backtracking episodes\n", r.seconds, r.trace.backtrack_episodes);
    return cache.emplace(key, std::move(r)).first->second;
}

const Run& default_run() {
    return run("default", [](SimulationConfig&) {});
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

// Range of the volume fraction over the whole trace.
double excursion(const Trace& tr) {
    double lo = inf, hi = -inf;
    for (const auto& r : tr.steps) {
        lo = std::min(lo, r.vol_frac);
        hi = std::max(hi, r.vol_frac);
    }
    return hi - lo;
}

// First field strength on the first leg where mx_avg reaches `level`.
double saturation_field(const Run& r, double level) {
    const int end = r.config.protocol.leg_end(0);
    const Vec2 p = r.config.protocol.primary_direction();
    for (int k = 0; k <= end; ++k) {
        if (r.trace.steps[k].mean_m.dot(p) >= level) {
            return r.trace.steps[k].H.norm();
        }
    }
    return inf;
}

struct BackTransformation {
    double start_field = 0.0;  // 0 when the volume fraction never drops
    double amount = 0.0;
};

// Decreasing leg from the first peak to zero field.
BackTransformation back_transformation(const Run& r) {
    BackTransformation b;
    const int peak = r.config.protocol.leg_end(0);
    const int end = r.config.protocol.leg_end(1);
    const double f_peak = r.trace.steps[peak].vol_frac;
    for (int k = peak; k <= end; ++k) {
        const double f = r.trace.steps[k].vol_frac;
        if (b.start_field == 0.0 && f < f_peak - switching_threshold) {
            b.start_field = r.trace.steps[k].H.norm();
        }
        b.amount = std::max(b.amount, f_peak - f);
    }
    return b;
}

Verdict criterion1() {
    const Run& r = default_run();
    const SummaryStats& s = r.stats;
    Verdict v;
    v.pass = !s.blocked && std::abs(s.switching_field_up - 0.25) <= 0.05 && r.seconds <= 300.0;
    v.detail = "switching field " + (s.blocked ? std::string("blocked") : fmt(s.switching_field_up) + " T") +
               " (target 0.25 +- 0.05), runtime " + fmt(r.seconds) + " s (limit 300)";
    return v;
}

Verdict criterion2() {
    const Run& r = run("kappa=0.2", [](SimulationConfig& c) { c.material.kappa = 0.2; });
    Verdict v;
    v.pass = r.stats.max_offset_change < 1e-4;
    v.detail = "max offset change " + fmt(r.stats.max_offset_change) + " (limit 1e-4)";
    return v;
}

Verdict criterion3() {
    const double a025 = run("E=0.25", [](SimulationConfig& c) { c.material.E_poly = 0.25; }).stats.loop_amplitude;
    const double a1 = default_run().stats.loop_amplitude;
    const double a4 = run("E=4", [](SimulationConfig& c) { c.material.E_poly = 4.0; }).stats.loop_amplitude;
    Verdict v;
    v.pass = a025 >= a1 + 0.02 && a1 >= a4 + 0.02;
    v.detail = "loop amplitude E=0.25: " + fmt(a025) + ", E=1: " + fmt(a1) + ", E=4: " + fmt(a4) +
               " (strictly decreasing, margin 0.02)";
    return v;
}

Verdict criterion4() {
    const Run& r2 = run("R=0.2", [](SimulationConfig& c) { c.geometry.particle_radius = 0.2; });
    const Run& r3 = default_run();
    const Run& r4 = run("R=0.4", [](SimulationConfig& c) { c.geometry.particle_radius = 0.4; });
    const double a2 = r2.stats.loop_amplitude, a3 = r3.stats.loop_amplitude, a4 = r4.stats.loop_amplitude;
    Verdict v;
    v.pass = a2 > a3 && a2 > a4;
    v.detail = "loop amplitude R=0.2: " + fmt(a2) + ", R=0.3: " + fmt(a3) + ", R=0.4: " + fmt(a4) +
               " (first-leg excursions " + fmt(excursion(r2.trace)) + ", " + fmt(excursion(r3.trace)) + ", " +
               fmt(excursion(r4.trace)) + ")";
    return v;
}

Verdict criterion5() {
    const Run& r = run("free A", [](SimulationConfig& c) { c.solver.free_macro_strain = true; });
    const double e = r.stats.spontaneous_strain;
    Verdict v;
    v.pass = std::abs(e - 0.026) <= 0.006;
    v.detail = "spontaneous strain " + fmt(100.0 * e) + " % (target 2.6 +- 0.6 %)";
    return v;
}

Verdict criterion6() {
    auto rotated = [](double deg) {
        return [deg](SimulationConfig& c) {
            c.protocol = build_protocol(ProtocolKind::rotated, c.protocol.peak, c.protocol.steps_per_leg,
                                        deg * pi / 180.0);
        };
    };
    const SummaryStats& s0 = default_run().stats;
    const SummaryStats& s5 = run("rotated 5", rotated(5.0)).stats;
    const SummaryStats& s10 = run("rotated 10", rotated(10.0)).stats;
    const SummaryStats& s20 = run("rotated 20", rotated(20.0)).stats;
    auto onset = [](const SummaryStats& s) { return s.blocked ? inf : s.switching_field_up; };
    Verdict v;
    v.pass = onset(s0) < onset(s5) && onset(s5) < onset(s10) && s20.max_offset_change < 1e-3;
    v.detail = "onset 0 deg: " + fmt(onset(s0)) + ", 5 deg: " + fmt(onset(s5)) + ", 10 deg: " +
               fmt(onset(s10)) + " T; offset change at 20 deg " + fmt(s20.max_offset_change) +
               " (limit 1e-3)";
    return v;
}

Verdict criterion7() {
    const Run& b = run("biaxial", [](SimulationConfig& c) {
        c.protocol = build_protocol(ProtocolKind::biaxial, c.protocol.peak, c.protocol.steps_per_leg);
    });
    const double ex = excursion(b.trace);
    const double loop = default_run().stats.loop_amplitude;
    Verdict v;
    v.pass = ex > loop;
    v.detail = "biaxial excursion " + fmt(ex) + " vs uniaxial loop amplitude " + fmt(loop);
    return v;
}

Verdict criterion8() {
    const Run& base = default_run();
    const Run& wp = run("workpiece", [](SimulationConfig& c) { c.geometry.workpiece = Workpiece::circular; });
    const double sat0 = saturation_field(base, 0.99);
    const double sat1 = saturation_field(wp, 0.99);
    const BackTransformation b0 = back_transformation(base);
    const BackTransformation b1 = back_transformation(wp);
    Verdict v;
    v.pass = sat1 > sat0 && b1.start_field > b0.start_field && b1.amount > b0.amount;
    v.detail = "saturation field " + fmt(sat0) + " -> " + fmt(sat1) + " T; back transformation starts at " +
               fmt(b0.start_field) + " -> " + fmt(b1.start_field) + " T, amount " + fmt(b0.amount) + " -> " +
               fmt(b1.amount);
    return v;
}

Verdict criterion9() {
    const Run& r = default_run();
    const int k = r.config.protocol.leg_end(3);
    const double f = r.trace.steps[k].vol_frac;
    const double f0 = r.trace.steps[0].vol_frac;
    Verdict v;
    v.pass = r.trace.steps[k].H.norm() < 1e-12 && std::abs(f - f0) >= 0.05;
    v.detail = "volume fraction at H = 0 after one cycle " + fmt(f) + " vs initial " + fmt(f0);
    return v;
}

// Checks of the accepted default trace and of the numerical building blocks.
Verdict criterion10() {
    std::vector<std::string> failed;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    };

    const Run& r = default_run();
    const Evolver ev(r.config);
    int violations = 0, worse = 0, decreasing = 0;
    for (std::size_t i = 1; i < r.trace.steps.size(); ++i) {
        const StepRecord& prev = r.trace.steps[i - 1];
        const StepRecord& cur = r.trace.steps[i];
        const EstimateCheck c = check_energy_estimates(ev.model(), prev, cur);
        violations += c.pass() ? 0 : 1;
        const double F_acc = ev.step_objective(cur.t, cur.state, prev.state);
        const double F_stay = ev.step_objective(cur.t, prev.state, prev.state);
        worse += F_acc <= F_stay + 1e-12 ? 0 : 1;
        decreasing += cur.diss_acc >= prev.diss_acc ? 0 : 1;
    }
    expect(violations == 0, std::to_string(violations) + " estimate violations");
    expect(worse == 0, std::to_string(worse) + " steps above the previous state");
    expect(decreasing == 0, "dissipation decreased " + std::to_string(decreasing) + " times");

    // Time reparameterization on a short protocol.
    SimulationConfig a = default_config();
    a.protocol = build_protocol(ProtocolKind::uniaxial, 1.0, 4);
    a.protocol.samples.resize(8);
    a.solver.restart_interval = 2;
    SimulationConfig b = a;
    b.protocol.kind = ProtocolKind::custom;
    for (auto& smp : b.protocol.samples) smp.t = std::exp(smp.t) + smp.t * smp.t;
    const Trace ta = run_evolution(a);
    const Trace tb = run_evolution(b);
    bool same = ta.steps.size() == tb.steps.size();
    for (std::size_t i = 0; same && i < ta.steps.size(); ++i) {
        same = ta.steps[i].state.twin.offset == tb.steps[i].state.twin.offset &&
               ta.steps[i].state.kin == tb.steps[i].state.kin &&
               ta.steps[i].state.mag_angle == tb.steps[i].state.mag_angle;
    }
    expect(same, "reparameterized trace differs");

    // Rank-one jump across the twin line and finite-difference step halving.
    const SimulationConfig cfg = default_config();
    const EnergyModel model(cfg);
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double jump_err = 0.0;
    int halving_bad = 0;
    for (int trial = 0; trial < 20; ++trial) {
        State s = initial_state(cfg);
        s.twin.offset = 0.2 * u(rng);
        for (int k = kin_omega; k < kin_count; ++k) s.kin[k] += 0.02 * u(rng);
        s.mag_angle += Vec2(pi * u(rng), pi * u(rng));
        const Mat2 jump = s.gradient(side_plus) - s.gradient(side_minus);
        jump_err = std::max(jump_err, (jump * s.twin.tangent()).norm() / std::max(1.0, jump.norm()));
        if (trial < 3) {
            auto F = [&](const Vector& x) { return model.total_energy(12.0, model.layout().unpack(x, s)); };
            const Vector x = model.layout().pack(s);
            const Vector g1 = central_difference(F, x, 4e-4);
            const Vector g2 = central_difference(F, x, 2e-4);
            const Vector g4 = central_difference(F, x, 1e-4);
            const double d1 = (g1 - g2).cwiseAbs().maxCoeff();
            const double d2 = (g2 - g4).cwiseAbs().maxCoeff();
            halving_bad += d2 < 0.35 * d1 + 1e-9 ? 0 : 1;
        }
    }
    expect(jump_err < 1e-10, "rank-one jump error " + fmt(jump_err));
    expect(halving_bad == 0, "finite-difference halving inconsistent");

    // Boundary element oracles.
    {
        const int n = 128;
        BoundarySystem sys;
        sys.segments = polygon_segments(regular_polygon(Vec2::Zero(), 1.0, n));
        sys.kind.assign(n, LaplaceKind::dirichlet);
        LaplaceData data;
        data.dirichlet.resize(n);
        for (int k = 0; k < n; ++k) {
            const Vec2 m = sys.segments[k].midpoint();
            data.dirichlet[k] = m.x() * m.x() - m.y() * m.y();
        }
        const auto sol = solve_laplace(sys, data);
        double err = 0.0;
        for (int k = 0; k < n; ++k) {
            const Vec2 m = sys.segments[k].midpoint();
            err = std::max(err, std::abs(sol.q[k] - 2.0 * std::cos(2.0 * std::atan2(m.y(), m.x()))));
        }
        expect(err / 2.0 < 0.01, "harmonic flux error " + fmt(err / 2.0));
    }
    {
        const double lambda = 2.0, mu = 0.5;
        const int n = 128;
        const Polygon particle = regular_polygon(Vec2::Zero(), 0.3, n);
        Polygon cell;
        const int m = n / 4;
        for (int k = 0; k < m; ++k) cell.emplace_back(-0.5 + double(k) / m, -0.5);
        for (int k = 0; k < m; ++k) cell.emplace_back(0.5, -0.5 + double(k) / m);
        for (int k = 0; k < m; ++k) cell.emplace_back(0.5 - double(k) / m, 0.5);
        for (int k = 0; k < m; ++k) cell.emplace_back(-0.5, 0.5 - double(k) / m);
        ElasticityBem bem(particle, cell, lambda, mu);
        Mat2 B;
        B << 0.01, 0.004, 0.004, -0.006;
        std::vector<Vec2> g;
        for (const auto& x : bem.particle_nodes()) g.push_back(B * x);
        const auto sol = bem.solve(g, B);
        const double W = 0.5 * lambda * B.trace() * B.trace() + mu * (B.array() * B.array()).sum();
        const double exact = W * (1.0 - signed_area(particle));
        const double err = std::abs(boundary_energy(sol) - exact) / exact;
        expect(err < 0.01, "affine elasticity energy error " + fmt(err));
    }
    {
        EnergyModel iso(cfg);
        iso.set_periodic_demag(false);
        // Undeformed single-phase disk.
        State s;
        s.twin.angle = pi / 4.0;
        s.twin.offset = 0.5;
        s.mag_angle << 0.0, 0.0;
        const double R = cfg.geometry.particle_radius;
        const double exact = cfg.material.Ms2_over_mu0 * pi * R * R / 4.0;
        const double err = std::abs(iso.demag_energy(s) - exact) / exact;
        expect(err < 0.015, "disk demag error " + fmt(err));
    }

    Verdict v;
    v.pass = failed.empty();
    if (v.pass) {
        v.detail = "estimates, comparison, dissipation, reparameterization, rank-one, FD halving, BEM oracles";
    }
    for (const auto& f : failed) v.detail += (v.detail.empty() ? "" : "; ") + f;
    return v;
}

Verdict criterion11() {
    const Run& r = run("no restarts", [](SimulationConfig& c) { c.solver.restart_interval = 0; });
    int violations = 0;
    for (const auto& s : r.trace.steps) violations += s.violation ? 1 : 0;
    Verdict v;
    v.pass = r.trace.backtrack_episodes >= 1 && violations == 0 && !r.trace.budget_exceeded;
    v.detail = std::to_string(r.trace.backtrack_episodes) + " backtracking episodes, " +
               std::to_string(r.trace.canceled.size()) + " canceled steps, " + std::to_string(violations) +
               " violations in the final trace";
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Verdict()>> criteria = {
        criterion1, criterion2, criterion3, criterion4,  criterion5, criterion6,
        criterion7, criterion8, criterion9, criterion10, criterion11};
    const char* names[] = {"switching field",      "blocked transformation", "stiffness ordering",
                           "radius ordering",      "spontaneous strain",     "misalignment",
                           "biaxial protocol",     "macroscopic stray field", "irreversibility",
                           "property suite",       "backtracking"};
    std::set<int> selected;
    for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));
    int failures = 0;
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) {
        if (!selected.empty() && !selected.count(k)) continue;
        Verdict v;
        try {
            v = criteria[k - 1]();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        failures += v.pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", k, names[k - 1], v.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
