#include "msm/evolution.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace msm {

namespace {

Polygon phase_one_region(const State& s, const CellMesh& mesh) {
    const double side = s.plus_phase == 1 ? 1.0 : -1.0;
    return clip_half_plane(mesh.particle, s.twin.normal(), s.twin.offset, side);
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double dissipation_distance(const State& a, const State& b, const CellMesh& mesh, double kappa) {
    const Polygon pa = phase_one_region(a, mesh);
    const Polygon pb = phase_one_region(b, mesh);
    const double side = b.plus_phase == 1 ? 1.0 : -1.0;
    const Polygon both = clip_half_plane(pa, b.twin.normal(), b.twin.offset, side);
    const double sym = signed_area(pa) + signed_area(pb) - 2.0 * signed_area(both);
    return kappa * std::max(sym, 0.0);
}

double accumulated_dissipation(const Trace& trace) {
    double d = 0.0;
    for (std::size_t i = 1; i < trace.steps.size(); ++i) {
        d += trace.steps[i].d_step;
    }
    return d;
}

// ---------------------------------------------------------------- descent

Direction descent_direction(const Functional& F, const Vector& z, const Vector& g,
                            const Vector& /*z_prev*/, const std::vector<int>& phase,
                            std::vector<char> frozen, const Preconditioner& precondition,
                            double trial) {
    const int n = static_cast<int>(z.size());
    if (frozen.empty()) {
        frozen.assign(n, 0);
    }
    auto direction = [&]() {
        Vector gm = g;
        for (int k = 0; k < n; ++k) {
            if (frozen[k]) gm[k] = 0.0;
        }
        Vector d = precondition ? precondition(gm, frozen) : Vector(-gm);
        for (int k = 0; k < n; ++k) {
            if (frozen[k]) d[k] = 0.0;
        }
        return d;
    };

    Direction out;
    const double F0 = F(z);
    for (;;) {
        out.d = direction();
        out.frozen = frozen;
        if (out.d.lpNorm<Eigen::Infinity>() == 0.0) {
            out.stuck = true;
            return out;
        }
        const double tau = trial / out.d.lpNorm<Eigen::Infinity>();
        if (F(z + tau * out.d) < F0) {
            return out;
        }
        // Freeze the phase entry with the largest one-sided slope.
        int worst = -1;
        double worst_slope = -std::numeric_limits<double>::infinity();
        for (int k : phase) {
            if (frozen[k] || out.d[k] == 0.0) {
                continue;
            }
            Vector zk = z;
            zk[k] += tau * out.d[k];
            const double slope = (F(zk) - F0) / tau;
            if (slope > worst_slope) {
                worst_slope = slope;
                worst = k;
            }
        }
        if (worst < 0) {
            out.stuck = true;
            return out;
        }
        frozen[worst] = 1;
    }
}

LineSearchResult line_search(const Functional& F, const Vector& z, double Fz, const Vector& d,
                             double slope, const Vector& z_prev, const std::vector<int>& phase,
                             double c, double step0) {
    LineSearchResult res;
    res.z = z;
    res.F = Fz;
    double step = step0;
    // Largest step keeping sign(z_k - z_prev_k) for the phase entries.
    int clamp_k = -1;
    for (int k : phase) {
        const double s = z[k] - z_prev[k];
        if (s == 0.0 || d[k] == 0.0 || sign(d[k]) == sign(s)) {
            continue;
        }
        const double limit = -s / d[k];
        if (limit < step) {
            step = limit;
            clamp_k = k;
        }
    }
    const double clamp_step = step;
    for (int it = 0; it < 60 && step > 0.0; ++it) {
        Vector zn = z + step * d;
        const bool clamped = clamp_k >= 0 && step == clamp_step;
        if (clamped) {
            zn[clamp_k] = z_prev[clamp_k];
        }
        const double Fn = F(zn);
        if (Fn < Fz && Fn <= Fz + c * step * std::min(slope, 0.0)) {
            res.step = step;
            res.z = zn;
            res.F = Fn;
            res.clamped = clamped;
            return res;
        }
        step *= 0.5;
    }
    return res;
}

// ---------------------------------------------------------------- estimates

EstimateCheck check_energy_estimates(const EnergyModel& model, const StepRecord& prev,
                                     const StepRecord& cur) {
    EstimateCheck c;
    c.delta = cur.energy.total + cur.d_step - prev.energy.total;
    c.hi = model.energy_increment(prev.t, cur.t, prev.state);
    c.lo = model.energy_increment(prev.t, cur.t, cur.state);
    c.tol = model.config().solver.tol_E_rel * std::max(1.0, std::abs(cur.energy.total));
    if (c.delta > c.hi + c.tol) {
        c.violation = c.delta - c.hi;
    } else if (c.delta < c.lo - c.tol) {
        c.violation = c.delta - c.lo;
    }
    return c;
}

// ---------------------------------------------------------------- evolver

Evolver::Evolver(const SimulationConfig& config) : model_(config) {
    const DofLayout& L = model_.layout();
    phase_ = L.phase_indices();
    fixed_.assign(L.size(), 0);
    fixed_[L.kin_index(kin_cx)] = 1;
    fixed_[L.kin_index(kin_cy)] = 1;
}

double Evolver::step_objective(double t, const State& s, const State& prev) const {
    return model_.total_energy(t, s) +
           dissipation_distance(prev, s, model_.mesh(), config().material.kappa);
}

Vector Evolver::gradient(double t, const Vector& z, const State& base, const State& prev,
                         Vector* energy_part) const {
    const DofLayout& L = model_.layout();
    const double h = config().solver.fd_step;
    const int n = L.size();
    Vector g = Vector::Zero(n);
    // E depends on the geometry through the demag form: central differences
    // with the form frozen, plus m^T dQ m from a one-sided difference of the form.
    const State s0 = L.unpack(z, base);
    const Mat4 Q0 = model_.demag_form(s0);
    Eigen::Vector4d m;
    m << s0.magnetization(side_plus), s0.magnetization(side_minus);
    const double ms2 = config().material.Ms2_over_mu0;
    auto Ef = [&](const Vector& x) { return model_.frozen_energy(t, L.unpack(x, base), Q0); };
    for (int k = 0; k < n; ++k) {
        if (fixed_[k]) continue;
        Vector zp = z, zm = z;
        zp[k] += h;
        zm[k] -= h;
        g[k] = (Ef(zp) - Ef(zm)) / (2.0 * h);
        if (k == L.mag_index(side_plus) || k == L.mag_index(side_minus)) continue;
        const Mat4 dQ = (model_.demag_form(L.unpack(zp, base)) - Q0) / h;
        g[k] += ms2 * m.dot(dQ * m);
    }
    // Central differences of D on the entries away from their kink; entries
    // at the kink keep the zero selected from the subdifferential.
    if (energy_part) *energy_part = g;
    const Vector z_prev = L.pack(prev);
    const double kappa = config().material.kappa;
    for (int k : phase_) {
        const double gap = std::abs(z[k] - z_prev[k]);
        if (gap == 0.0) continue;
        const double hd = std::min(h, 0.25 * gap);
        Vector zp = z, zm = z;
        zp[k] += hd;
        zm[k] -= hd;
        g[k] += (dissipation_distance(prev, L.unpack(zp, base), model_.mesh(), kappa) -
                 dissipation_distance(prev, L.unpack(zm, base), model_.mesh(), kappa)) /
                (2.0 * hd);
    }
    return g;
}

Matrix Evolver::frozen_hessian(double t, const Vector& z, const State& base,
                               const std::vector<char>& frozen) const {
    const DofLayout& L = model_.layout();
    const int n = L.size();
    const Mat4 Q = model_.demag_form(L.unpack(z, base));
    auto f = [&](const Vector& x) { return model_.frozen_energy(t, L.unpack(x, base), Q); };
    const double h = 1e-4;
    Matrix H = Matrix::Zero(n, n);
    const double f0 = f(z);
    for (int i = 0; i < n; ++i) {
        if (frozen[i]) continue;
        Vector zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        H(i, i) = (f(zp) - 2.0 * f0 + f(zm)) / (h * h);
        for (int j = 0; j < i; ++j) {
            if (frozen[j]) continue;
            Vector a = z, b = z, c = z, d = z;
            a[i] += h; a[j] += h;
            b[i] += h; b[j] -= h;
            c[i] -= h; c[j] += h;
            d[i] -= h; d[j] -= h;
            H(i, j) = H(j, i) = (f(a) - f(b) - f(c) + f(d)) / (4.0 * h * h);
        }
    }
    // Curvature of the stray field along the phase entries, which the frozen
    // form leaves out.
    const State s0 = L.unpack(z, base);
    Eigen::Vector4d m;
    m << s0.magnetization(side_plus), s0.magnetization(side_minus);
    Eigen::Vector4d dm[2];
    dm[0] << -m[1], m[0], 0.0, 0.0;
    dm[1] << 0.0, 0.0, -m[3], m[2];
    const double ms2 = config().material.Ms2_over_mu0;
    for (int k : phase_) {
        if (frozen[k]) continue;
        Vector zp = z, zm = z;
        zp[k] += h;
        zm[k] -= h;
        const Mat4 Qp = model_.demag_form(L.unpack(zp, base));
        const Mat4 Qm = model_.demag_form(L.unpack(zm, base));
        H(k, k) += ms2 * m.dot((Qp - 2.0 * Q + Qm) * m) / (h * h);
        for (int side = 0; side < 2; ++side) {
            const int j = L.mag_index(side);
            if (frozen[j]) continue;
            const double v = ms2 * 2.0 * dm[side].dot((Qp - Qm) * m) / (2.0 * h);
            H(k, j) += v;
            H(j, k) += v;
        }
    }
    return H;
}

MinimizeResult Evolver::minimize(double t, const State& start, const State& prev) const {
    const DofLayout& L = model_.layout();
    const SolverParams& sp = config().solver;
    const int n = L.size();
    const int io = L.offset_index();
    const double kappa = config().material.kappa;
    const double edge = model_.mesh().radius - model_.mesh().h;
    const Vector z_prev = L.pack(prev);
    Vector z = L.pack(start);
    z[io] = std::clamp(z[io], -edge, edge);
    Functional F = [&](const Vector& x) { return step_objective(t, L.unpack(x, start), prev); };
    auto D = [&](const Vector& x) {
        return dissipation_distance(prev, L.unpack(x, start), model_.mesh(), kappa);
    };

    // Step caps per entry, in dof units.
    Vector cap = Vector::Constant(n, 0.02);
    cap[L.mag_index(0)] = cap[L.mag_index(1)] = 0.5;
    if (L.angle_index() >= 0) cap[L.angle_index()] = 0.05;
    for (int k = 0; k < 3; ++k) {
        if (L.macro_index(k) >= 0) cap[L.macro_index(k)] = 0.01;
    }

    MinimizeResult res;
    double Fz = F(z);
    // Curvature model: the frozen-form Hessian, refined by damped BFGS updates.
    Matrix B;
    Vector z_old, g_old;
    bool kink_old = false;
    for (int it = 0; it < sp.max_iterations; ++it) {
        res.iterations = it;
        Vector gE;
        const Vector g = gradient(t, z, start, prev, &gE);

        // Phase entries at their kink: one-sided slopes of E + D. An entry
        // with no descending side is frozen, otherwise gb follows that side.
        const double D0 = D(z);
        const Functional model = [&](const Vector& x) { return gE.dot(x - z) + D(x) - D0; };
        std::vector<char> frozen = fixed_;
        if ((z[io] >= edge && g[io] < 0.0) || (z[io] <= -edge && g[io] > 0.0)) {
            frozen[io] = 1;
        }
        Vector gb = g;
        Vector side = Vector::Zero(n);
        for (int k : phase_) {
            if (frozen[k] || z[k] != z_prev[k]) continue;
            const double h = 1e-7;
            Vector zp = z, zm = z;
            zp[k] += h;
            zm[k] -= h;
            const double up = g[k] + (D(zp) - D0) / h;
            const double down = -g[k] + (D(zm) - D0) / h;
            if (up >= 0.0 && down >= 0.0) {
                frozen[k] = 1;
            } else if (up < down) {
                side[k] = 1.0;
                gb[k] = up;
            } else {
                side[k] = -1.0;
                gb[k] = -down;
            }
        }
        const bool kink = side.cwiseAbs().sum() > 0.0;
        Direction sd;
        sd.frozen = frozen;
        sd.d = Vector::Zero(n);
        for (int k = 0; k < n; ++k) {
            if (!frozen[k]) sd.d[k] = -gb[k];
        }
        if (kink && !(model(z + 1e-7 / sd.d.lpNorm<Eigen::Infinity>() * sd.d) < 0.0)) {
            // Coupled phase entries: fall back to sequential freezing.
            sd = descent_direction(model, z, gb, z_prev, phase_, frozen, {}, 1e-7);
            if (sd.stuck) {
                res.converged = true;
                res.stuck = true;
                break;
            }
            for (int k : phase_) {
                if (sd.frozen[k]) side[k] = 0.0;
            }
        }
        double gmax = 0.0;
        for (int k = 0; k < n; ++k) {
            if (!sd.frozen[k]) gmax = std::max(gmax, std::abs(gb[k]));
        }
        if (gmax < sp.grad_tol) {
            res.converged = true;
            break;
        }

        if (it % 25 == 0) {
            const Matrix H = frozen_hessian(t, z, start, fixed_);
            Eigen::SelfAdjointEigenSolver<Matrix> es(H);
            Vector lam = es.eigenvalues().cwiseAbs();
            lam = lam.cwiseMax(1e-10 + 1e-9 * lam.maxCoeff());
            B = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
        } else if (kink == kink_old) {
            const Vector sv = z - z_old;
            const Vector y = gb - g_old;
            const Vector Bs = B * sv;
            const double sBs = sv.dot(Bs);
            const double sy = sv.dot(y);
            if (sBs > 0.0) {
                const double th = sy >= 0.2 * sBs ? 1.0 : 0.8 * sBs / (sBs - sy);
                const Vector r = th * y + (1.0 - th) * Bs;
                B += r * r.transpose() / sv.dot(r) - Bs * Bs.transpose() / sBs;
            }
        }
        z_old = z;
        g_old = gb;
        kink_old = kink;

        // Projected quasi-Newton step: kink entries whose Newton component
        // leaves their side, or an offset pushing past the bound, are held
        // and the rest re-solved. Steepest descent if the model does not descend.
        std::vector<char> held = sd.frozen;
        Vector d;
        bool ok = false;
        for (;;) {
            std::vector<int> act;
            for (int k = 0; k < n; ++k) {
                if (!held[k]) act.push_back(k);
            }
            const int m = static_cast<int>(act.size());
            if (m == 0) break;
            Matrix Bsub(m, m);
            Vector gs(m);
            for (int a2 = 0; a2 < m; ++a2) {
                gs[a2] = gb[act[a2]];
                for (int b2 = 0; b2 < m; ++b2) Bsub(a2, b2) = B(act[a2], act[b2]);
            }
            const Vector ds = -Bsub.ldlt().solve(gs);
            d = Vector::Zero(n);
            for (int a2 = 0; a2 < m; ++a2) d[act[a2]] = ds[a2];
            if (!d.allFinite()) break;
            bool changed = false;
            for (int k : phase_) {
                if (!held[k] && side[k] != 0.0 && sign(d[k]) != side[k]) {
                    held[k] = 1;
                    changed = true;
                }
            }
            if (!held[io] && std::abs(z[io]) >= edge && d[io] * z[io] > 0.0) {
                held[io] = 1;
                changed = true;
            }
            if (changed) continue;
            ok = gb.dot(d) < 0.0 && model(z + 1e-7 / d.lpNorm<Eigen::Infinity>() * d) < 0.0;
            break;
        }
        if (!ok) {
            d = sd.d;
            if (std::abs(z[io]) >= edge && d[io] * z[io] > 0.0) {
                d[io] = 0.0;
            }
        }

        double step0 = 1.0;
        for (int k = 0; k < n; ++k) {
            if (d[k] != 0.0) step0 = std::min(step0, cap[k] / std::abs(d[k]));
        }
        if (d[io] != 0.0) {
            const double room = (d[io] > 0.0 ? edge : -edge) - z[io];
            step0 = std::min(step0, std::max(room / d[io], 0.0));
        }
        const LineSearchResult ls =
            line_search(F, z, Fz, d, gb.dot(d), z_prev, phase_, sp.armijo_c, step0);
        if (ls.step == 0.0) {
            // No decrease at machine precision: a local minimum up to noise.
            res.converged = gmax < 1e3 * sp.grad_tol;
            break;
        }
        z = ls.z;
        z[io] = std::clamp(z[io], -edge, edge);
        Fz = F(z);
        res.iterations = it + 1;
    }
    res.state = L.unpack(z, start);
    res.F = Fz;
    return res;
}

State Evolver::seed_state(const std::string& seed, const State& s) const {
    State out = s;
    const double pi = std::acos(-1.0);
    const double edge = model_.mesh().radius - model_.mesh().h;
    if (seed == "warm") {
    } else if (seed == "flip_plus") {
        out.mag_angle[side_plus] += pi;
    } else if (seed == "flip_minus") {
        out.mag_angle[side_minus] += pi;
    } else if (seed == "flip_both") {
        out.mag_angle[side_plus] += pi;
        out.mag_angle[side_minus] += pi;
    } else if (seed == "offset_plus") {
        out.twin.offset = edge;
    } else if (seed == "offset_minus") {
        out.twin.offset = -edge;
    } else {
        throw std::invalid_argument("unknown restart seed: " + seed);
    }
    return out;
}

StepRecord Evolver::make_record(int i, const State& s, const StepRecord* prev) const {
    StepRecord r;
    r.index = i;
    r.t = config().protocol.samples[i].t;
    r.H = model_.field(r.t);
    r.state = s;
    r.energy = model_.breakdown(r.t, s);
    r.vol_frac = volume_fraction(s, model_.mesh());
    r.mean_m = model_.mean_particle_magnetization(s);
    if (prev) {
        r.d_step = dissipation_distance(prev->state, s, model_.mesh(), config().material.kappa);
        r.diss_acc = prev->diss_acc + r.d_step;
        const EstimateCheck c = check_energy_estimates(model_, *prev, r);
        r.delta = c.delta;
        r.est_lo = c.lo;
        r.est_hi = c.hi;
        r.violation = !c.pass();
    }
    return r;
}

StepRecord Evolver::initial_step() const {
    const State s0 = initial_state(config());
    const MinimizeResult m = minimize(config().protocol.samples[0].t, s0, s0);
    StepRecord r = make_record(0, m.state, nullptr);
    r.iterations = m.iterations;
    r.converged = m.converged;
    return r;
}

StepRecord Evolver::incremental_step(const StepRecord& prev, int i) const {
    const double t = config().protocol.samples[i].t;
    const SolverParams& sp = config().solver;
    MinimizeResult best = minimize(t, prev.state, prev.state);
    std::string best_seed = "warm";
    if (sp.restart_interval > 0 && i % sp.restart_interval == 0) {
        const State base = best.state;
        for (const auto& name : sp.restart_seeds) {
            const MinimizeResult r = minimize(t, seed_state(name, base), prev.state);
            // Ties within round-off keep the earlier candidate.
            if (r.F < best.F - 1e-10 * std::max(1.0, std::abs(best.F))) {
                best = r;
                best_seed = name;
            }
        }
    }
    StepRecord rec = make_record(i, best.state, &prev);
    rec.iterations = best.iterations;
    rec.converged = best.converged;
    rec.seed = best_seed;
    return rec;
}

Trace Evolver::run() const {
    const SolverParams& sp = config().solver;
    const FieldProtocol& proto = config().protocol;
    const int n = static_cast<int>(proto.samples.size());
    const int leg_steps = std::max(1, proto.steps_per_leg);
    Trace tr;
    tr.steps.push_back(initial_step());
    std::map<int, int> episodes_per_leg;
    int rerun_until = -1;
    int i = 1;
    while (i < n) {
        StepRecord rec = incremental_step(tr.steps[i - 1], i);
        rec.backtracked = i <= rerun_until;
        const bool below = rec.violation && rec.delta < rec.est_lo;
        if (below && sp.backtracking) {
            const int leg = (i - 1) / leg_steps;
            if (episodes_per_leg[leg] >= sp.max_backtrack_per_leg) {
                tr.budget_exceeded = true;
            } else {
                // Walk back with the lower state as the seed.
                const int episode = tr.backtrack_episodes;
                const int lowest = std::max(1, i - leg_steps);
                std::vector<StepRecord> removed;
                State seed = rec.state;
                int last = -1;
                for (int k = i - 1; k >= lowest; --k) {
                    const StepRecord& before = tr.steps[k - 1];
                    const MinimizeResult cand = minimize(tr.steps[k].t, seed, before.state);
                    const double F_old = step_objective(tr.steps[k].t, tr.steps[k].state, before.state);
                    if (!(cand.F < F_old - 1e-12 * std::max(1.0, std::abs(F_old)))) {
                        break;
                    }
                    StepRecord nr = make_record(k, cand.state, &before);
                    nr.iterations = cand.iterations;
                    nr.converged = cand.converged;
                    nr.seed = "backtrack";
                    nr.backtracked = true;
                    removed.push_back(tr.steps[k]);
                    tr.steps[k] = nr;
                    last = k;
                    if (!(nr.violation && nr.delta < nr.est_lo)) {
                        break;
                    }
                    seed = cand.state;
                }
                if (last >= 0) {
                    ++tr.backtrack_episodes;
                    ++episodes_per_leg[leg];
                    // Records after the restart point are recomputed going forward.
                    for (int k = last + 1; k < i; ++k) {
                        removed.push_back(tr.steps[k]);
                    }
                    removed.push_back(rec);
                    std::sort(removed.begin(), removed.end(),
                              [](const StepRecord& a, const StepRecord& b) { return a.index < b.index; });
                    for (auto& r : removed) {
                        r.episode = episode;
                        tr.canceled.push_back(r);
                    }
                    tr.steps.resize(last + 1);
                    rerun_until = std::max(rerun_until, i);
                    i = last + 1;
                    continue;
                }
            }
        }
        tr.steps.push_back(rec);
        ++i;
    }
    return tr;
}

Trace run_evolution(const SimulationConfig& config) { return Evolver(config).run(); }

}  // namespace msm
