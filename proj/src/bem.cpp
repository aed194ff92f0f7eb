#include "msm/bem.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace msm {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

// Target xi in the frame of a segment: x(s) - xi = u tau + h nu with u in [u0, u1].
struct Local {
    Vec2 tau;
    Vec2 nu;
    double L = 0.0;
    double u0 = 0.0;
    double u1 = 0.0;
    double h = 0.0;
};

Local local_frame(const Segment& seg, const Vec2& xi, bool self = false) {
    Local f;
    const Vec2 d = seg.b - seg.a;
    f.L = d.norm();
    f.tau = d / f.L;
    f.nu = Vec2(f.tau.y(), -f.tau.x());
    const Vec2 p = seg.a - xi;
    f.u0 = p.dot(f.tau);
    f.u1 = f.u0 + f.L;
    f.h = p.dot(f.nu);
    if (self || std::abs(f.h) <= 1e-13 * f.L) {
        f.h = 0.0;
    }
    return f;
}

// Angle subtended by the segment; zero when xi lies on its line.
double subtended(const Local& f) {
    if (f.h == 0.0) {
        return 0.0;
    }
    return std::atan2(f.h * f.L, f.h * f.h + f.u0 * f.u1);
}

double xlogx2(double u, double r2) { return r2 > 0.0 ? u * std::log(r2) : 0.0; }

double log_integral_local(const Local& f, double angle) {
    const double r02 = f.u0 * f.u0 + f.h * f.h;
    const double r12 = f.u1 * f.u1 + f.h * f.h;
    return 0.5 * (xlogx2(f.u1, r12) - xlogx2(f.u0, r02)) - f.L + f.h * angle;
}

// Gauss-Legendre rules on [0, 1].
struct Rule {
    std::vector<double> x;
    std::vector<double> w;
};

Rule gauss_rule(int n) {
    Rule r;
    if (n == 2) {
        r.x = {kernel::gauss_lo, kernel::gauss_hi};
        r.w = {0.5, 0.5};
        return r;
    }
    // Newton iteration on Legendre polynomials.
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) {
                break;
            }
        }
        r.x[i] = 0.5 * (1.0 - z);
        r.w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    return r;
}

const Rule& rule(int n) {
    static const Rule r2 = gauss_rule(2);
    static const Rule r4 = gauss_rule(4);
    static const Rule r8 = gauss_rule(8);
    static const Rule r16 = gauss_rule(16);
    switch (n) {
        case 2: return r2;
        case 4: return r4;
        case 8: return r8;
        default: return r16;
    }
}

}  // namespace

std::vector<Segment> polygon_segments(const Polygon& poly, bool reverse) {
    std::vector<Segment> segs;
    const std::size_t n = poly.size();
    segs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (reverse) {
            segs.push_back({poly[(n - i) % n], poly[(2 * n - i - 1) % n]});
        } else {
            segs.push_back({poly[i], poly[(i + 1) % n]});
        }
    }
    return segs;
}

namespace kernel {

double log_integral(const Segment& seg, const Vec2& xi) {
    const Local f = local_frame(seg, xi);
    return log_integral_local(f, subtended(f));
}

double double_layer(const Segment& seg, const Vec2& xi) { return subtended(local_frame(seg, xi)); }

Vec2 log_integral_gradient(const Segment& seg, const Vec2& xi) {
    const Local f = local_frame(seg, xi);
    const double r02 = f.u0 * f.u0 + f.h * f.h;
    const double r12 = f.u1 * f.u1 + f.h * f.h;
    return -(0.5 * std::log(r12 / r02) * f.tau + subtended(f) * f.nu);
}

double log_integral(const Segment& seg, const Vec2& xi, Vec2& gradient) {
    const Local f = local_frame(seg, xi);
    const double angle = subtended(f);
    const double r02 = f.u0 * f.u0 + f.h * f.h;
    const double r12 = f.u1 * f.u1 + f.h * f.h;
    gradient = -(0.5 * std::log(r12 / r02) * f.tau + angle * f.nu);
    return log_integral_local(f, angle);
}

double log_integral(const Segment& seg, const Vec2& xi, double& double_layer) {
    const Local f = local_frame(seg, xi);
    double_layer = subtended(f);
    return log_integral_local(f, double_layer);
}

KelvinBlocks kelvin(const Segment& seg, const Vec2& xi, double mu, double nu, bool self) {
    const Local f = local_frame(seg, xi, self);
    const double h = f.h;
    const double L = f.L;
    const double r02 = f.u0 * f.u0 + h * h;
    const double r12 = f.u1 * f.u1 + h * h;
    const double D = subtended(f);
    const double A1 = 0.5 * std::log(r12 / r02);
    const double ln0 = log_integral_local(f, D);
    const double ln1 = 0.25 * ((r12 > 0.0 ? r12 * std::log(r12) : 0.0) - r12 -
                               (r02 > 0.0 ? r02 * std::log(r02) : 0.0) + r02);
    const double du2 = f.u1 * f.u1 - f.u0 * f.u0;

    double P = 0.0;
    double Qh = 0.0;
    if (h != 0.0) {
        P = 0.5 * h * (f.u1 / r12 - f.u0 / r02);
        Qh = 0.5 * h * h * (1.0 / r12 - 1.0 / r02);
    }
    const double Btt0 = 0.5 * D - P;
    const double Btn0 = -Qh;
    const double Bnn0 = P + 0.5 * D;
    const double Btt1 = h * A1 + h * Qh;
    const double Btn1 = 0.5 * h * D - h * P;
    const double Bnn1 = -h * Qh;

    const Vec2& t = f.tau;
    const Vec2& n = f.nu;
    const Mat2 I = Mat2::Identity();
    const Mat2 tt = t * t.transpose();
    const Mat2 nn = n * n.transpose();
    const Mat2 sym = t * n.transpose() + n * t.transpose();
    const Mat2 skew = t * n.transpose() - n * t.transpose();

    const double cu = 1.0 / (8.0 * std::numbers::pi * mu * (1.0 - nu));
    const double ct = -1.0 / (4.0 * std::numbers::pi * (1.0 - nu));
    const double k1 = 3.0 - 4.0 * nu;
    const double k2 = 1.0 - 2.0 * nu;

    const Mat2 U0 = cu * (-k1 * ln0 * I + tt * (L - h * D) + sym * (h * A1) + nn * (h * D));
    const Mat2 U1 = cu * (-k1 * ln1 * I + tt * (0.5 * du2 - h * h * A1) + sym * (h * (L - h * D)) +
                          nn * (h * h * A1));
    const Mat2 T0 = ct * (k2 * D * I + 2.0 * (tt * Btt0 + sym * Btn0 + nn * Bnn0) - k2 * A1 * skew);
    const Mat2 T1 = ct * (k2 * h * A1 * I + 2.0 * (tt * Btt1 + sym * Btn1 + nn * Bnn1) -
                          k2 * (L - h * D) * skew);

    // Linear shape functions through the nodes u_a = u0 + gauss_a L.
    const double ua = f.u0 + gauss_lo * L;
    const double ub = f.u0 + gauss_hi * L;
    const double inv = 1.0 / (ub - ua);
    KelvinBlocks k;
    k.U[0] = (ub * U0 - U1) * inv;
    k.U[1] = (U1 - ua * U0) * inv;
    k.T[0] = (ub * T0 - T1) * inv;
    k.T[1] = (T1 - ua * T0) * inv;
    return k;
}

}  // namespace kernel

// ---------------------------------------------------------------- Laplace

LaplaceSolver::LaplaceSolver(BoundarySystem system) : system_(std::move(system)) {
    const auto& segs = system_.segments;
    const int n = static_cast<int>(segs.size());
    if (static_cast<int>(system_.kind.size()) != n) {
        throw BemError("laplace: kind list does not match the segments");
    }
    if (system_.partner.size() != segs.size()) {
        system_.partner.assign(n, -1);
    }
    unknown_psi_.assign(n, -1);
    unknown_q_.assign(n, -1);
    int count = 0;
    bool any_dirichlet = false;
    bool all_dirichlet = true;
    for (int k = 0; k < n; ++k) {
        switch (system_.kind[k]) {
            case LaplaceKind::dirichlet:
                unknown_q_[k] = count++;
                any_dirichlet = true;
                break;
            case LaplaceKind::periodic_minus:
                unknown_psi_[k] = count++;
                unknown_q_[k] = count++;
                all_dirichlet = false;
                break;
            case LaplaceKind::periodic_plus: {
                const int p = system_.partner[k];
                if (p < 0 || p >= n || system_.kind[p] != LaplaceKind::periodic_minus) {
                    throw BemError("laplace: periodic segment " + std::to_string(k) +
                                   " has no valid partner");
                }
                all_dirichlet = false;
                break;
            }
        }
    }
    pure_dirichlet_ = all_dirichlet;
    const bool gauge = pure_dirichlet_ || !any_dirichlet;
    has_gauge_ = gauge;
    n_unknowns_ = count + (gauge ? 1 : 0);

    S_.resize(n, n);
    D_.resize(n, n);
    for (int i = 0; i < n; ++i) {
        const Vec2 xi = segs[i].midpoint();
        for (int k = 0; k < n; ++k) {
            S_(i, k) = kernel::log_integral(segs[k], xi) / two_pi;
            D_(i, k) = i == k ? 0.0 : kernel::double_layer(segs[k], xi) / two_pi;
        }
    }

    Matrix M = Matrix::Zero(n_unknowns_, n_unknowns_);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            const double dpsi = (i == k ? 0.5 : 0.0) - D_(i, k);
            const double dq = S_(i, k);
            switch (system_.kind[k]) {
                case LaplaceKind::dirichlet:
                    M(i, unknown_q_[k]) += dq;
                    break;
                case LaplaceKind::periodic_minus:
                    M(i, unknown_psi_[k]) += dpsi;
                    M(i, unknown_q_[k]) += dq;
                    break;
                case LaplaceKind::periodic_plus: {
                    const int p = system_.partner[k];
                    M(i, unknown_psi_[p]) += dpsi;
                    M(i, unknown_q_[p]) -= dq;
                    break;
                }
            }
        }
    }
    if (gauge) {
        const int g = n_unknowns_ - 1;
        for (int i = 0; i < n; ++i) {
            M(i, g) = 1.0;
        }
        // Closing row: zero mean of q (Dirichlet) or of psi (periodic).
        for (int k = 0; k < n; ++k) {
            const double L = segs[k].length();
            if (pure_dirichlet_) {
                M(g, unknown_q_[k]) = L;
            } else if (system_.kind[k] == LaplaceKind::periodic_minus) {
                M(g, unknown_psi_[k]) = L;
            }
        }
    }
    if (M.rows() != n + (gauge ? 1 : 0)) {
        throw BemError("laplace: constraint set does not give a square system");
    }
    lu_ = M.partialPivLu();
    const double rc = lu_.rcond();
    condition_ = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    if (!(rc > 1e-14)) {
        throw BemError("laplace: singular system (condition estimate " + std::to_string(condition_) +
                       ")");
    }
}

LaplaceSolution LaplaceSolver::solve(const LaplaceData& data) const {
    const auto& segs = system_.segments;
    const int n = static_cast<int>(segs.size());
    Vector rhs = Vector::Zero(n_unknowns_);
    for (int i = 0; i < n; ++i) {
        double r = 0.0;
        for (int k = 0; k < n; ++k) {
            const double dpsi = (i == k ? 0.5 : 0.0) - D_(i, k);
            switch (system_.kind[k]) {
                case LaplaceKind::dirichlet:
                    r -= dpsi * data.dirichlet[k];
                    break;
                case LaplaceKind::periodic_minus:
                    break;
                case LaplaceKind::periodic_plus:
                    r -= dpsi * data.jump_psi[k] + S_(i, k) * data.jump_q[k];
                    break;
            }
        }
        rhs[i] = r;
    }
    const Vector x = lu_.solve(rhs);
    LaplaceSolution sol;
    sol.psi.resize(n);
    sol.q.resize(n);
    for (int k = 0; k < n; ++k) {
        switch (system_.kind[k]) {
            case LaplaceKind::dirichlet:
                sol.psi[k] = data.dirichlet[k];
                sol.q[k] = x[unknown_q_[k]];
                break;
            case LaplaceKind::periodic_minus:
                sol.psi[k] = x[unknown_psi_[k]];
                sol.q[k] = x[unknown_q_[k]];
                break;
            case LaplaceKind::periodic_plus:
                break;
        }
    }
    for (int k = 0; k < n; ++k) {
        if (system_.kind[k] == LaplaceKind::periodic_plus) {
            const int p = system_.partner[k];
            sol.psi[k] = sol.psi[p] + data.jump_psi[k];
            sol.q[k] = -sol.q[p] + data.jump_q[k];
        }
    }
    sol.gauge = has_gauge_ ? x[n_unknowns_ - 1] : 0.0;
    return sol;
}

double LaplaceSolver::evaluate(const LaplaceSolution& sol, const Vec2& x) const {
    double v = 0.0;
    const auto& segs = system_.segments;
    for (std::size_t k = 0; k < segs.size(); ++k) {
        v += (kernel::double_layer(segs[k], x) * sol.psi[k] - kernel::log_integral(segs[k], x) * sol.q[k]) /
             two_pi;
    }
    return v - sol.gauge;
}

LaplaceSolution solve_laplace(const BoundarySystem& system, const LaplaceData& data) {
    return LaplaceSolver(system).solve(data);
}

BoundarySystem periodic_cell_system(const Mat2& A, int n_side) {
    const Mat2 F = Mat2::Identity() + A;
    Polygon square;
    for (int k = 0; k < n_side; ++k) square.emplace_back(-0.5 + double(k) / n_side, -0.5);
    for (int k = 0; k < n_side; ++k) square.emplace_back(0.5, -0.5 + double(k) / n_side);
    for (int k = 0; k < n_side; ++k) square.emplace_back(0.5 - double(k) / n_side, 0.5);
    for (int k = 0; k < n_side; ++k) square.emplace_back(-0.5, 0.5 - double(k) / n_side);
    for (auto& p : square) {
        p = F * p;
    }
    BoundarySystem sys;
    sys.segments = polygon_segments(square);
    const int n = static_cast<int>(sys.segments.size());
    sys.kind.resize(n);
    sys.partner.assign(n, -1);
    for (int k = 0; k < n; ++k) {
        const int side = k / n_side;
        sys.kind[k] = (side == 0 || side == 3) ? LaplaceKind::periodic_minus : LaplaceKind::periodic_plus;
    }
    // Right side pairs with the left one (shift F e1), top with bottom (shift F e2).
    for (int k = 0; k < n; ++k) {
        const int side = k / n_side;
        if (side == 1 || side == 2) {
            const Vec2 shift = side == 1 ? Vec2(F.col(0)) : Vec2(F.col(1));
            const int other = side == 1 ? 3 : 0;
            const Vec2 target = sys.segments[k].midpoint() - shift;
            for (int j = other * n_side; j < (other + 1) * n_side; ++j) {
                if ((sys.segments[j].midpoint() - target).norm() < 1e-9) {
                    sys.partner[k] = j;
                    break;
                }
            }
            if (sys.partner[k] < 0) {
                throw BemError("laplace: periodic partner not found");
            }
        }
    }
    return sys;
}

// ---------------------------------------------------------------- Elasticity

ElasticityBem::ElasticityBem(const Polygon& particle, const Polygon& cell, double lambda, double mu) {
    const double nu = lambda / (2.0 * (lambda + mu));
    const auto psegs = polygon_segments(particle, true);
    const auto csegs = polygon_segments(cell, false);
    const int np_seg = static_cast<int>(psegs.size());
    const int nc_seg = static_cast<int>(csegs.size());
    if (nc_seg % 4 != 0) {
        throw BemError("elasticity: cell sides need equal segment counts");
    }
    const int m = nc_seg / 4;

    std::vector<Segment> segs = psegs;
    segs.insert(segs.end(), csegs.begin(), csegs.end());
    const int nseg = static_cast<int>(segs.size());
    const int N = 2 * nseg;
    n_particle_nodes_ = 2 * np_seg;

    all_nodes_.resize(N);
    all_weights_.resize(N);
    for (int k = 0; k < nseg; ++k) {
        all_nodes_[2 * k] = segs[k].at(kernel::gauss_lo);
        all_nodes_[2 * k + 1] = segs[k].at(kernel::gauss_hi);
        all_weights_[2 * k] = all_weights_[2 * k + 1] = 0.5 * segs[k].length();
    }
    particle_nodes_.assign(all_nodes_.begin(), all_nodes_.begin() + n_particle_nodes_);

    // Cell sides: 0 bottom, 1 right, 2 top, 3 left. Bottom and left carry unknowns.
    node_partner_.assign(N, -1);
    node_shift_.assign(N, Vec2::Zero());
    minus_index_.assign(N, -1);
    std::vector<int> side_of(N, -1);
    int n_minus = 0;
    for (int k = np_seg; k < nseg; ++k) {
        const int side = (k - np_seg) / m;
        for (int a = 0; a < 2; ++a) {
            side_of[2 * k + a] = side;
            if (side == 0 || side == 3) {
                minus_index_[2 * k + a] = n_minus++;
            }
        }
    }
    for (int i = n_particle_nodes_; i < N; ++i) {
        const int side = side_of[i];
        if (side == 1 || side == 2) {
            const Vec2 shift = side == 1 ? Vec2(1.0, 0.0) : Vec2(0.0, 1.0);
            const int other = side == 1 ? 3 : 0;
            for (int j = n_particle_nodes_; j < N; ++j) {
                if (side_of[j] == other && (all_nodes_[j] + shift - all_nodes_[i]).norm() < 1e-9) {
                    node_partner_[i] = j;
                    node_shift_[i] = shift;
                    break;
                }
            }
            if (node_partner_[i] < 0) {
                throw BemError("elasticity: periodic partner not found");
            }
        }
    }

    const int nt = n_particle_nodes_;
    const int n_unknowns = 2 * nt + 4 * n_minus;
    const int nw = 2 * nt + 3;
    auto col_tp = [&](int node) { return 2 * node; };
    auto col_um = [&](int node) { return 2 * nt + 2 * minus_index_[node]; };
    auto col_tm = [&](int node) { return 2 * nt + 2 * n_minus + 2 * minus_index_[node]; };
    // A e as a 2x3 map of (A11, A22, A12).
    auto lattice_map = [](const Vec2& e) {
        Eigen::Matrix<double, 2, 3> E = Eigen::Matrix<double, 2, 3>::Zero();
        if (e.x() != 0.0) {
            E(0, 0) = 1.0;
            E(1, 2) = 1.0;
        } else {
            E(0, 2) = 1.0;
            E(1, 1) = 1.0;
        }
        return E;
    };

    Matrix M = Matrix::Zero(n_unknowns, n_unknowns);
    Matrix R = Matrix::Zero(n_unknowns, nw);
    if (2 * N != n_unknowns) {
        throw BemError("elasticity: incompatible constraint set");
    }
    for (int i = 0; i < N; ++i) {
        const Vec2 xi = all_nodes_[i];
        const int row = 2 * i;
        // Free term.
        if (i < nt) {
            R.block<2, 2>(row, 2 * i) -= 0.5 * Mat2::Identity();
        } else if (minus_index_[i] >= 0) {
            M.block<2, 2>(row, col_um(i)) += 0.5 * Mat2::Identity();
        } else {
            const int p = node_partner_[i];
            M.block<2, 2>(row, col_um(p)) += 0.5 * Mat2::Identity();
            R.block<2, 3>(row, 2 * nt) -= 0.5 * lattice_map(node_shift_[i]);
        }
        for (int k = 0; k < nseg; ++k) {
            const auto blk = kernel::kelvin(segs[k], xi, mu, nu, i / 2 == k);
            for (int a = 0; a < 2; ++a) {
                const int j = 2 * k + a;
                const Mat2& H = blk.T[a];
                const Mat2& G = blk.U[a];
                if (j < nt) {
                    R.block<2, 2>(row, 2 * j) -= H;
                    M.block<2, 2>(row, col_tp(j)) -= G;
                } else if (minus_index_[j] >= 0) {
                    M.block<2, 2>(row, col_um(j)) += H;
                    M.block<2, 2>(row, col_tm(j)) -= G;
                } else {
                    const int p = node_partner_[j];
                    M.block<2, 2>(row, col_um(p)) += H;
                    R.block<2, 3>(row, 2 * nt) -= H * lattice_map(node_shift_[j]);
                    M.block<2, 2>(row, col_tm(p)) += G;
                }
            }
        }
    }
    Eigen::PartialPivLU<Matrix> lu(M);
    const double rc = lu.rcond();
    if (!(rc > 1e-14)) {
        throw BemError("elasticity: singular system (condition estimate " +
                       std::to_string(rc > 0 ? 1.0 / rc : INFINITY) + ")");
    }
    S_ = lu.solve(R);

    // Energy: 1/2 sum_particle w g.t - 1/2 sum_minus w (A e).t_minus.
    Matrix P = Matrix::Zero(nw, n_unknowns);
    for (int j = 0; j < nt; ++j) {
        P.block<2, 2>(2 * j, col_tp(j)) += all_weights_[j] * Mat2::Identity();
    }
    for (int i = nt; i < N; ++i) {
        if (node_partner_[i] >= 0) {
            const int p = node_partner_[i];
            P.block<3, 2>(2 * nt, col_tm(p)) -= all_weights_[p] * lattice_map(node_shift_[i]).transpose();
        }
    }
    const Matrix K = P * S_;
    K_ = 0.5 * (K + K.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(K_, Eigen::EigenvaluesOnly);
    min_eig_ = es.eigenvalues()[0];
}

ElasticSolution ElasticityBem::solve(const std::vector<Vec2>& g, const Mat2& A) const {
    const int nt = n_particle_nodes_;
    if (static_cast<int>(g.size()) != nt) {
        throw BemError("elasticity: expected one displacement per particle node");
    }
    Vector w(2 * nt + 3);
    for (int j = 0; j < nt; ++j) {
        w.segment<2>(2 * j) = g[j];
    }
    w[2 * nt] = A(0, 0);
    w[2 * nt + 1] = A(1, 1);
    w[2 * nt + 2] = 0.5 * (A(0, 1) + A(1, 0));
    const Vector x = S_ * w;
    const int N = static_cast<int>(all_nodes_.size());
    int n_minus = 0;
    for (int i = 0; i < N; ++i) {
        n_minus += minus_index_[i] >= 0 ? 1 : 0;
    }
    ElasticSolution sol;
    sol.nodes = all_nodes_;
    sol.weights = all_weights_;
    sol.n_particle_nodes = nt;
    sol.u.resize(N);
    sol.t.resize(N);
    for (int i = 0; i < N; ++i) {
        if (i < nt) {
            sol.u[i] = g[i];
            sol.t[i] = x.segment<2>(2 * i);
        } else if (minus_index_[i] >= 0) {
            sol.u[i] = x.segment<2>(2 * nt + 2 * minus_index_[i]);
            sol.t[i] = x.segment<2>(2 * nt + 2 * n_minus + 2 * minus_index_[i]);
        }
    }
    const Mat2 As = 0.5 * (A + A.transpose());
    for (int i = nt; i < N; ++i) {
        if (node_partner_[i] >= 0) {
            const int p = node_partner_[i];
            sol.u[i] = sol.u[p] + As * node_shift_[i];
            sol.t[i] = -sol.t[p];
        }
    }
    return sol;
}

double ElasticityBem::energy(const std::vector<Vec2>& g, const Mat2& A) const {
    const int nt = n_particle_nodes_;
    Vector w(2 * nt + 3);
    for (int j = 0; j < nt; ++j) {
        w.segment<2>(2 * j) = g[j];
    }
    w[2 * nt] = A(0, 0);
    w[2 * nt + 1] = A(1, 1);
    w[2 * nt + 2] = 0.5 * (A(0, 1) + A(1, 0));
    return 0.5 * w.dot(K_ * w);
}

double boundary_energy(const ElasticSolution& sol) {
    double e = 0.0;
    for (std::size_t i = 0; i < sol.nodes.size(); ++i) {
        e += sol.weights[i] * sol.u[i].dot(sol.t[i]);
    }
    return 0.5 * e;
}

// ---------------------------------------------------------------- single layer

namespace {

// Integral over segment `outer` of the log integral over `inner`, with the
// outer rule refined towards a shared endpoint at parameter `singular_end`.
double outer_log_integral(const Segment& outer, const Segment& inner, int singular_end, int npts) {
    const double L = outer.length();
    double sum = 0.0;
    if (singular_end < 0) {
        const Rule& r = rule(npts);
        for (std::size_t q = 0; q < r.x.size(); ++q) {
            sum += r.w[q] * kernel::log_integral(inner, outer.at(r.x[q]));
        }
        return sum * L;
    }
    // Geometric grading towards the shared vertex.
    const Rule& r = rule(8);
    double lo = 0.0;
    double hi = 1.0 / 64.0;
    const auto add = [&](double a, double b) {
        for (std::size_t q = 0; q < r.x.size(); ++q) {
            double s = a + (b - a) * r.x[q];
            if (singular_end == 1) {
                s = 1.0 - s;
            }
            sum += r.w[q] * (b - a) * kernel::log_integral(inner, outer.at(s));
        }
    };
    // Innermost piece [0, 1/64] integrated with the same rule: the integrand is
    // continuous there, only its derivative is singular.
    add(0.0, hi);
    lo = hi;
    while (lo < 1.0) {
        hi = std::min(1.0, 2.0 * lo);
        add(lo, hi);
        lo = hi;
    }
    return sum * L;
}

// Quintic smoothstep: 0 below a, 1 above b, C2 in between.
double smoothstep(double x, double a, double b) {
    const double u = std::clamp((x - a) / (b - a), 0.0, 1.0);
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

double blended_log_integral(const Segment& si, const Segment& sj, double r) {
    struct Band {
        double lo;
        double hi;
        int coarse;
        int fine;
    };
    static const Band bands[] = {{4.5, 6.0, 2, 4}, {2.0, 2.5, 4, 8}, {0.7, 1.0, 8, 16}};
    for (const auto& b : bands) {
        if (r >= b.hi) {
            return outer_log_integral(si, sj, -1, b.coarse);
        }
        if (r > b.lo) {
            const double w = smoothstep(r, b.lo, b.hi);
            return w * outer_log_integral(si, sj, -1, b.coarse) +
                   (1.0 - w) * outer_log_integral(si, sj, -1, b.fine);
        }
    }
    return outer_log_integral(si, sj, -1, 16);
}

}  // namespace

Matrix single_layer_matrix(const std::vector<Segment>& segments) {
    const int n = static_cast<int>(segments.size());
    Matrix G = Matrix::Zero(n, n);
    std::vector<double> len(n);
    for (int i = 0; i < n; ++i) {
        len[i] = segments[i].length();
    }
    for (int i = 0; i < n; ++i) {
        if (len[i] <= 1e-15) {
            continue;
        }
        G(i, i) = -len[i] * len[i] * (std::log(len[i]) - 1.5) / two_pi;
        for (int j = i + 1; j < n; ++j) {
            if (len[j] <= 1e-15) {
                continue;
            }
            const Segment& si = segments[i];
            const Segment& sj = segments[j];
            const double tol = 1e-12;
            int shared = -1;
            if ((si.a - sj.a).norm() < tol || (si.a - sj.b).norm() < tol) {
                shared = 0;
            } else if ((si.b - sj.a).norm() < tol || (si.b - sj.b).norm() < tol) {
                shared = 1;
            }
            double v = 0.0;
            if (shared >= 0) {
                v = outer_log_integral(si, sj, shared, 8);
            } else {
                // Rule chosen from the separation, blended smoothly between bands
                // so that entries stay smooth functions of the vertex positions.
                const double r = (si.midpoint() - sj.midpoint()).norm() / (0.5 * (len[i] + len[j]));
                v = blended_log_integral(si, sj, r);
            }
            G(i, j) = G(j, i) = -v / two_pi;
        }
    }
    return G;
}

double single_layer_interaction(const std::vector<Segment>& segments, const Vector& density) {
    const Matrix G = single_layer_matrix(segments);
    return 0.5 * density.dot(G * density);
}

}  // namespace msm
