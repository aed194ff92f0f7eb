#include "msm/energy.hpp"

#include <cmath>
#include <numbers>

namespace msm {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

Mat2 sym(const Mat2& m) { return 0.5 * (m + m.transpose()); }

// Nearest rotation to I + skew(G).
Mat2 lattice_rotation(const Mat2& G) { return rotation(std::atan(0.5 * (G(1, 0) - G(0, 1)))); }

}  // namespace

// ---------------------------------------------------------------- layout

DofLayout::DofLayout(bool free_angle, bool free_macro_strain) {
    int i = 1;
    phase_.push_back(0);
    if (free_angle) {
        angle_ = i++;
        phase_.push_back(angle_);
    }
    kin_ = i;
    i += kin_count;
    mag_ = i;
    i += 2;
    if (free_macro_strain) {
        macro_ = i;
        i += 3;
    }
    size_ = i;
}

std::string DofLayout::name(int i) const {
    static const char* kin_names[] = {"c_x",    "c_y",    "omega", "e_tt",
                                      "gamma+", "gamma-", "beta+", "beta-"};
    if (i == 0) return "offset";
    if (i == angle_) return "angle";
    if (i >= kin_ && i < kin_ + kin_count) return kin_names[i - kin_];
    if (i == mag_) return "theta+";
    if (i == mag_ + 1) return "theta-";
    if (macro_ >= 0 && i >= macro_ && i < macro_ + 3) {
        static const char* a_names[] = {"A11", "A22", "A12"};
        return a_names[i - macro_];
    }
    return "?";
}

Vector DofLayout::pack(const State& s) const {
    Vector z(size_);
    z[0] = s.twin.offset;
    if (angle_ >= 0) z[angle_] = s.twin.angle;
    z.segment<kin_count>(kin_) = s.kin;
    z[mag_] = s.mag_angle[side_plus];
    z[mag_ + 1] = s.mag_angle[side_minus];
    if (macro_ >= 0) {
        z[macro_] = s.A(0, 0);
        z[macro_ + 1] = s.A(1, 1);
        z[macro_ + 2] = s.A(0, 1);
    }
    return z;
}

State DofLayout::unpack(const Vector& z, const State& base) const {
    State s = base;
    s.twin.offset = z[0];
    if (angle_ >= 0) s.twin.angle = z[angle_];
    s.kin = z.segment<kin_count>(kin_);
    s.mag_angle[side_plus] = z[mag_];
    s.mag_angle[side_minus] = z[mag_ + 1];
    if (macro_ >= 0) {
        s.A << z[macro_], z[macro_ + 2], z[macro_ + 2], z[macro_ + 1];
    }
    return s;
}

// ---------------------------------------------------------------- magnetic curves

int arc_segments(const CellMesh& mesh) { return mesh.n_segments / 2; }

MagneticCurves magnetic_curves(const State& state, const CellMesh& mesh) {
    const double R = mesh.radius;
    const double d = state.twin.offset;
    const Vec2 n = state.twin.normal();
    const Vec2 t = state.twin.tangent();
    const int na = arc_segments(mesh);

    Mat2 F[2];
    Vec2 b[2];
    for (int side : {side_plus, side_minus}) {
        F[side] = Mat2::Identity() + state.gradient(side);
        b[side] = state.affine_shift(side);
    }
    auto on_circle = [&](double psi) { return R * (std::cos(psi) * n + std::sin(psi) * t); };

    std::vector<Segment> segs;
    std::vector<Eigen::Vector4d> rows;
    auto add = [&](const Vec2& p, const Vec2& q, int kind) {
        const Segment s{p, q};
        if (s.length() <= 1e-14) {
            return;
        }
        const Vec2 nu = s.normal();
        Eigen::Vector4d r = Eigen::Vector4d::Zero();
        if (kind == side_plus) {
            r << nu.x(), nu.y(), 0.0, 0.0;
        } else if (kind == side_minus) {
            r << 0.0, 0.0, nu.x(), nu.y();
        } else {
            r << -nu.x(), -nu.y(), nu.x(), nu.y();
        }
        segs.push_back(s);
        rows.push_back(r);
    };
    auto add_arc = [&](int side, double psi0, double psi1) {
        Vec2 prev = F[side] * on_circle(psi0) + b[side];
        for (int k = 1; k <= na; ++k) {
            const Vec2 next = F[side] * on_circle(psi0 + (psi1 - psi0) * k / na) + b[side];
            add(prev, next, side);
            prev = next;
        }
    };

    if (std::abs(d) < R) {
        const double alpha = std::atan2(std::sqrt(R * R - d * d), d);
        add_arc(side_plus, -alpha, alpha);
        add_arc(side_minus, alpha, two_pi - alpha);
        // Chord along t, normal n pointing into the plus twin.
        const Vec2 ta = on_circle(-alpha);
        const Vec2 tb = on_circle(alpha);
        Vec2 prev = F[side_plus] * ta + b[side_plus];
        for (int k = 1; k <= mesh.n_chord; ++k) {
            const Vec2 x = ta + (tb - ta) * (static_cast<double>(k) / mesh.n_chord);
            const Vec2 next = F[side_plus] * x + b[side_plus];
            add(prev, next, -1);
            prev = next;
        }
    } else {
        add_arc(d < 0.0 ? side_plus : side_minus, 0.0, two_pi);
    }

    MagneticCurves c;
    c.segments = std::move(segs);
    c.basis.resize(static_cast<Eigen::Index>(rows.size()), 4);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        c.basis.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    return c;
}

Vec2 effective_field(const Vec2& H, const Vec2& mean_magnetization, Workpiece workpiece,
                     const MaterialParams& material) {
    switch (workpiece) {
        case Workpiece::none:
            return H;
        case Workpiece::circular:
            return H - disk_demag_factor * (material.Ms2_over_mu0 / material.Ms_over_mu0) *
                           mean_magnetization;
    }
    throw std::invalid_argument("effective_field: unsupported workpiece");
}

double particle_energy_density(const Mat2& e, const MaterialParams& m) {
    const double tr = e.trace();
    const double e12 = 0.5 * (e(0, 1) + e(1, 0));
    return 0.5 * m.C11 * tr * tr + (m.C12 - m.C11) * e(0, 0) * e(1, 1) + 2.0 * m.C44 * e12 * e12;
}

// ---------------------------------------------------------------- model

struct EnergyModel::PeriodicOperator {
    BoundarySystem system;
    std::unique_ptr<LaplaceSolver> solver;
};

EnergyModel::EnergyModel(const SimulationConfig& config)
    : config_(config),
      mesh_(discretize_cell(config)),
      layout_(config.solver.free_twin_angle, config.solver.free_macro_strain) {
    config_.material.update_lame();
    bem_ = std::make_unique<ElasticityBem>(mesh_.particle, mesh_.cell, config_.material.lambda_poly,
                                           config_.material.mu_poly);
    nodes_ = bem_->particle_nodes();
    const auto segs = polygon_segments(mesh_.particle, true);
    node_weights_.resize(nodes_.size());
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
        node_weights_[j] = 0.5 * segs[j / 2].length();
    }
}

EnergyModel::~EnergyModel() = default;

void EnergyModel::set_periodic_demag(bool on) {
    if (on != periodic_demag_) {
        periodic_demag_ = on;
        demag_cache_.clear();
    }
}

double EnergyModel::particle_elastic_energy(const State& s) const {
    const auto part = twin_partition(mesh_, s.twin);
    const Mat2 Q = rotation(config_.geometry.lattice_angle);
    double e = 0.0;
    for (int side : {side_plus, side_minus}) {
        const double area = side == side_plus ? part.area_plus : part.area_minus;
        if (area <= 0.0) {
            continue;
        }
        const Mat2 eps = Q.transpose() * sym(s.gradient(side)) * Q -
                         eigenstrain(s.phase(side), config_.material, config_.geometry.reference_phase);
        e += area * particle_energy_density(eps, config_.material);
    }
    return e;
}

double EnergyModel::matrix_elastic_energy(const State& s) const {
    const int n = static_cast<int>(nodes_.size());
    Vector w(2 * n + 3);
    Vec2 mean = Vec2::Zero();
    double wsum = 0.0;
    for (int j = 0; j < n; ++j) {
        const Vec2 g = regularized_boundary_displacement(s, nodes_[j], mesh_.delta);
        w.segment<2>(2 * j) = g;
        mean += node_weights_[j] * g;
        wsum += node_weights_[j];
    }
    // Rigid translations of particle and matrix together cost nothing.
    mean /= wsum;
    for (int j = 0; j < n; ++j) {
        w.segment<2>(2 * j) -= mean;
    }
    w[2 * n] = s.A(0, 0);
    w[2 * n + 1] = s.A(1, 1);
    w[2 * n + 2] = 0.5 * (s.A(0, 1) + s.A(1, 0));
    return 0.5 * w.dot(bem_->energy_form() * w);
}

Vec2 EnergyModel::deformed_areas(const State& s) const {
    const auto part = twin_partition(mesh_, s.twin);
    // Linearized Jacobian 1 + tr(grad v): infinitesimal rotations keep the area.
    return Vec2(part.area_plus * (1.0 + s.gradient(side_plus).trace()),
                part.area_minus * (1.0 + s.gradient(side_minus).trace()));
}

Vec2 EnergyModel::moment(const State& s) const {
    const Vec2 a = deformed_areas(s);
    return a[0] * s.magnetization(side_plus) + a[1] * s.magnetization(side_minus);
}

double EnergyModel::cell_area(const State& s) const { return (Mat2::Identity() + s.A).determinant(); }

Vec2 EnergyModel::mean_particle_magnetization(const State& s) const {
    const Vec2 a = deformed_areas(s);
    return moment(s) / (a[0] + a[1]);
}

Vec2 EnergyModel::effective_field(double t, const State& s) const {
    return msm::effective_field(field(t), moment(s) / cell_area(s), config_.geometry.workpiece,
                                config_.material);
}

double EnergyModel::zeeman_energy(const State& s, const Vec2& H) const {
    return -config_.material.Ms_over_mu0 * H.dot(moment(s));
}

double EnergyModel::anisotropy_energy(const State& s) const {
    const Vec2 a = deformed_areas(s);
    const Mat2 Q = rotation(config_.geometry.lattice_angle);
    double e = 0.0;
    for (int side : {side_plus, side_minus}) {
        if (a[side] == 0.0) {
            continue;
        }
        const Vec2 m = (lattice_rotation(s.gradient(side)) * Q).transpose() * s.magnetization(side);
        const double phi = s.phase(side) == 1 ? m.y() * m.y() : m.x() * m.x();
        e += a[side] * phi;
    }
    return config_.material.Ku * e;
}

const EnergyModel::PeriodicOperator& EnergyModel::periodic_operator(const Mat2& A) const {
    std::vector<double> key{A(0, 0), A(1, 1), A(0, 1)};
    auto it = laplace_cache_.find(key);
    if (it != laplace_cache_.end()) {
        return *it->second;
    }
    if (laplace_cache_.size() > 64) {
        laplace_cache_.clear();
    }
    auto op = std::make_unique<PeriodicOperator>();
    op->system = periodic_cell_system(A, 2 * mesh_.n_side);
    op->solver = std::make_unique<LaplaceSolver>(op->system);
    return *laplace_cache_.emplace(std::move(key), std::move(op)).first->second;
}

Mat4 EnergyModel::assemble_demag(const State& s) const {
    ++demag_builds_;
    const MagneticCurves curves = magnetic_curves(s, mesh_);
    const auto& segs = curves.segments;
    const int nc = static_cast<int>(segs.size());
    const Matrix G = single_layer_matrix(segs);
    const Matrix B = curves.basis;
    Mat4 Q = 0.5 * B.transpose() * G * B;

    if (periodic_demag_) {
        const PeriodicOperator& op = periodic_operator(s.A);
        const auto& cell = op.system.segments;
        const int ncell = static_cast<int>(cell.size());

        // psi_J and its gradient at the cell midpoints, per basis vector.
        Matrix psiJ = Matrix::Zero(ncell, 4);
        Matrix gx = Matrix::Zero(ncell, 4);
        Matrix gy = Matrix::Zero(ncell, 4);
        for (int k = 0; k < ncell; ++k) {
            const Vec2 y = cell[k].midpoint();
            for (int j = 0; j < nc; ++j) {
                Vec2 g;
                const double v = -kernel::log_integral(segs[j], y, g) / two_pi;
                g /= -two_pi;
                for (int b = 0; b < 4; ++b) {
                    const double sb = B(j, b);
                    if (sb != 0.0) {
                        psiJ(k, b) += v * sb;
                        gx(k, b) += g.x() * sb;
                        gy(k, b) += g.y() * sb;
                    }
                }
            }
        }

        // psi_P at the curve midpoints through the representation formula.
        Matrix Dm(nc, ncell);
        Matrix Sm(nc, ncell);
        for (int i = 0; i < nc; ++i) {
            const Vec2 x = segs[i].midpoint();
            for (int k = 0; k < ncell; ++k) {
                double dl = 0.0;
                Sm(i, k) = kernel::log_integral(cell[k], x, dl) / two_pi;
                Dm(i, k) = dl / two_pi;
            }
        }

        Vector lengths(nc);
        for (int i = 0; i < nc; ++i) {
            lengths[i] = segs[i].length();
        }
        Matrix psiP(nc, 4);
        for (int b = 0; b < 4; ++b) {
            LaplaceData data;
            data.jump_psi = Vector::Zero(ncell);
            data.jump_q = Vector::Zero(ncell);
            for (int k = 0; k < ncell; ++k) {
                if (op.system.kind[k] != LaplaceKind::periodic_plus) {
                    continue;
                }
                const int p = op.system.partner[k];
                const Vec2 nu_minus = cell[p].normal();
                data.jump_psi[k] = psiJ(p, b) - psiJ(k, b);
                data.jump_q[k] = -(nu_minus.x() * (gx(p, b) - gx(k, b)) + nu_minus.y() * (gy(p, b) - gy(k, b)));
            }
            const LaplaceSolution sol = op.solver->solve(data);
            psiP.col(b) = Dm * sol.psi - Sm * sol.q - Vector::Constant(nc, sol.gauge);
        }
        Q += 0.5 * B.transpose() * lengths.asDiagonal() * psiP;
    }
    return 0.5 * (Q + Q.transpose());
}

const Mat4& EnergyModel::demag_form(const State& s) const {
    std::vector<double> key;
    key.reserve(16);
    key.push_back(s.twin.offset);
    key.push_back(s.twin.angle);
    for (int k = kin_omega; k < kin_count; ++k) {
        key.push_back(s.kin[k]);
    }
    key.push_back(s.A(0, 0));
    key.push_back(s.A(1, 1));
    key.push_back(s.A(0, 1));
    auto it = demag_cache_.find(key);
    if (it != demag_cache_.end()) {
        return it->second;
    }
    if (demag_cache_.size() > 512) {
        demag_cache_.clear();
    }
    return demag_cache_.emplace(std::move(key), assemble_demag(s)).first->second;
}

double EnergyModel::demag_energy(const State& s) const { return demag_energy(s, demag_form(s)); }

double EnergyModel::demag_energy(const State& s, const Mat4& Q) const {
    Eigen::Vector4d m;
    m << s.magnetization(side_plus), s.magnetization(side_minus);
    double e = config_.material.Ms2_over_mu0 * m.dot(Q * m);
    if (config_.geometry.workpiece == Workpiece::circular) {
        const Vec2 M = moment(s);
        e += config_.material.Ms2_over_mu0 * 0.5 * disk_demag_factor * M.squaredNorm() / cell_area(s);
    }
    return e;
}

EnergyBreakdown EnergyModel::breakdown(double t, const State& s) const {
    EnergyBreakdown b;
    b.e_matrix = matrix_elastic_energy(s);
    b.e_particle = particle_elastic_energy(s);
    b.e_zeeman = zeeman_energy(s, field(t));
    b.e_demag = demag_energy(s);
    b.e_anis = anisotropy_energy(s);
    b.total = b.e_matrix + b.e_particle + b.e_zeeman + b.e_demag + b.e_anis;
    return b;
}

double EnergyModel::frozen_energy(double t, const State& s, const Mat4& Q) const {
    return matrix_elastic_energy(s) + particle_elastic_energy(s) + zeeman_energy(s, field(t)) +
           demag_energy(s, Q) + anisotropy_energy(s);
}

double EnergyModel::energy_increment(double t0, double t1, const State& s) const {
    return -config_.material.Ms_over_mu0 * (field(t1) - field(t0)).dot(moment(s));
}

Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& z, double h) {
    Vector g(z.size());
    for (int i = 0; i < z.size(); ++i) {
        Vector zp = z;
        Vector zm = z;
        zp[i] += h;
        zm[i] -= h;
        g[i] = (f(zp) - f(zm)) / (2.0 * h);
    }
    return g;
}

Vector EnergyModel::energy_gradient(double t, const State& s) const {
    return central_difference([&](const Vector& z) { return total_energy(t, layout_.unpack(z, s)); },
                              layout_.pack(s), config_.solver.fd_step);
}

}  // namespace msm
