#include "msm/geometry.hpp"

#include <cmath>
#include <numbers>

namespace msm {

double signed_area(const Polygon& poly) {
    const std::size_t n = poly.size();
    if (n < 3) {
        return 0.0;
    }
    double a = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
}

double perimeter(const Polygon& poly) {
    double l = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        l += (poly[(i + 1) % poly.size()] - poly[i]).norm();
    }
    return l;
}

Polygon clip_half_plane(const Polygon& poly, const Vec2& n, double offset, double side) {
    Polygon out;
    const std::size_t m = poly.size();
    if (m == 0) {
        return out;
    }
    out.reserve(m + 2);
    for (std::size_t i = 0; i < m; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % m];
        const double dp = side * (p.dot(n) - offset);
        const double dq = side * (q.dot(n) - offset);
        if (dp >= 0.0) {
            out.push_back(p);
        }
        if ((dp >= 0.0) != (dq >= 0.0)) {
            const double w = dp / (dp - dq);
            out.push_back(p + w * (q - p));
        }
    }
    if (out.size() < 3) {
        out.clear();
    }
    return out;
}

Polygon regular_polygon(const Vec2& center, double radius, int n, double phase) {
    Polygon poly(n);
    for (int k = 0; k < n; ++k) {
        const double a = phase + 2.0 * std::numbers::pi * k / n;
        poly[k] = center + radius * Vec2(std::cos(a), std::sin(a));
    }
    return poly;
}

Mat2 rotation(double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    Mat2 r;
    r << c, -s, s, c;
    return r;
}

Vec2 TwinLine::normal() const { return Vec2(std::cos(angle), std::sin(angle)); }
Vec2 TwinLine::tangent() const { return Vec2(-std::sin(angle), std::cos(angle)); }
double TwinLine::signed_distance(const Vec2& x) const { return x.dot(normal()) - offset; }

Vec2 State::magnetization(int side) const {
    return Vec2(std::cos(mag_angle[side]), std::sin(mag_angle[side]));
}

Mat2 State::gradient(int side) const {
    const Vec2 n = twin.normal();
    const Vec2 t = twin.tangent();
    const double gamma = side == side_plus ? kin[kin_gamma_plus] : kin[kin_gamma_minus];
    const double beta = side == side_plus ? kin[kin_beta_plus] : kin[kin_beta_minus];
    const Mat2 J = t * n.transpose() - n * t.transpose();
    return A + kin[kin_omega] * J + kin[kin_ett] * t * t.transpose() +
           (gamma * t + beta * n) * n.transpose();
}

Vec2 State::affine_shift(int side) const {
    const double gamma = side == side_plus ? kin[kin_gamma_plus] : kin[kin_gamma_minus];
    const double beta = side == side_plus ? kin[kin_beta_plus] : kin[kin_beta_minus];
    return -twin.offset * (gamma * twin.tangent() + beta * twin.normal());
}

namespace {

Vec2 smooth_part(const State& s, const Vec2& x) {
    const Vec2 n = s.twin.normal();
    const Vec2 t = s.twin.tangent();
    const Vec2 c(s.kin[kin_cx], s.kin[kin_cy]);
    const Vec2 rot = s.kin[kin_omega] * (t * n.dot(x) - n * t.dot(x));
    return s.A * x + c + rot + s.kin[kin_ett] * t.dot(x) * t;
}

void side_vectors(const State& s, Vec2& a_plus, Vec2& a_minus) {
    const Vec2 n = s.twin.normal();
    const Vec2 t = s.twin.tangent();
    a_plus = s.kin[kin_gamma_plus] * t + s.kin[kin_beta_plus] * n;
    a_minus = s.kin[kin_gamma_minus] * t + s.kin[kin_beta_minus] * n;
}

}  // namespace

Vec2 particle_displacement(const State& state, const Vec2& x) {
    Vec2 ap, am;
    side_vectors(state, ap, am);
    const double d = state.twin.signed_distance(x);
    return smooth_part(state, x) + (d > 0.0 ? ap : am) * d;
}

Vec2 regularized_boundary_displacement(const State& state, const Vec2& x, double delta) {
    Vec2 ap, am;
    side_vectors(state, ap, am);
    const double d = state.twin.signed_distance(x);
    const double dist = std::sqrt(d * d + delta * delta) - delta;
    return smooth_part(state, x) + 0.5 * (ap + am) * d + 0.5 * (ap - am) * dist;
}

CellMesh discretize_cell(const SimulationConfig& config, const TwinLine& twin) {
    CellMesh mesh;
    const int n = config.solver.n_boundary_segments;
    mesh.radius = config.geometry.particle_radius;
    mesh.n_segments = n;
    mesh.n_side = n / 4;
    mesh.particle = regular_polygon(Vec2::Zero(), mesh.radius, n);
    mesh.h = 2.0 * mesh.radius * std::sin(std::numbers::pi / n);
    mesh.delta = config.solver.delta_over_h * mesh.h;
    mesh.n_chord = static_cast<int>(std::ceil(2.0 * mesh.radius / mesh.h - 1e-12));

    const int m = mesh.n_side;
    mesh.cell.reserve(4 * m);
    for (int k = 0; k < m; ++k) {
        mesh.cell.emplace_back(-0.5 + static_cast<double>(k) / m, -0.5);
    }
    for (int k = 0; k < m; ++k) {
        mesh.cell.emplace_back(0.5, -0.5 + static_cast<double>(k) / m);
    }
    for (int k = 0; k < m; ++k) {
        mesh.cell.emplace_back(0.5 - static_cast<double>(k) / m, 0.5);
    }
    for (int k = 0; k < m; ++k) {
        mesh.cell.emplace_back(-0.5, 0.5 - static_cast<double>(k) / m);
    }
    mesh.chord = twin_chord(mesh, twin);
    return mesh;
}

CellMesh discretize_cell(const SimulationConfig& config) {
    return discretize_cell(config, initial_state(config).twin);
}

std::vector<Vec2> twin_chord(const CellMesh& mesh, const TwinLine& twin) {
    const Vec2 n = twin.normal();
    const Vec2 t = twin.tangent();
    double lo = 0.0;
    double hi = 0.0;
    bool hit = false;
    const std::size_t m = mesh.particle.size();
    for (std::size_t i = 0; i < m; ++i) {
        const Vec2& p = mesh.particle[i];
        const Vec2& q = mesh.particle[(i + 1) % m];
        const double dp = p.dot(n) - twin.offset;
        const double dq = q.dot(n) - twin.offset;
        if ((dp >= 0.0) != (dq >= 0.0)) {
            const Vec2 x = p + dp / (dp - dq) * (q - p);
            const double s = x.dot(t);
            if (!hit) {
                lo = hi = s;
                hit = true;
            } else {
                lo = std::min(lo, s);
                hi = std::max(hi, s);
            }
        }
    }
    std::vector<Vec2> chord;
    if (!hit || hi - lo <= 0.0) {
        return chord;
    }
    const Vec2 base = twin.offset * n;
    chord.reserve(mesh.n_chord + 1);
    for (int k = 0; k <= mesh.n_chord; ++k) {
        const double s = lo + (hi - lo) * k / mesh.n_chord;
        chord.push_back(base + s * t);
    }
    return chord;
}

TwinPartition twin_partition(const CellMesh& mesh, const TwinLine& twin) {
    TwinPartition part;
    const Vec2 n = twin.normal();
    part.plus = clip_half_plane(mesh.particle, n, twin.offset, 1.0);
    part.minus = clip_half_plane(mesh.particle, n, twin.offset, -1.0);
    part.area_plus = signed_area(part.plus);
    part.area_minus = signed_area(part.minus);
    return part;
}

double phase_one_area(const State& state, const CellMesh& mesh) {
    const auto part = twin_partition(mesh, state.twin);
    return state.plus_phase == 1 ? part.area_plus : part.area_minus;
}

double volume_fraction(const State& state, const CellMesh& mesh) {
    const auto part = twin_partition(mesh, state.twin);
    const double total = part.area_plus + part.area_minus;
    return (state.plus_phase == 1 ? part.area_plus : part.area_minus) / total;
}

Mat2 eigenstrain(int phase, const MaterialParams& material, ReferencePhase reference) {
    const double e = material.eps0;
    Mat2 e1;
    e1 << -e, 0.0, 0.0, e;
    if (reference == ReferencePhase::martensite) {
        return phase == 1 ? Mat2(2.0 * e1) : Mat2(Mat2::Zero());
    }
    return phase == 1 ? e1 : Mat2(-e1);
}

State initial_state(const SimulationConfig& config) {
    State s;
    const double q = config.geometry.lattice_angle;
    s.twin.angle = std::numbers::pi / 4.0 + q;
    s.twin.offset = config.solver.initial_offset;
    s.plus_phase = 1;

    const Mat2 Q = rotation(q);
    const Vec2 n = s.twin.normal();
    const Vec2 t = s.twin.tangent();
    double ett = 0.0;
    for (int side : {side_plus, side_minus}) {
        const Mat2 eps = Q * eigenstrain(s.phase(side), config.material,
                                         config.geometry.reference_phase) *
                         Q.transpose();
        const double gamma = 2.0 * t.dot(eps * n);
        const double beta = n.dot(eps * n);
        s.kin[side == side_plus ? kin_gamma_plus : kin_gamma_minus] = gamma;
        s.kin[side == side_plus ? kin_beta_plus : kin_beta_minus] = beta;
        ett += 0.5 * t.dot(eps * t);
    }
    s.kin[kin_ett] = ett;
    // Easy axes: lattice x for phase 1, lattice y for phase 2.
    s.mag_angle[side_plus] = q + (s.phase(side_plus) == 1 ? 0.0 : std::numbers::pi / 2.0);
    s.mag_angle[side_minus] = q + (s.phase(side_minus) == 1 ? 0.0 : std::numbers::pi / 2.0);
    return s;
}

}  // namespace msm
