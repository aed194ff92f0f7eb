#pragma once

#include "msm/config.hpp"

#include <array>
#include <vector>

namespace msm {

using Polygon = std::vector<Vec2>;

/// Shoelace area, positive for counterclockwise polygons.
double signed_area(const Polygon& poly);
double perimeter(const Polygon& poly);

/// Keeps the part of a convex polygon where side * (x.n - offset) >= 0.
Polygon clip_half_plane(const Polygon& poly, const Vec2& n, double offset, double side);

/// Counterclockwise regular polygon with the first vertex at angle `phase`.
Polygon regular_polygon(const Vec2& center, double radius, int n, double phase = 0.0);

/// Straight twin boundary {x : x.n = offset} with n = (cos angle, sin angle).
struct TwinLine {
    double angle = 0.0;
    double offset = 0.0;

    Vec2 normal() const;
    /// t = (-sin angle, cos angle).
    Vec2 tangent() const;
    double signed_distance(const Vec2& x) const;
};

/// Order of the eight twin-kinematics dofs.
enum Kin : int {
    kin_cx = 0,
    kin_cy,
    kin_omega,
    kin_ett,
    kin_gamma_plus,
    kin_gamma_minus,
    kin_beta_plus,
    kin_beta_minus,
    kin_count
};
using KinVector = Eigen::Matrix<double, kin_count, 1>;

/// Side index: 0 is the "+" side (x.n > offset), 1 the "-" side.
constexpr int side_plus = 0;
constexpr int side_minus = 1;

/// Reduced description of displacement, magnetization and phase.
///
/// On side s the displacement is
///   u_s(x) = A x + c + omega J x + e_tt (t.x) t + (gamma_s t + beta_s n) (x.n - offset)
/// with J = t (x) n - n (x) t, so the jump of the gradient is rank one with normal n.
struct State {
    TwinLine twin;
    KinVector kin = KinVector::Zero();
    Vec2 mag_angle = Vec2::Zero();  // (plus side, minus side)
    Mat2 A = Mat2::Zero();
    int plus_phase = 1;

    int phase(int side) const { return side == side_plus ? plus_phase : 3 - plus_phase; }
    Vec2 magnetization(int side) const;
    /// Displacement gradient of side `side`, including A.
    Mat2 gradient(int side) const;
    /// Affine part of side `side` without the translation c: u = G x + b.
    Vec2 affine_shift(int side) const;
};

struct CellMesh {
    double radius = 0.3;
    int n_segments = 64;
    int n_side = 16;
    int n_chord = 0;
    double h = 0.0;
    double delta = 0.0;
    Polygon particle;  // counterclockwise
    Polygon cell;      // counterclockwise from (-1/2, -1/2), n_side segments per side
    /// Chord vertices of the twin line the mesh was built with; empty when single phase.
    std::vector<Vec2> chord;
};

CellMesh discretize_cell(const SimulationConfig& config, const TwinLine& twin);
/// Uses the initial twin line of `config`.
CellMesh discretize_cell(const SimulationConfig& config);

/// Chord of `twin` inside the particle polygon, split into mesh.n_chord pieces.
std::vector<Vec2> twin_chord(const CellMesh& mesh, const TwinLine& twin);

struct TwinPartition {
    double area_plus = 0.0;
    double area_minus = 0.0;
    Polygon plus;
    Polygon minus;
};

TwinPartition twin_partition(const CellMesh& mesh, const TwinLine& twin);

/// Piecewise affine particle displacement, evaluated on the side containing x.
Vec2 particle_displacement(const State& state, const Vec2& x);

/// Particle displacement with |x.n - offset| replaced by sqrt(d^2 + delta^2) - delta.
Vec2 regularized_boundary_displacement(const State& state, const Vec2& x, double delta);

/// Area of the p = 1 region over the particle area.
double volume_fraction(const State& state, const CellMesh& mesh);

/// Area of the p = 1 region.
double phase_one_area(const State& state, const CellMesh& mesh);

/// Eigenstrain of `phase` in lattice coordinates.
Mat2 eigenstrain(int phase, const MaterialParams& material, ReferencePhase reference);

/// Initial 50:50 twinned state with stress-free twins and head-to-tail magnetization.
State initial_state(const SimulationConfig& config);

Mat2 rotation(double angle);

}  // namespace msm
