#pragma once

#include "msm/geometry.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <vector>

namespace msm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a boundary-element system cannot be solved.
class BemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Straight boundary piece oriented from a to b. The normal is the tangent
/// turned clockwise, so it points away from a domain lying on the left.
struct Segment {
    Vec2 a;
    Vec2 b;

    double length() const { return (b - a).norm(); }
    Vec2 tangent() const { return (b - a).normalized(); }
    Vec2 normal() const {
        const Vec2 t = tangent();
        return Vec2(t.y(), -t.x());
    }
    Vec2 midpoint() const { return 0.5 * (a + b); }
    Vec2 at(double s) const { return a + s * (b - a); }
};

/// Segments of a closed polygon, reversed when `reverse` is set.
std::vector<Segment> polygon_segments(const Polygon& poly, bool reverse = false);

namespace kernel {

/// Integral of log|x - xi| over the segment.
double log_integral(const Segment& seg, const Vec2& xi);
/// Integral of (x - xi).nu / |x - xi|^2 over the segment (angle subtended).
double double_layer(const Segment& seg, const Vec2& xi);
/// Gradient of log_integral with respect to xi.
Vec2 log_integral_gradient(const Segment& seg, const Vec2& xi);
/// log_integral together with its gradient.
double log_integral(const Segment& seg, const Vec2& xi, Vec2& gradient);
/// log_integral together with double_layer.
double log_integral(const Segment& seg, const Vec2& xi, double& double_layer);

/// Integrals of the plane-strain Kelvin kernels against the two linear shape
/// functions of a segment whose nodes sit at its Gauss points.
struct KelvinBlocks {
    Mat2 U[2];
    Mat2 T[2];
};
KelvinBlocks kelvin(const Segment& seg, const Vec2& xi, double mu, double nu, bool self);

/// Gauss point abscissae (fraction of the length) used as collocation nodes.
constexpr double gauss_lo = 0.21132486540518711775;
constexpr double gauss_hi = 0.78867513459481288225;

}  // namespace kernel

/// How the unknowns of one Laplace segment are constrained.
enum class LaplaceKind { dirichlet, periodic_minus, periodic_plus };

/// Constant-element collocation system for the Laplace equation inside a
/// closed counterclockwise curve.
struct BoundarySystem {
    std::vector<Segment> segments;
    std::vector<LaplaceKind> kind;
    /// For periodic_plus segments: index of the partner periodic_minus segment.
    std::vector<int> partner;
};

/// Right-hand side data of a Laplace problem.
struct LaplaceData {
    /// Dirichlet trace per segment (ignored elsewhere).
    Vector dirichlet;
    /// For periodic_plus segments: psi_plus = psi_minus + jump_psi and
    /// q_plus = -q_minus + jump_q.
    Vector jump_psi;
    Vector jump_q;
};

struct LaplaceSolution {
    Vector psi;  // trace per segment
    Vector q;    // outward normal derivative per segment
    double gauge = 0.0;
};

/// Factorized collocation operator; solves many right-hand sides.
class LaplaceSolver {
public:
    explicit LaplaceSolver(BoundarySystem system);

    LaplaceSolution solve(const LaplaceData& data) const;
    /// Evaluates the harmonic function at an interior point (representation formula).
    double evaluate(const LaplaceSolution& sol, const Vec2& x) const;
    const BoundarySystem& system() const { return system_; }
    double condition_estimate() const { return condition_; }

private:
    BoundarySystem system_;
    std::vector<int> unknown_psi_;
    std::vector<int> unknown_q_;
    int n_unknowns_ = 0;
    bool pure_dirichlet_ = false;
    bool has_gauge_ = false;
    Matrix S_;  // single layer: (1/2pi) * log integral
    Matrix D_;  // double layer: (1/2pi) * angle
    Eigen::PartialPivLU<Matrix> lu_;
    double condition_ = 0.0;
};

LaplaceSolution solve_laplace(const BoundarySystem& system, const LaplaceData& data);

/// Periodic system on the parallelogram (I + A)[-1/2, 1/2]^2 with n_side
/// segments per side; bottom and left sides carry the unknowns.
BoundarySystem periodic_cell_system(const Mat2& A, int n_side);

/// Nodes and unknowns of the polymer-matrix problem.
struct ElasticSolution {
    std::vector<Vec2> nodes;
    std::vector<double> weights;  // quadrature weight of each node
    std::vector<Vec2> u;
    std::vector<Vec2> t;
    int n_particle_nodes = 0;
};

/// Collocation BEM for the polymer matrix between the particle polygon and the
/// unit cell: Dirichlet data on the particle, u(x + e_i) = u(x) + A e_i on the cell.
/// Elements are linear and discontinuous with nodes at the two Gauss points.
class ElasticityBem {
public:
    ElasticityBem(const Polygon& particle, const Polygon& cell, double lambda, double mu);

    int n_particle_nodes() const { return n_particle_nodes_; }
    /// Node positions on the particle boundary, in the order of the data vector.
    const std::vector<Vec2>& particle_nodes() const { return particle_nodes_; }

    /// g holds one displacement per particle node; A is symmetric.
    ElasticSolution solve(const std::vector<Vec2>& g, const Mat2& A) const;
    /// Symmetric K with energy 1/2 w^T K w, w = (g_1x, g_1y, ..., A11, A22, A12).
    const Matrix& energy_form() const { return K_; }
    double energy(const std::vector<Vec2>& g, const Mat2& A) const;
    /// Smallest eigenvalue of the energy form before symmetrization cleanup.
    double min_eigenvalue() const { return min_eig_; }

private:
    int n_particle_nodes_ = 0;
    std::vector<Vec2> particle_nodes_;
    std::vector<Vec2> all_nodes_;
    std::vector<double> all_weights_;
    std::vector<int> node_partner_;  // plus node -> minus node, else -1
    std::vector<Vec2> node_shift_;   // lattice vector for plus nodes
    std::vector<int> minus_index_;   // node -> minus slot, else -1
    Matrix S_;                       // unknowns per unit data
    Matrix K_;
    double min_eig_ = 0.0;
};

/// 1/2 of the boundary integral of u . t over the matrix boundary.
double boundary_energy(const ElasticSolution& sol);

/// Gram matrix of the log kernel G = -(1/2pi) log r between constant
/// densities on the given segments: entry (i, j) = int_i int_j G.
Matrix single_layer_matrix(const std::vector<Segment>& segments);

/// 1/2 sum_ij rho_i rho_j int_i int_j G, the field energy of the single layer.
double single_layer_interaction(const std::vector<Segment>& segments, const Vector& density);

}  // namespace msm
