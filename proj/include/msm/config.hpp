#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace msm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Raised for malformed input files; the message names the offending key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Material constants. Stresses and energy densities in MPa, fields in Tesla.
struct MaterialParams {
    double eps0 = 0.058;
    double C11 = 160000.0;
    double C12 = 156000.0;
    double C44 = 40000.0;
    double E_poly = 1.0;
    double nu_poly = 0.45;
    double lambda_poly = 0.0;  // derived, plane strain
    double mu_poly = 0.0;      // derived
    double Ms_over_mu0 = 0.50;
    double Ms2_over_mu0 = 0.31;
    double Ku = 0.13;
    double kappa = 0.1;

    /// Recomputes lambda_poly and mu_poly from (E_poly, nu_poly).
    void update_lame();
    void validate() const;
};

enum class ReferencePhase { austenite, martensite };
enum class Workpiece { none, circular };

struct GeometryParams {
    double particle_radius = 0.3;
    double lattice_angle = 0.0;  // radians
    ReferencePhase reference_phase = ReferencePhase::austenite;
    Workpiece workpiece = Workpiece::none;

    void validate() const;
};

struct FieldSample {
    double t = 0.0;
    Vec2 H = Vec2::Zero();
};

enum class ProtocolKind { uniaxial, biaxial, rotated, custom };

/// Piecewise-linear applied field H(t) through the ordered samples.
struct FieldProtocol {
    std::vector<FieldSample> samples;
    std::string description;
    ProtocolKind kind = ProtocolKind::custom;
    double angle = 0.0;     // rotated protocols, radians
    double peak = 1.0;
    int steps_per_leg = 50;

    double t_begin() const;
    double t_end() const;
    Vec2 field_at(double t) const;
    /// Unit vector of the first (primary) loading direction.
    Vec2 primary_direction() const;
    /// Index of the last sample of leg `leg` (0-based), for generated protocols.
    int leg_end(int leg) const;
    int leg_count() const;
    void validate() const;
};

FieldProtocol build_protocol(ProtocolKind kind, double peak, int steps_per_leg,
                             double angle = 0.0);
/// Parses "uniaxial", "biaxial" or "rotated:<deg>".
FieldProtocol build_protocol(const std::string& spec, double peak, int steps_per_leg);

struct SolverParams {
    int n_boundary_segments = 64;
    double delta_over_h = 2.0;
    bool free_macro_strain = false;
    bool free_twin_angle = false;
    double initial_offset = 0.0;
    double grad_tol = 1e-6;
    int max_iterations = 500;
    double armijo_c = 1e-4;
    double fd_step = 1e-6;
    double tol_E_rel = 1e-3;
    bool backtracking = true;
    int max_backtrack_per_leg = 3;
    /// Restart seeds are tried every `restart_interval` steps; 0 disables them.
    int restart_interval = 5;
    std::vector<std::string> restart_seeds = {"flip_plus", "flip_minus", "flip_both",
                                              "offset_plus", "offset_minus"};

    void validate() const;
};

struct SimulationConfig {
    MaterialParams material;
    GeometryParams geometry;
    FieldProtocol protocol;
    SolverParams solver;

    void validate() const;
};

/// The default configuration: NiMnGa constants, 1 MPa polymer, radius 0.3 and
/// a 1 T uniaxial protocol with 50 steps per leg.
SimulationConfig default_config();

SimulationConfig parse_config(const std::string& text);
SimulationConfig load_config(const std::string& path);
std::string serialize_config(const SimulationConfig& config);

std::string to_string(ReferencePhase r);
std::string to_string(Workpiece w);

}  // namespace msm
