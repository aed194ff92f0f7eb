#pragma once

#include "msm/bem.hpp"
#include "msm/geometry.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace msm {

using Mat4 = Eigen::Matrix4d;

struct EnergyBreakdown {
    double e_matrix = 0.0;
    double e_particle = 0.0;
    double e_zeeman = 0.0;
    double e_demag = 0.0;
    double e_anis = 0.0;
    double total = 0.0;
};

/// Flat optimization vector
///   z = [offset, (angle), c_x, c_y, omega, e_tt, gamma+, gamma-, beta+, beta-,
///        theta+, theta-, (A11, A22, A12)]
/// with the bracketed entries present only when freed.
class DofLayout {
public:
    DofLayout(bool free_angle = false, bool free_macro_strain = false);

    int size() const { return size_; }
    int offset_index() const { return 0; }
    int angle_index() const { return angle_; }
    int kin_index(int k) const { return kin_ + k; }
    int mag_index(int side) const { return mag_ + side; }
    /// Index of A11, A22, A12 (k = 0, 1, 2) or -1 when A is held fixed.
    int macro_index(int k) const { return macro_ < 0 ? -1 : macro_ + k; }
    /// Entries that describe the phase geometry (the twin line).
    const std::vector<int>& phase_indices() const { return phase_; }
    std::string name(int i) const;

    Vector pack(const State& s) const;
    /// Entries absent from the layout are copied from `base`.
    State unpack(const Vector& z, const State& base) const;

private:
    int size_ = 0;
    int angle_ = -1;
    int kin_ = 0;
    int mag_ = 0;
    int macro_ = -1;
    std::vector<int> phase_;
};

/// Charged curves of the deformed particle: twin arcs and the twin chord.
/// The surface charge is sigma = basis * (m+_x, m+_y, m-_x, m-_y).
struct MagneticCurves {
    std::vector<Segment> segments;
    Eigen::Matrix<double, Eigen::Dynamic, 4> basis;
};

/// Arc pieces per twin used for the magnetic curves.
int arc_segments(const CellMesh& mesh);

MagneticCurves magnetic_curves(const State& state, const CellMesh& mesh);

/// Demagnetizing factor of a disk-shaped workpiece in 2D.
constexpr double disk_demag_factor = 0.5;

/// Field corrected for the stray field of a macroscopic workpiece.
/// mean_magnetization is the cell average of m (zero outside the particle).
Vec2 effective_field(const Vec2& H, const Vec2& mean_magnetization, Workpiece workpiece,
                     const MaterialParams& material);

/// Central-difference gradient of f at z with step h in every entry.
Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& z, double h);

/// Elastic energy density of the particle in lattice coordinates.
double particle_energy_density(const Mat2& eps, const MaterialParams& material);

/// Total energy of the cell and its pieces. Holds the factorized boundary
/// element operators and caches per geometry; not safe for concurrent use.
class EnergyModel {
public:
    explicit EnergyModel(const SimulationConfig& config);
    ~EnergyModel();
    EnergyModel(const EnergyModel&) = delete;
    EnergyModel& operator=(const EnergyModel&) = delete;

    const SimulationConfig& config() const { return config_; }
    const CellMesh& mesh() const { return mesh_; }
    const DofLayout& layout() const { return layout_; }

    double particle_elastic_energy(const State& s) const;
    double matrix_elastic_energy(const State& s) const;
    double zeeman_energy(const State& s, const Vec2& H) const;
    double anisotropy_energy(const State& s) const;
    double demag_energy(const State& s) const;
    /// Stray-field energy with the quadratic form Q held fixed.
    double demag_energy(const State& s, const Mat4& Q) const;

    /// E_demag = Ms^2/mu0 * m^T Q m for m = (m+, m-) on the geometry of `s`,
    /// without the workpiece correction.
    const Mat4& demag_form(const State& s) const;

    /// Deformed twin areas (plus, minus), to first order in the twin gradients.
    Vec2 deformed_areas(const State& s) const;
    /// Integral of m over the deformed particle.
    Vec2 moment(const State& s) const;
    /// Deformed cell area det(I + A).
    double cell_area(const State& s) const;
    /// Magnetization averaged over the deformed particle (relative to saturation).
    Vec2 mean_particle_magnetization(const State& s) const;

    Vec2 field(double t) const { return config_.protocol.field_at(t); }
    Vec2 effective_field(double t, const State& s) const;

    EnergyBreakdown breakdown(double t, const State& s) const;
    double total_energy(double t, const State& s) const { return breakdown(t, s).total; }
    /// Total energy with the demag form frozen at Q; cheap to evaluate.
    double frozen_energy(double t, const State& s, const Mat4& Q) const;
    /// Energy change E(t1, s) - E(t0, s); only the Zeeman term depends on time.
    double energy_increment(double t0, double t1, const State& s) const;

    /// Central finite differences over the layout entries.
    Vector energy_gradient(double t, const State& s) const;

    /// Turns the periodic stray-field correction off (isolated particle).
    void set_periodic_demag(bool on);

    /// Number of demag geometries assembled so far.
    long demag_builds() const { return demag_builds_; }

private:
    struct PeriodicOperator;
    const PeriodicOperator& periodic_operator(const Mat2& A) const;
    Mat4 assemble_demag(const State& s) const;

    SimulationConfig config_;
    CellMesh mesh_;
    DofLayout layout_;
    std::unique_ptr<ElasticityBem> bem_;
    std::vector<Vec2> nodes_;
    std::vector<double> node_weights_;
    bool periodic_demag_ = true;
    mutable std::map<std::vector<double>, Mat4> demag_cache_;
    mutable std::map<std::vector<double>, std::unique_ptr<PeriodicOperator>> laplace_cache_;
    mutable long demag_builds_ = 0;
};

}  // namespace msm
