#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "msm/energy.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace msm;

namespace {

constexpr double pi = std::numbers::pi;

State undeformed(double offset = 0.0) {
    State s;
    s.twin.angle = pi / 4.0;
    s.twin.offset = offset;
    return s;
}

// Fourier lattice sum for a uniformly magnetized disk in the unit square lattice:
// 1/2 sum_{k != 0} (m.k)^2 / |k|^2 |F(k)|^2, F(k) = 2 pi R J1(|k| R) / |k|.
double lattice_disk_energy(double R, const Vec2& m, int N) {
    double e = 0.0;
    for (int i = -N; i <= N; ++i) {
        for (int j = -N; j <= N; ++j) {
            if ((i == 0 && j == 0) || i * i + j * j > N * N) {
                continue;
            }
            const Vec2 k = 2.0 * pi * Vec2(i, j);
            const double kk = k.norm();
            const double F = 2.0 * pi * R * std::cyl_bessel_j(1.0, kk * R) / kk;
            e += 0.5 * std::pow(m.dot(k), 2) / (kk * kk) * F * F;
        }
    }
    // Averaged tail beyond the cutoff.
    return e + R / (4.0 * pi * N);
}

State random_state(std::mt19937& rng, const SimulationConfig& cfg) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    State s = initial_state(cfg);
    s.twin.offset = 0.2 * u(rng);
    for (int k = 0; k < kin_count; ++k) {
        s.kin[k] += 0.01 * u(rng);
    }
    s.mag_angle += Vec2(pi * u(rng), pi * u(rng));
    return s;
}

}  // namespace

TEST_CASE("dof layout round trip") {
    DofLayout fixed;
    CHECK(fixed.size() == 11);
    CHECK(fixed.phase_indices() == std::vector<int>{0});
    DofLayout full(true, true);
    CHECK(full.size() == 15);
    CHECK(full.phase_indices() == std::vector<int>{0, 1});
    State s = undeformed(0.07);
    s.kin << 1, 2, 3, 4, 5, 6, 7, 8;
    s.mag_angle << 0.3, -0.2;
    s.A << 0.01, 0.02, 0.02, -0.03;
    const State back = full.unpack(full.pack(s), State{});
    CHECK(back.twin.offset == s.twin.offset);
    CHECK(back.twin.angle == s.twin.angle);
    CHECK(back.kin == s.kin);
    CHECK(back.mag_angle == s.mag_angle);
    CHECK(back.A == s.A);
    CHECK(full.name(full.macro_index(2)) == "A12");
    CHECK(fixed.macro_index(0) == -1);
}

TEST_CASE("particle elastic energy") {
    const auto cfg = default_config();
    EnergyModel model(cfg);
    const double area = signed_area(model.mesh().particle);
    // Undeformed particle: each phase pays W(-eps_p) = (C11 - C12) eps0^2.
    CHECK(model.particle_elastic_energy(undeformed()) == doctest::Approx(area * 13.456).epsilon(1e-12));
    CHECK(model.particle_elastic_energy(undeformed(0.4)) == doctest::Approx(area * 13.456).epsilon(1e-12));
    // Stress-free twins.
    CHECK(std::abs(model.particle_elastic_energy(initial_state(cfg))) < 1e-20);
    const double s = 0.003;
    Mat2 e = s * Mat2::Identity();
    CHECK(particle_energy_density(e, cfg.material) ==
          doctest::Approx(0.5 * 160000.0 * 4.0 * s * s + (156000.0 - 160000.0) * s * s).epsilon(1e-14));
}

TEST_CASE("matrix elastic energy") {
    auto cfg = default_config();
    EnergyModel model(cfg);
    CHECK(model.matrix_elastic_energy(undeformed()) == 0.0);

    State rot = undeformed();
    rot.kin[kin_omega] = 0.01;
    const double e1 = model.matrix_elastic_energy(rot);
    rot.kin[kin_omega] = 0.02;
    const double e2 = model.matrix_elastic_energy(rot);
    CHECK(e1 > 0.0);
    CHECK(e2 / e1 == doctest::Approx(4.0).epsilon(0.01));

    // Rigid translation of particle and matrix together.
    State shift = undeformed();
    shift.kin[kin_cx] = 0.01;
    CHECK(std::abs(model.matrix_elastic_energy(shift)) < 1e-15);

    const State s0 = initial_state(cfg);
    cfg.material.E_poly = 2.0;
    EnergyModel stiff(cfg);
    CHECK(stiff.matrix_elastic_energy(s0) == doctest::Approx(2.0 * model.matrix_elastic_energy(s0)).epsilon(1e-9));

    std::mt19937 rng(11);
    for (int i = 0; i < 10; ++i) {
        CHECK(model.matrix_elastic_energy(random_state(rng, cfg)) >= -1e-10);
    }
}

TEST_CASE("Zeeman energy") {
    const auto cfg = default_config();
    EnergyModel model(cfg);
    State s = undeformed(0.5);
    s.mag_angle << 0.0, 0.0;
    CHECK(model.zeeman_energy(s, Vec2::Zero()) == 0.0);
    CHECK(std::abs(model.zeeman_energy(s, Vec2(0.0, 1.0))) < 1e-17);
    const double e = model.zeeman_energy(s, Vec2(1.0, 0.0));
    CHECK(e == doctest::Approx(-0.5 * signed_area(model.mesh().particle)).epsilon(1e-14));
    CHECK(std::abs(e + 0.5 * pi * 0.09) < 0.002 * 0.5 * pi * 0.09);
    std::mt19937 rng(5);
    const State r = random_state(rng, cfg);
    CHECK(model.zeeman_energy(r, Vec2(0.3, -0.7) * 2.5) ==
          doctest::Approx(2.5 * model.zeeman_energy(r, Vec2(0.3, -0.7))).epsilon(1e-14));
    // Deformed area includes the Jacobian.
    s.kin[kin_ett] = 0.01;
    CHECK(model.zeeman_energy(s, Vec2(1.0, 0.0)) == doctest::Approx(1.01 * e).epsilon(1e-14));
    // A rigid rotation of the particle leaves the area unchanged.
    s.kin[kin_ett] = 0.0;
    s.kin[kin_omega] = 0.5;
    CHECK(model.zeeman_energy(s, Vec2(1.0, 0.0)) == doctest::Approx(e).epsilon(1e-14));
}

TEST_CASE("anisotropy energy") {
    const auto cfg = default_config();
    EnergyModel model(cfg);
    const double area = signed_area(model.mesh().particle);
    State s = undeformed();
    s.mag_angle << 0.0, pi / 2.0;  // easy axes
    CHECK(std::abs(model.anisotropy_energy(s)) < 1e-30);
    s.mag_angle << pi / 2.0, 0.0;  // hard axes
    CHECK(model.anisotropy_energy(s) == doctest::Approx(0.13 * area).epsilon(1e-12));

    // Co-rotation with a rigid infinitesimal rotation.
    State r = undeformed();
    r.mag_angle << 0.2, 1.3;
    const double e0 = model.anisotropy_energy(r);
    for (double w : {1e-3, 2e-3}) {
        State q = r;
        q.kin[kin_omega] = w;
        q.mag_angle += Vec2(w, w);
        CHECK(std::abs(model.anisotropy_energy(q) - e0) < 0.13 * area * 2.0 * w * w);
    }

    std::mt19937 rng(9);
    for (int i = 0; i < 20; ++i) {
        const State q = random_state(rng, cfg);
        const Vec2 a = model.deformed_areas(q);
        const double e = model.anisotropy_energy(q);
        CHECK(e >= -1e-10);
        CHECK(e <= 0.13 * (a[0] + a[1]) + 1e-12);
    }
}

TEST_CASE("demag: isolated disk") {
    const auto cfg = default_config();
    EnergyModel model(cfg);
    model.set_periodic_demag(false);
    State s = undeformed(0.5);
    s.mag_angle << 0.0, 0.0;
    const double exact = 0.31 * pi * 0.09 / 4.0;
    CHECK(std::abs(model.demag_energy(s) - exact) < 0.015 * exact);
}

TEST_CASE("demag: periodic lattice of disks") {
    for (double R : {0.2, 0.3, 0.4}) {
        auto cfg = default_config();
        cfg.geometry.particle_radius = R;
        EnergyModel model(cfg);
        State s = undeformed(0.5);
        s.mag_angle << 0.0, 0.3;
        const double oracle = 0.31 * lattice_disk_energy(R, Vec2(std::cos(0.3), std::sin(0.3)), 400);
        CHECK(std::abs(model.demag_energy(s) - oracle) < 0.015 * oracle);
    }
}

TEST_CASE("demag: chord charge and positivity") {
    const auto cfg = default_config();
    EnergyModel model(cfg);
    State s = undeformed(0.1);
    const double a = s.twin.angle + pi / 2.0;  // along the twin line
    s.mag_angle << a, a;
    const auto curves = magnetic_curves(s, model.mesh());
    Eigen::Vector4d m;
    m << s.magnetization(side_plus), s.magnetization(side_minus);
    const int na = arc_segments(model.mesh());
    const Vector sigma = curves.basis * m;
    REQUIRE(sigma.size() == 2 * na + model.mesh().n_chord);
    CHECK(sigma.tail(model.mesh().n_chord).cwiseAbs().maxCoeff() < 1e-15);
    // Neutral total charge.
    double q = 0.0;
    for (int i = 0; i < sigma.size(); ++i) q += sigma[i] * curves.segments[i].length();
    CHECK(std::abs(q) < 1e-14);

    std::mt19937 rng(1);
    for (int i = 0; i < 20; ++i) {
        const State r = random_state(rng, cfg);
        CHECK(model.demag_energy(r) >= 0.0);
        CHECK(model.demag_form(r).eigenvalues().real().minCoeff() > -1e-12);
    }
    // Smooth in the offset: second differences stay bounded across the mesh vertices.
    State t = initial_state(cfg);
    double worst = 0.0;
    const double h = 1e-3;
    for (double d = -0.2; d < 0.2; d += 0.0137) {
        t.twin.offset = d - h;
        const double em = model.demag_energy(t);
        t.twin.offset = d;
        const double e0 = model.demag_energy(t);
        t.twin.offset = d + h;
        const double ep = model.demag_energy(t);
        worst = std::max(worst, std::abs(ep - 2 * e0 + em) / (h * h));
    }
    CHECK(worst < 1.0);
}

TEST_CASE("effective field") {
    const auto cfg = default_config();
    const Vec2 H(0.4, 0.1);
    CHECK(effective_field(H, Vec2(0.2, 0.3), Workpiece::none, cfg.material) == H);
    CHECK(effective_field(H, Vec2::Zero(), Workpiece::circular, cfg.material) == H);
    // Saturated cell: 28 % MSM with m = (1, 0).
    const Vec2 Heff = effective_field(H, Vec2(0.28, 0.0), Workpiece::circular, cfg.material);
    CHECK(Heff.y() == H.y());
    CHECK(H.x() - Heff.x() == doctest::Approx(0.5 * 0.28 * 0.31 / 0.5).epsilon(1e-14));

    // The workpiece energy term is consistent with the field shift.
    auto wcfg = cfg;
    wcfg.geometry.workpiece = Workpiece::circular;
    EnergyModel plain(cfg);
    EnergyModel work(wcfg);
    State s = initial_state(cfg);
    s.mag_angle << 0.1, 0.2;
    const double extra = work.demag_energy(s) - plain.demag_energy(s);
    const Vec2 M = work.moment(s);
    CHECK(extra == doctest::Approx(0.31 * 0.25 * M.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("breakdown additivity and time dependence") {
    auto cfg = default_config();
    EnergyModel model(cfg);
    std::mt19937 rng(2);
    const State s = random_state(rng, cfg);
    for (double t : {0.0, 3.5, 27.0}) {
        const auto b = model.breakdown(t, s);
        CHECK(b.total == b.e_matrix + b.e_particle + b.e_zeeman + b.e_demag + b.e_anis);
    }
    CHECK(model.breakdown(0.0, s).e_zeeman == 0.0);
    CHECK(model.energy_increment(3.0, 17.0, s) ==
          doctest::Approx(model.total_energy(17.0, s) - model.total_energy(3.0, s)).epsilon(1e-9));

    auto cfg2 = cfg;
    cfg2.material.Ku *= 2.0;
    EnergyModel model2(cfg2);
    const auto b1 = model.breakdown(5.0, s);
    const auto b2 = model2.breakdown(5.0, s);
    CHECK(b2.e_anis == doctest::Approx(2.0 * b1.e_anis).epsilon(1e-14));
    CHECK(b2.e_matrix == b1.e_matrix);
    CHECK(b2.e_zeeman == b1.e_zeeman);
    CHECK(b2.e_demag == b1.e_demag);
    CHECK(b2.e_particle == b1.e_particle);
}

TEST_CASE("finite-difference gradient") {
    // Exact on quadratics up to rounding.
    Eigen::Matrix3d M;
    M << 2, 0.5, 0, 0.5, 1, -0.3, 0, -0.3, 3;
    const Eigen::Vector3d b(0.1, -0.2, 0.3);
    auto f = [&](const Vector& z) { return 0.5 * z.dot(M * z) + b.dot(z); };
    const Vector z = Eigen::Vector3d(0.3, -0.1, 0.7);
    CHECK((central_difference(f, z, 1e-6) - (M * z + b)).cwiseAbs().maxCoeff() < 1e-8);

    const auto cfg = default_config();
    EnergyModel model(cfg);
    // Symmetric initial state at zero field: no force on the twin line.
    const Vector g = model.energy_gradient(0.0, initial_state(cfg));
    CHECK(std::abs(g[model.layout().offset_index()]) < 1e-7);

    // Step halving: the FD error shrinks like h^2.
    std::mt19937 rng(4);
    for (int trial = 0; trial < 3; ++trial) {
        const State s = random_state(rng, cfg);
        auto F = [&](const Vector& x) { return model.total_energy(12.0, model.layout().unpack(x, s)); };
        const Vector x = model.layout().pack(s);
        const Vector g1 = central_difference(F, x, 4e-4);
        const Vector g2 = central_difference(F, x, 2e-4);
        const Vector g4 = central_difference(F, x, 1e-4);
        const double d1 = (g1 - g2).cwiseAbs().maxCoeff();
        const double d2 = (g2 - g4).cwiseAbs().maxCoeff();
        CHECK(d2 < 0.35 * d1 + 1e-9);
    }
}
