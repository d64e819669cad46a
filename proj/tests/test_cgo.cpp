#include <cmath>
#include <random>

#include "cwg/cgo.hpp"
#include "cwg/fem.hpp"
#include "cwg/spectral.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cwg;
using namespace cwg::cgo;
using cwg::spectral::FiberContext;

namespace {

// external re-derivation of the frequency-pair identities
void check_pair_identities(const CGOParams& p, double tol) {
    const double scale = p.tau * p.tau;
    for (const Vec3c& z : {p.zeta1, p.zeta2}) {
        cplx zz = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];  // unconjugated
        CHECK(std::abs(zz) < tol * scale);
        Vec3 re = z.real(), im = z.imag();
        CHECK(std::abs(re.norm() - p.tau) < tol * p.tau);
        CHECK(std::abs(im.norm() - p.tau) < tol * p.tau);
        CHECK(std::abs(re.dot(im)) < tol * scale);
        CHECK(z[0].real() == 0.0);  // axial component purely imaginary
    }
    Vec3c sum = p.zeta1 + p.zeta2.conjugate();
    CHECK(std::abs(sum[0] - cplx(0.0, 2.0 * pi * p.k)) < tol * (1.0 + p.tau));
    CHECK(std::abs(sum[1] - cplx(0.0, p.eta.x())) < tol * (1.0 + p.tau));
    CHECK(std::abs(sum[2] - cplx(0.0, p.eta.y())) < tol * (1.0 + p.tau));

    // ell orthogonality against the target frequency and xi
    Vec3 freq(2.0 * pi * p.k, p.eta.x(), p.eta.y());
    CHECK(std::abs(p.ell.dot(freq)) < tol * (1.0 + p.ell.norm() * freq.norm()));
    CHECK(std::abs(p.ell.y() * p.xi.x() + p.ell.z() * p.xi.y()) < tol * (1.0 + p.ell.norm()));

    CHECK(p.tau * p.tau ==
          doctest::Approx(p.eta.squaredNorm() / 4.0 + pi * pi * p.k * p.k + p.ell.squaredNorm())
              .epsilon(1e-12));
    CHECK(p.tau > 2.0 * pi * p.r);

    // axial frequencies are theta-compatible integer modes
    double m1 = (p.zeta1[0].imag() - p.theta) / (2.0 * pi);
    double m2 = (p.zeta2[0].imag() - p.theta) / (2.0 * pi);
    CHECK(std::abs(m1 - p.mode1) < 1e-9);
    CHECK(std::abs(m2 - p.mode2) < 1e-9);
}

}  // namespace

TEST_CASE("frequency pair: worked example with even k") {
    CGOParams p = make_cgo_params_xi(0, Vec2(0.0, 2.0 * pi), 0.3, 0.0, Vec2(1.0, 0.0));
    const double rt5pi = std::sqrt(5.0) * pi;  // 7.0248...
    CHECK(p.ell.x() == doctest::Approx(2.0 * pi).epsilon(1e-14));
    CHECK(p.ell.y() == 0.0);
    CHECK(p.ell.z() == 0.0);
    CHECK(p.tau == doctest::Approx(rt5pi).epsilon(1e-14));
    CHECK(p.zeta1[0] == cplx(0.0, 2.0 * pi));
    CHECK(p.zeta1[1].real() == doctest::Approx(-rt5pi).epsilon(1e-14));
    CHECK(p.zeta1[2] == cplx(0.0, pi));
    CHECK(p.zeta2[0] == cplx(0.0, 2.0 * pi));
    CHECK(p.zeta2[1].real() == doctest::Approx(rt5pi).epsilon(1e-14));
    CHECK(p.zeta2[2] == cplx(0.0, -pi));
    CHECK(p.mode1 == 1);
    CHECK(p.mode2 == 1);
    check_pair_identities(p, 1e-12);
}

TEST_CASE("frequency pair: odd k uses the half-step branch") {
    CGOParams p = make_cgo_params_xi(1, Vec2(0.0, 2.0 * pi), 0.3, 0.0, Vec2(1.0, 0.0));
    CHECK(p.ell.x() == doctest::Approx(3.0 * pi).epsilon(1e-14));  // s = 2 pi ([r] + 3/2)
    CHECK(p.tau == doctest::Approx(std::sqrt(20.0) * pi).epsilon(1e-13));
    CHECK(p.mode1 == 2);
    CHECK(p.mode2 == 1);
    CHECK(p.tau > 2.0 * pi * 0.3);
    check_pair_identities(p, 1e-12);
}

TEST_CASE("frequency pair invariants over random draws") {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        int k = static_cast<int>(uni(gen) * 13.0) - 6;
        double ang = 2.0 * pi * uni(gen);
        double mag = std::exp(std::log(0.5) + uni(gen) * std::log(80.0));
        Vec2 eta(mag * std::cos(ang), mag * std::sin(ang));
        double r = 0.01 + 8.0 * uni(gen);
        double theta = 2.0 * pi * uni(gen);
        CGOParams p = make_cgo_params(k, eta, r, theta);
        check_pair_identities(p, 1e-12);
    }
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(make_cgo_params(0, Vec2(0.0, 0.0), 0.5, 0.0), ValidationError);
    // xi must be unit and orthogonal to eta
    CHECK_THROWS_AS(make_cgo_params_xi(0, Vec2(0.0, 2.0 * pi), 0.5, 0.0, Vec2(0.0, 1.0)),
                    ValidationError);
    CHECK_THROWS_AS(make_cgo_params_xi(0, Vec2(0.0, 2.0 * pi), 0.5, 0.0, Vec2(2.0, 0.0)),
                    ValidationError);
}

TEST_CASE("tau targeting lands on the nearest quantized value") {
    for (int k : {0, 1, 3}) {
        Vec2 eta(0.0, 2.0 * pi);
        double slack = 0.6 * 2.0 * pi * std::sqrt(1.0 + std::pow(2.0 * pi * k / eta.norm(), 2));
        // the family is indexed by r > 0, so its lowest rung sits at r -> 0+
        double first = make_cgo_params(k, eta, 0.5, 0.3).tau;
        for (double target : {15.0, 40.0, 77.0}) {
            CGOParams p = params_for_tau(k, eta, 0.3, target, Vec2(1.0, 0.0));
            check_pair_identities(p, 1e-12);
            if (target >= first)
                CHECK(std::abs(p.tau - target) <= slack);
            else
                CHECK(p.tau == doctest::Approx(first));  // clamped up to the first rung
        }
    }
    // unreachable below the frequency floor
    CHECK_THROWS_AS(params_for_tau(0, Vec2(0.0, 2.0 * pi), 0.0, 2.0, Vec2(1.0, 0.0)),
                    ValidationError);
}

TEST_CASE("smooth remainder vanishes for zero potential") {
    geometry::Mesh mesh = th::disk_mesh(0.15);
    forward::PotentialField V = forward::potential_zero(mesh);
    CGOParams p = params_for_tau(0, Vec2(0.0, 2.0 * pi), 0.4, 20.0, Vec2(1.0, 0.0));
    CGOSolution sol = solve_cgo_smooth(mesh, V, p);
    CHECK(sol.remainder_l2 < 1e-13);
    CHECK(sol.residual < 1e-10);
    CHECK(sol.iterations <= 2);

    // with v = 0 the mode stack is exactly the transverse phase of e^{zeta.x}
    int row = sol.ctx.row_of(p.mode1);
    REQUIRE(row >= 0);
    for (std::size_t q : {std::size_t(0), mesh.n_vertices() / 2, mesh.n_vertices() - 1}) {
        const Vec2& x = mesh.vertices[q];
        cplx expect = std::exp(p.zeta1[1] * x.x() + p.zeta1[2] * x.y());
        CHECK(std::abs(sol.u_modes(row, static_cast<Eigen::Index>(q)) - expect) <
              1e-10 * std::abs(expect));
    }
}

TEST_CASE("smooth remainder decays and keeps periodic traces") {
    geometry::Mesh mesh = th::disk_mesh(0.15);
    forward::PotentialField V = forward::potential_constant(mesh, 1.0);
    CGOParams p1 = params_for_tau(1, Vec2(0.0, 2.0 * pi), 0.9, 25.0, Vec2(1.0, 0.0));
    CGOParams p2 = params_for_tau(1, Vec2(0.0, 2.0 * pi), 0.9, 50.0, Vec2(1.0, 0.0));
    CGOSolution s1 = solve_cgo_smooth(mesh, V, p1);
    CGOSolution s2 = solve_cgo_smooth(mesh, V, p2);
    CHECK(s1.remainder_l2 > 0.0);
    CHECK(s1.remainder_l2 < 0.05);
    CHECK(s2.remainder_l2 / s1.remainder_l2 < 0.75);
    CHECK(s1.residual < 1e-8);

    // the remainder itself is 1-periodic in x1 (the quasi-periodic twist lives
    // in the exponential prefactor), so it belongs to the theta = 0 class
    spectral::FiberContext per(0.0, s1.ctx.K, 0);
    auto rep = spectral::quasi_periodic_membership(per, mesh, s1.remainder, std::nullopt, 1e-8);
    CHECK(rep.member);
    CHECK(rep.trace_defect < 1e-10);
}

TEST_CASE("vanishing remainder: feasibility, optimality, trace bound") {
    geometry::Mesh mesh = th::disk_mesh(0.1);
    forward::PotentialField V = forward::potential_constant(mesh, 0.8);
    double eps = 0.25;
    CGOParams p = params_for_tau(1, Vec2(0.0, 2.0 * pi), 0.4, 22.0, Vec2(1.0, 0.0));

    CGOSolution sol = solve_cgo_vanishing(mesh, V, p, eps);
    CHECK(sol.trace_defect < 2e-8);
    CHECK(sol.residual < 1e-6);
    CHECK(sol.remainder_l2 > 0.0);

    // the constrained minimizer cannot beat itself under more constraints
    VanishingOptions full;
    full.full_dirichlet = true;
    CGOSolution cmp = solve_cgo_vanishing(mesh, V, p, eps, full);
    CHECK(sol.weighted_l2 <= cmp.weighted_l2 * (1.0 + 1e-9));

    // boundary trace of u grows no faster than e^{c tau} with c = max radius
    CGOParams q = params_for_tau(1, Vec2(0.0, 2.0 * pi), 0.4, 44.0, Vec2(1.0, 0.0));
    CGOSolution sol2 = solve_cgo_vanishing(mesh, V, q, eps);
    SpMat Mb = fem::boundary_mass_full(mesh);
    auto trace_norm = [&](const CGOSolution& s) {
        double acc = 0.0;
        for (int r = 0; r < s.ctx.n_modes(); ++r) {
            VecXc row = s.u_modes.row(r).transpose();
            acc += (row.adjoint() * (Mb.cast<cplx>() * row))(0, 0).real();
        }
        return std::sqrt(acc);
    };
    double r1 = trace_norm(sol) / std::exp(mesh.max_radius() * sol.params.tau);
    double r2 = trace_norm(sol2) / std::exp(mesh.max_radius() * sol2.params.tau);
    CHECK(r2 / r1 < 100.0);
    CHECK(r1 / r2 < 100.0);
}

TEST_CASE("decay ladder reports norms and a negative slope") {
    geometry::Mesh mesh = th::disk_mesh(0.12);
    forward::PotentialField V = forward::potential_constant(mesh, 1.0);
    DecayLadder lad = decay_ladder(mesh, V, 0, Vec2(0.0, 2.0 * pi), 0.6, {22.0, 45.0}, false, 0.25);
    REQUIRE(lad.tau.size() == 2);
    CHECK(lad.norm[0] > lad.norm[1]);
    CHECK(lad.slope < -0.5);
}

TEST_CASE("carleman ratio: scaling invariance and interior fields") {
    geometry::Mesh mesh = th::disk_mesh(0.2);
    forward::PotentialField V = forward::potential_axial_cosine(mesh, 0.1, 0.2, Vec2(0.0, 0.0), 0.6);
    auto fields = random_carleman_fields(11, 4, 1.0);
    REQUIRE(fields.size() == 4);

    auto rows = carleman_empirical(V, mesh, Vec2(1.0, 0.0), 0.3, {30.0}, fields);
    REQUIRE(rows.size() == 1);
    for (double r : rows[0].ratios) {
        CHECK(std::isfinite(r));
        CHECK(r > 0.0);
    }
    CHECK(rows[0].min_ratio == doctest::Approx(*std::min_element(rows[0].ratios.begin(),
                                                                 rows[0].ratios.end())));

    // homogeneity: scaling the test field leaves the quotient unchanged
    CarlemanField f = fields[1];
    CarlemanField f3 = f;
    auto scale = [](std::function<double(const Vec2&)> g) {
        return [g](const Vec2& p) { return 3.0 * g(p); };
    };
    f3.value = scale(f.value);
    f3.lap = scale(f.lap);
    f3.dnu = scale(f.dnu);
    auto ra = carleman_empirical(V, mesh, Vec2(1.0, 0.0), 0.3, {30.0}, {f});
    auto rb = carleman_empirical(V, mesh, Vec2(1.0, 0.0), 0.3, {30.0}, {f3});
    CHECK(ra[0].ratios[0] == doctest::Approx(rb[0].ratios[0]).epsilon(1e-12));
}
