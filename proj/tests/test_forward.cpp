#include <cmath>
#include <filesystem>
#include <random>

#include "cwg/fem.hpp"
#include "cwg/forward.hpp"
#include "cwg/oracle.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cwg;
using namespace cwg::forward;
using cwg::spectral::FiberContext;

namespace {

// nodal boundary coefficients for one mode row of a full-boundary basis
VecXc full_boundary_coeff(const geometry::Mesh& mesh, const BoundaryBasis& basis, int mode,
                          const std::function<cplx(const Vec2&)>& f) {
    VecXc coeff = VecXc::Zero(basis.dim());
    int row = mode - basis.center + basis.K;
    for (std::size_t s = 0; s < basis.vertices.size(); ++s)
        coeff[row * static_cast<int>(basis.vertices.size()) + static_cast<int>(s)] =
            f(mesh.vertices[static_cast<std::size_t>(basis.vertices[s])]);
    return coeff;
}

}  // namespace

TEST_CASE("zero data gives the zero solution") {
    geometry::Mesh mesh = th::disk_mesh(0.2);
    FiberContext ctx(0.5, 1);
    PotentialField V = potential_zero(mesh);
    DirichletData g;
    g.basis = face_interior_basis(mesh, th::whole_boundary(mesh), 1, 0);
    g.coeff = VecXc::Zero(g.basis.dim());
    FiberSolution sol = solve_fibered_bvp(mesh, ctx, V, g);
    CHECK(sol.field.coeff.norm() == 0.0);
    CHECK(sol.flux.coeff.norm() == 0.0);
}

TEST_CASE("harmonic phase is reproduced at second order") {
    geometry::Mesh mesh = th::disk_mesh(0.1);
    double theta = 0.7;
    FiberContext ctx(theta, 1);
    PotentialField V = potential_zero(mesh);

    // e^{i beta x1} e^{beta e.x'} solves Laplace for any unit e (mode 0 only)
    Vec2 e(0.6, 0.8);
    double beta = ctx.beta(0);
    auto phase = [&](const Vec2& p) { return cplx(std::exp(beta * e.dot(p)), 0.0); };

    DirichletData g;
    g.basis = face_interior_basis(mesh, th::whole_boundary(mesh), 1, 0);
    g.coeff = full_boundary_coeff(mesh, g.basis, 0, phase);
    FiberSolution sol = solve_fibered_bvp(mesh, ctx, V, g);
    CHECK(sol.pde_residual < 1e-10);

    SpMat M = fem::mass(mesh);
    VecXc uh = sol.field.mode_row(0);
    VecXc ue(uh.size());
    for (Eigen::Index q = 0; q < ue.size(); ++q)
        ue[q] = phase(mesh.vertices[static_cast<std::size_t>(q)]);
    double num = ((uh - ue).adjoint() * (M.cast<cplx>() * (uh - ue)))(0, 0).real();
    double den = (ue.adjoint() * (M.cast<cplx>() * ue))(0, 0).real();
    CHECK(std::sqrt(num / den) < 0.01);
    // other modes stay empty
    CHECK(sol.field.mode_row(1).norm() < 1e-10 * ue.norm());

    // nodal flux against the analytic normal derivative, in the boundary mass norm
    SpMat Mb = fem::boundary_mass_full(mesh);
    VecXc fh = sol.flux.mode_row(0), fe = VecXc::Zero(fh.size());
    std::vector<double> wv(mesh.n_vertices(), 0.0);
    for (const auto& edge : mesh.boundary) {
        wv[static_cast<std::size_t>(edge.v0)] += 0.5 * edge.length;
        wv[static_cast<std::size_t>(edge.v1)] += 0.5 * edge.length;
    }
    for (std::size_t i = 0; i < mesh.boundary.size(); ++i) {
        int v = mesh.boundary_vertices[i];
        const auto& eprev = mesh.boundary[(i + mesh.boundary.size() - 1) % mesh.boundary.size()];
        const auto& enext = mesh.boundary[i];
        Vec2 nu = (eprev.normal * eprev.length + enext.normal * enext.length).normalized();
        const Vec2& p = mesh.vertices[static_cast<std::size_t>(v)];
        fe[static_cast<std::size_t>(i)] = beta * e.dot(nu) * phase(p);
    }
    VecXc df = fh - fe;
    double fnum = (df.adjoint() * (Mb.cast<cplx>() * df))(0, 0).real();
    double fden = (fe.adjoint() * (Mb.cast<cplx>() * fe))(0, 0).real();
    CHECK(std::sqrt(fnum / fden) < 0.05);
}

TEST_CASE("solution matches the dense finite-difference oracle") {
    geometry::Mesh mesh = th::disk_mesh(0.12);
    double theta = 0.25;
    FiberContext ctx(theta, 3);
    PotentialField V = potential_random(mesh, 3, 1, 2, 0.5, 0.5);

    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<cplx> cm(3);
    std::vector<Vec2> wm(3);
    for (int m = 0; m < 3; ++m) {
        cm[static_cast<std::size_t>(m)] = cplx(uni(gen), uni(gen));
        double ang = pi * uni(gen);
        wm[static_cast<std::size_t>(m)] = 0.8 * Vec2(std::cos(ang), std::sin(ang));
    }
    auto gfun = [&](double x1, const Vec2& p) {
        cplx acc(0.0, 0.0);
        for (int m = -1; m <= 1; ++m)
            acc += cm[static_cast<std::size_t>(m + 1)] * std::exp(wm[static_cast<std::size_t>(m + 1)].dot(p)) *
                   std::exp(cplx(0.0, (theta + 2.0 * pi * m) * x1));
        return acc;
    };

    DirichletData g;
    g.basis = face_interior_basis(mesh, th::whole_boundary(mesh), 1, 0);
    g.coeff = VecXc::Zero(g.basis.dim());
    for (int m = -1; m <= 1; ++m)
        g.coeff += full_boundary_coeff(mesh, g.basis, m, [&](const Vec2& p) {
            return cm[static_cast<std::size_t>(m + 1)] * std::exp(wm[static_cast<std::size_t>(m + 1)].dot(p));
        });
    FiberSolution sol = solve_fibered_bvp(mesh, ctx, V, g);

    th::PotentialOnMesh vf(mesh, V);
    oracle::DenseGrid grid = oracle::DenseGrid::build(mesh.spec, 24, 27);
    oracle::FdSolution fd = oracle::fd_solve(
        grid, theta, [&](double x1, const Vec2& p) { return vf(x1, p); }, gfun);

    fem::Locator loc(mesh);
    double num = 0.0, den = 0.0;
    for (int j = 0; j < grid.n1; ++j) {
        double x1 = static_cast<double>(j) / grid.n1;
        for (std::size_t q = 0; q < grid.points.size(); ++q) {
            cplx ufem(0.0, 0.0);
            for (int r = 0; r < ctx.n_modes(); ++r) {
                VecXc row = sol.field.coeff.row(r).transpose();
                ufem += loc.eval(row, grid.points[q]) *
                        std::exp(cplx(0.0, ctx.beta(ctx.mode(r)) * x1));
            }
            cplx ufd = fd.values(j, static_cast<Eigen::Index>(q));
            num += std::norm(ufem - ufd);
            den += std::norm(ufd);
        }
    }
    CHECK(std::sqrt(num / den) < 0.04);  // coarse canary; the gate re-runs finer at 2%
}

TEST_CASE("potential reality is enforced") {
    geometry::Mesh mesh = th::disk_mesh(0.2);
    PotentialField V = potential_axial_cosine(mesh, 0.1, 0.3, Vec2(0.0, 0.0), 0.5);
    V.modes(0, 3) += cplx(0.0, 0.4);  // breaks conj symmetry between rows -1 and +1
    FiberContext ctx(0.3, 2);
    DirichletData g;
    g.basis = face_interior_basis(mesh, th::whole_boundary(mesh), 1, 0);
    g.coeff = VecXc::Zero(g.basis.dim());
    CHECK_THROWS_AS(solve_fibered_bvp(mesh, ctx, V, g), ValidationError);
}

TEST_CASE("admissibility verdicts") {
    geometry::Mesh mesh = th::disk_mesh(0.1);
    FiberContext ctx(0.0, 1);
    double cw = geometry::poincare_constant(mesh);

    CHECK(check_admissible(potential_zero(mesh), ctx, mesh, cw).admissible);
    CHECK(check_admissible(potential_constant(mesh, 2.0), ctx, mesh, cw).admissible);
    // negative part beyond the spectral floor C^2 + 1
    AdmissibilityReport bad =
        check_admissible(potential_constant(mesh, -(cw * cw + 1.5)), ctx, mesh, cw);
    CHECK_FALSE(bad.admissible);
    CHECK(bad.sup_neg == doctest::Approx(cw * cw + 1.5));
}

TEST_CASE("DN map difference: zero, symmetry, homogeneity") {
    geometry::Mesh mesh = th::disk_mesh(0.15);
    FiberContext ctx(0.4, 2);
    geometry::BoundaryPartition part = geometry::make_partition(mesh, Vec2(1.0, 0.0), 0.5);
    PartialDNMap A = assemble_partial_dn(mesh, ctx, potential_zero(mesh), part, 1, 0);
    PartialDNMap B = assemble_partial_dn(mesh, ctx, potential_constant(mesh, 0.4), part, 1, 0);

    CHECK(dn_difference_norm(A, A) == 0.0);
    double d1 = dn_difference_norm(A, B), d2 = dn_difference_norm(B, A);
    CHECK(d1 > 0.0);
    CHECK(std::abs(d1 - d2) < 1e-10 * d1);

    // scaling the gap scales the norm
    PartialDNMap C = B;
    C.matrix = A.matrix + 3.0 * (B.matrix - A.matrix);
    CHECK(dn_difference_norm(A, C) == doctest::Approx(3.0 * d1).epsilon(1e-8));

    // dense and iterated branches agree
    double dense = dn_difference_norm(A, B, 1 << 30);
    double power = dn_difference_norm(A, B, 1);
    CHECK(std::abs(dense - power) < 1e-6 * dense);
}

TEST_CASE("reciprocity of the DN form at theta 0") {
    geometry::Mesh mesh = th::disk_mesh(0.1);
    FiberContext ctx(0.0, 0);
    PartialDNMap A = assemble_partial_dn(mesh, ctx, potential_constant(mesh, 0.7),
                                         th::full_partition(mesh), 0, 0);
    SpMat Mb = fem::boundary_mass_full(mesh);
    // rows/cols of A.matrix are ordered like boundary_vertices; Mb is nv x nv
    const auto& bv = mesh.boundary_vertices;
    MatXc Mbb(bv.size(), bv.size());
    for (std::size_t i = 0; i < bv.size(); ++i)
        for (std::size_t j = 0; j < bv.size(); ++j)
            Mbb(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                Mb.coeff(bv[i], bv[j]);
    MatXc Bform = Mbb * A.matrix;
    CHECK((Bform - Bform.transpose()).norm() < 1e-8 * Bform.norm());
}

TEST_CASE("constant-potential disk DN matches the Bessel quotient") {
    geometry::Mesh mesh = th::disk_mesh(0.08);
    double theta = 0.3, c = 1.0;
    FiberContext ctx(theta, 0);
    PartialDNMap A = assemble_partial_dn(mesh, ctx, potential_constant(mesh, c),
                                         th::full_partition(mesh), 0, 0);
    SpMat Mb = fem::boundary_mass_full(mesh);
    const auto& bv = mesh.boundary_vertices;
    MatX Mbb(bv.size(), bv.size());
    for (std::size_t i = 0; i < bv.size(); ++i)
        for (std::size_t j = 0; j < bv.size(); ++j)
            Mbb(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                Mb.coeff(bv[i], bv[j]);

    for (int m = 0; m <= 2; ++m) {
        VecXc f(static_cast<Eigen::Index>(bv.size()));
        for (std::size_t i = 0; i < bv.size(); ++i) {
            const Vec2& p = mesh.vertices[static_cast<std::size_t>(bv[i])];
            f[static_cast<Eigen::Index>(i)] = std::exp(cplx(0.0, m * std::atan2(p.y(), p.x())));
        }
        VecXc lam = A.matrix * f;
        cplx num = f.adjoint() * (Mbb.cast<cplx>() * lam);
        cplx den = f.adjoint() * (Mbb.cast<cplx>() * f);
        double est = (num / den).real();
        double ref = oracle::disk_dn_analytic(1.0, theta, c, m);
        CHECK(std::abs(est - ref) < 0.02 * std::abs(ref));
    }
}

TEST_CASE("DN gap is first order in the potential perturbation") {
    geometry::Mesh mesh = th::disk_mesh(0.15);
    FiberContext ctx(0.3, 2);
    geometry::BoundaryPartition part = geometry::make_partition(mesh, Vec2(1.0, 0.0), 0.5);
    PotentialField V1 = potential_bump(mesh, 0.2, 0.4, Vec2(0.1, -0.1), 0.6);
    PotentialField W = potential_constant(mesh, 1.0);
    PartialDNMap dn1 = assemble_partial_dn(mesh, ctx, V1, part, 1, 0);

    std::vector<double> ratio;
    for (double s : {1e-3, 1e-2, 1e-1}) {
        PartialDNMap dn2 = assemble_partial_dn(mesh, ctx, th::potential_sum(V1, W, s), part, 1, 0);
        ratio.push_back(dn_difference_norm(dn1, dn2) / s);
    }
    CHECK(std::abs(ratio[0] / ratio[1] - 1.0) < 0.1);
}

TEST_CASE("x1-independent potentials decouple: sweep mirrors under theta -> 2pi - theta") {
    geometry::Mesh mesh = th::disk_mesh(0.15);
    geometry::BoundaryPartition part = geometry::make_partition(mesh, Vec2(1.0, 0.0), 0.5);
    PotentialField V1 = potential_zero(mesh);
    PotentialField V2 = potential_bump(mesh, 0.0, 0.5, Vec2(0.0, 0.2), 0.6);

    auto grid_of = [](int n) {
        std::vector<double> g;
        for (int j = 0; j < n; ++j) g.push_back(2.0 * pi * j / n);
        return g;
    };
    FiberSweep s8 = dn_sup_over_fibers(mesh, V1, V2, part, grid_of(8), 2, 1);
    double hi = *std::max_element(s8.values.begin(), s8.values.end());
    CHECK(s8.sup == doctest::Approx(hi));

    // the fiber at theta splits into blocks at frequencies theta + 2 pi k, so
    // theta -> 2 pi - theta mirrors the frequency set; gamma agrees up to the
    // window-edge block, whose contribution is exponentially suppressed
    for (std::size_t j = 1; j < 4; ++j)
        CHECK(std::abs(s8.values[j] - s8.values[8 - j]) < 1e-6 * s8.sup);
    // the dominant block sits at the smallest |theta + 2 pi k|, so the theta=0
    // fiber (which contains frequency zero) tops the sweep
    CHECK(s8.values[0] == doctest::Approx(hi));

    FiberSweep s16 = dn_sup_over_fibers(mesh, V1, V2, part, grid_of(16), 2, 1);
    CHECK(std::abs(s16.sup - s8.sup) < 0.05 * s8.sup);
}

TEST_CASE("partial DN container round-trips") {
    geometry::Mesh mesh = th::disk_mesh(0.18);
    FiberContext ctx(0.9, 2);
    geometry::BoundaryPartition part = geometry::make_partition(mesh, Vec2(0.0, 1.0), 0.6);
    PartialDNMap A = assemble_partial_dn(mesh, ctx, potential_constant(mesh, 0.3), part, 1, 0);
    auto path = std::filesystem::temp_directory_path() / "cwg_dn_roundtrip.bin";
    write_partial_dn(A, path.string());
    PartialDNMap back = read_partial_dn(path.string());
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
    CHECK((back.matrix - A.matrix).norm() == 0.0);
    CHECK((back.gram - A.gram).norm() == 0.0);
    CHECK(back.in_basis.vertices == A.in_basis.vertices);
    CHECK(back.out_vertices == A.out_vertices);
    CHECK(back.theta == A.theta);
    CHECK(back.mesh_hash == A.mesh_hash);
    CHECK(dn_difference_norm(back, A) == 0.0);
}

TEST_CASE("apply agrees with the assembled matrix") {
    geometry::Mesh mesh = th::disk_mesh(0.2);
    FiberContext ctx(0.2, 1);
    geometry::BoundaryPartition part = geometry::make_partition(mesh, Vec2(1.0, 0.0), 0.5);
    PartialDNMap A = assemble_partial_dn(mesh, ctx, potential_zero(mesh), part, 1, 0);
    VecXc x = VecXc::Random(A.in_basis.dim());
    CHECK((A.apply(x) - A.matrix * x).norm() < 1e-14 * (A.matrix * x).norm());
}
