#include <cmath>
#include <filesystem>
#include <random>

#include "cwg/fem.hpp"
#include "cwg/spectral.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cwg;
using namespace cwg::spectral;

namespace {

ModeExpansion random_expansion(const FiberContext& ctx, const geometry::Mesh& mesh,
                               std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    ModeExpansion m;
    m.theta = ctx.theta;
    m.K = ctx.K;
    m.center = ctx.center;
    m.mesh_hash = mesh.content_hash();
    m.coeff = MatXc(ctx.n_modes(), static_cast<Eigen::Index>(mesh.n_vertices()));
    for (Eigen::Index r = 0; r < m.coeff.rows(); ++r)
        for (Eigen::Index v = 0; v < m.coeff.cols(); ++v) m.coeff(r, v) = cplx(g(gen), g(gen));
    return m;
}

}  // namespace

TEST_CASE("projection isolates single modes") {
    geometry::Mesh mesh = th::disk_mesh(0.2);
    FiberContext ctx(0.7, 2);
    const auto nv = static_cast<Eigen::Index>(mesh.n_vertices());

    // v = e^{i theta x1} g(x') lands in mode 0; e^{i(theta+2pi)x1} g in mode 1
    for (int target : {0, 1}) {
        CellField v = CellField::zero(ctx, mesh);
        VecXc g(nv);
        for (Eigen::Index q = 0; q < nv; ++q)
            g[q] = cplx(mesh.vertices[static_cast<std::size_t>(q)].x(), 0.3);
        for (int j = 0; j <= ctx.n_axial; ++j)
            v.values.row(j) = std::exp(cplx(0.0, ctx.beta(target) * ctx.x1(j))) * g.transpose();
        ModeExpansion m = fiber_project(ctx, mesh, v);
        for (int r = 0; r < ctx.n_modes(); ++r) {
            double mag = m.coeff.row(r).norm();
            if (ctx.mode(r) == target)
                CHECK((m.coeff.row(r) - g.transpose()).norm() < 1e-12 * g.norm());
            else
                CHECK(mag < 1e-12 * g.norm());
        }
    }
}

TEST_CASE("synthesis round-trip and zero cases") {
    geometry::Mesh mesh = th::disk_mesh(0.2);
    FiberContext ctx(1.3, 3);

    ModeExpansion zero = random_expansion(ctx, mesh, 5);
    zero.coeff.setZero();
    CellField z = fiber_synthesize(ctx, mesh, zero);
    CHECK(z.values.norm() == 0.0);

    // single mode k=2 with g = 1: the field is the pure phase e^{i(theta+4pi)x1}
    ModeExpansion one = zero;
    one.coeff.row(one.K + 2 - one.center).setOnes();
    CellField f = fiber_synthesize(ctx, mesh, one);
    for (int j = 0; j <= ctx.n_axial; ++j) {
        cplx expect = std::exp(cplx(0.0, ctx.beta(2) * ctx.x1(j)));
        CHECK(std::abs(f.values(j, 0) - expect) < 1e-13);
    }

    ModeExpansion m = random_expansion(ctx, mesh, 17);
    CellField v = fiber_synthesize(ctx, mesh, m);
    ModeExpansion back = fiber_project(ctx, mesh, v);
    CHECK((back.coeff - m.coeff).cwiseAbs().maxCoeff() < 1e-12 * m.coeff.cwiseAbs().maxCoeff());
}

TEST_CASE("parseval on band-limited fields") {
    geometry::Mesh mesh = th::disk_mesh(0.18);
    FiberContext ctx(0.4, 4, 0, 24);
    ModeExpansion m = random_expansion(ctx, mesh, 23);
    CellField v = fiber_synthesize(ctx, mesh, m);

    SpMat M = fem::mass(mesh);
    double mode_sq = 0.0;
    for (int r = 0; r < ctx.n_modes(); ++r) {
        VecXc row = m.coeff.row(r).transpose();
        mode_sq += (row.adjoint() * (M.cast<cplx>() * row))(0, 0).real();
    }
    double nrm = cell_norm(ctx, mesh, v);
    CHECK(std::abs(nrm * nrm - mode_sq) < 1e-10 * mode_sq);
}

TEST_CASE("mode operator applies the per-mode weak identity") {
    geometry::Mesh mesh = th::disk_mesh(0.18);
    FiberContext ctx(0.9, 1);
    ModeExpansion m = random_expansion(ctx, mesh, 31);
    ModeExpansion out = mode_operator_apply(ctx, mesh, m);

    SpMat K = fem::stiffness(mesh);
    SpMat M = fem::mass(mesh);
    for (int r = 0; r < ctx.n_modes(); ++r) {
        double b = ctx.beta(ctx.mode(r));
        VecXc x = m.coeff.row(r).transpose();
        VecXc y = out.coeff.row(r).transpose();
        VecXc lhs = M.cast<cplx>() * (y - b * b * x);
        VecXc rhs = K.cast<cplx>() * x;
        CHECK((lhs - rhs).norm() < 1e-10 * rhs.norm());
    }
}

TEST_CASE("mode operator on the constant field is the squared frequency") {
    geometry::Mesh mesh = th::disk_mesh(0.18);
    FiberContext ctx(0.9, 1);
    ModeExpansion m = random_expansion(ctx, mesh, 1);
    m.coeff.setZero();
    int r1 = m.K + 1 - m.center;  // mode k=1
    m.coeff.row(r1).setOnes();
    ModeExpansion out = mode_operator_apply(ctx, mesh, m);
    double b2 = ctx.beta(1) * ctx.beta(1);
    CHECK((out.coeff.row(r1).array() - b2).abs().maxCoeff() < 1e-9 * b2);
}

TEST_CASE("mode operator reproduces the transverse eigenvalue") {
    geometry::Mesh mesh = th::disk_mesh(0.1);
    th::Eigenpair ep = th::first_dirichlet_eigenpair(mesh);
    FiberContext ctx(0.0, 1);
    ModeExpansion m;
    m.theta = 0.0;
    m.K = 1;
    m.center = 0;
    m.mesh_hash = mesh.content_hash();
    m.coeff = MatXc::Zero(3, static_cast<Eigen::Index>(mesh.n_vertices()));
    m.coeff.row(1) = ep.vec.cast<cplx>().transpose();
    ModeExpansion out = mode_operator_apply(ctx, mesh, m);

    // weak identity restricted to interior rows: M(out) = K v = lambda M v
    SpMat M = fem::mass(mesh);
    VecXc v = m.coeff.row(1).transpose();
    VecXc y = out.coeff.row(1).transpose();
    VecXc gap = M.cast<cplx>() * y - ep.lambda * (M.cast<cplx>() * v);
    fem::IndexSplit split(mesh);
    double num = 0.0;
    for (int vi : split.interior) num += std::norm(gap[vi]);
    CHECK(std::sqrt(num) < 1e-8 * (M.cast<cplx>() * v).norm());
}

TEST_CASE("membership test accepts the class and flags trace breaks") {
    geometry::Mesh mesh = th::disk_mesh(0.2);
    FiberContext ctx(1.1, 2);

    ModeExpansion m = random_expansion(ctx, mesh, 77);
    CellField v = fiber_synthesize(ctx, mesh, m);
    MembershipReport ok = quasi_periodic_membership(ctx, mesh, v, std::nullopt, 1e-8);
    CHECK(ok.member);
    CHECK(ok.trace_defect < 1e-10);

    // v = x1 * psi(x'): theta = 0 trace mismatch by psi
    FiberContext ctx0(0.0, 2);
    CellField w = CellField::zero(ctx0, mesh);
    for (int j = 0; j <= ctx0.n_axial; ++j)
        for (Eigen::Index q = 0; q < w.values.cols(); ++q) {
            double b = 1.0 - mesh.vertices[static_cast<std::size_t>(q)].squaredNorm();
            w.values(j, q) = ctx0.x1(j) * b * b;
        }
    MembershipReport bad = quasi_periodic_membership(ctx0, mesh, w, std::nullopt, 1e-8);
    CHECK_FALSE(bad.member);
    CHECK(bad.trace_defect > 1e-2);
}

TEST_CASE("fiber decomposition: small cases and parseval") {
    geometry::Mesh mesh = th::disk_mesh(0.2);
    FiberContext ctx(0.0, 1, 0, 16);

    std::mt19937_64 gen(4);
    std::normal_distribution<double> g(0.0, 1.0);
    auto random_slice = [&] {
        CellField f = CellField::zero(ctx, mesh);
        for (Eigen::Index j = 0; j < f.values.rows(); ++j)
            for (Eigen::Index q = 0; q < f.values.cols(); ++q) f.values(j, q) = cplx(g(gen), g(gen));
        return f;
    };

    // single slice: transform is the slice at every theta
    CellField f0 = random_slice();
    auto single = fbg_forward({f0}, 0, {0.3, 2.1});
    for (const auto& u : single) CHECK((u.values - f0.values).norm() < 1e-13 * f0.values.norm());

    // two equal slices: (1 + e^{-i theta}) g, vanishing at theta = pi
    auto twin = fbg_forward({f0, f0}, 0, {0.0, pi});
    CHECK((twin[0].values - 2.0 * f0.values).norm() < 1e-12 * f0.values.norm());
    CHECK(twin[1].values.norm() < 1e-12 * f0.values.norm());

    // random 5-slice input: grid-mean of the fiber norms equals the slice sum
    std::vector<CellField> slices;
    for (int n = 0; n < 5; ++n) slices.push_back(random_slice());
    std::vector<double> grid;
    const int N = 16;
    for (int j = 0; j < N; ++j) grid.push_back(2.0 * pi * j / N);
    auto fibers = fbg_forward(slices, -2, grid);
    double lhs = 0.0, rhs = 0.0;
    for (const auto& u : fibers) {
        double nu = cell_norm(ctx, mesh, u);
        lhs += nu * nu / N;
    }
    for (const auto& s : slices) {
        double ns = cell_norm(ctx, mesh, s);
        rhs += ns * ns;
    }
    CHECK(std::abs(lhs - rhs) < 1e-10 * rhs);
}

TEST_CASE("mode expansion container round-trips and validates the mesh") {
    geometry::Mesh mesh = th::disk_mesh(0.25);
    FiberContext ctx(0.6, 2);
    ModeExpansion m = random_expansion(ctx, mesh, 9);
    auto path = std::filesystem::temp_directory_path() / "cwg_modes_roundtrip.bin";
    write_mode_expansion(m, path.string());
    ModeExpansion back = read_mode_expansion(path.string(), mesh.content_hash());
    CHECK((back.coeff - m.coeff).norm() == 0.0);
    CHECK(back.theta == m.theta);
    CHECK_THROWS_AS(read_mode_expansion(path.string(), mesh.content_hash() + 1), ValidationError);
    std::filesystem::remove(path);
}
