// Acceptance gate: ten go/no-go checks covering the frequency-pair algebra,
// the Poincare constant, the fibered solver against the finite-difference
// oracle, disk DN eigenvalues, remainder decay, the weighted inequality,
// Fourier-coefficient recovery, the log-log stability ladder, transform
// unitarity, and the conductivity chain.  Each check prints one line;
// the exit status is the number of failures.
//
// Usage: cwg-acceptance [id ...]   (no ids = run all ten)

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cwg/cgo.hpp"
#include "cwg/common.hpp"
#include "cwg/conductivity.hpp"
#include "cwg/fem.hpp"
#include "cwg/forward.hpp"
#include "cwg/geometry.hpp"
#include "cwg/oracle.hpp"
#include "cwg/recon.hpp"
#include "cwg/spectral.hpp"
#include "helpers.hpp"

using namespace cwg;
using cwg::forward::PartialDNMap;
using cwg::forward::PotentialField;
using cwg::spectral::CellField;
using cwg::spectral::FiberContext;
using cwg::spectral::ModeExpansion;

namespace {

std::string fmt(double x) {
    char b[40];
    std::snprintf(b, sizeof b, "%.6g", x);
    return b;
}

struct Gate {
    std::vector<std::string> fails;

    void check(bool ok, const std::string& what) {
        if (!ok) fails.push_back(what);
    }
    void close(double got, double want, double tol, const std::string& what) {
        if (!(std::abs(got - want) <= tol))
            fails.push_back(what + ": got " + fmt(got) + ", want " + fmt(want) + " +- " + fmt(tol));
    }
};

// ---------------------------------------------------------------- 1: algebra

void crit_cgo_algebra(Gate& g) {
    std::mt19937_64 gen(101);
    std::uniform_int_distribution<int> ki(-6, 6);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto dot3 = [](const cgo::Vec3c& a, const cgo::Vec3c& b) {
        return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];  // unconjugated
    };
    int bad = 0;
    std::string first;
    for (int t = 0; t < 10000; ++t) {
        int k = ki(gen);
        double mag = std::exp(std::log(0.3) + std::log(50.0 / 0.3) * uni(gen));
        double ang = 2.0 * pi * uni(gen);
        Vec2 eta = mag * Vec2(std::cos(ang), std::sin(ang));
        double r = 8.0 * uni(gen);
        double theta = 2.0 * pi * uni(gen);
        cgo::CGOParams p = cgo::make_cgo_params(k, eta, r, theta);

        double scale = std::max(1.0, p.tau);
        double tol2 = 1e-12 * scale * scale;
        cgo::Vec3c target(cplx(0.0, 2.0 * pi * k), cplx(0.0, eta.x()), cplx(0.0, eta.y()));
        cgo::Vec3 freq(2.0 * pi * k, eta.x(), eta.y());
        std::string why;
        if (std::abs(dot3(p.zeta1, p.zeta1)) > tol2)
            why = "zeta1 is not null";
        else if (std::abs(dot3(p.zeta2, p.zeta2)) > tol2)
            why = "zeta2 is not null";
        else if ((p.zeta1 + p.zeta2.conjugate() - target).norm() > 1e-12 * scale)
            why = "zeta1 + conj(zeta2) misses i(2 pi k, eta)";
        else if (std::abs(cgo::Vec3(p.zeta1.real()).norm() - p.tau) > 1e-12 * scale ||
                 std::abs(cgo::Vec3(p.zeta1.imag()).norm() - p.tau) > 1e-12 * scale ||
                 std::abs(cgo::Vec3(p.zeta2.real()).norm() - p.tau) > 1e-12 * scale ||
                 std::abs(cgo::Vec3(p.zeta2.imag()).norm() - p.tau) > 1e-12 * scale)
            why = "|Re zeta| or |Im zeta| differs from tau";
        else if (std::abs(cgo::Vec3(p.zeta1.real()).dot(cgo::Vec3(p.zeta1.imag()))) > tol2 ||
                 std::abs(cgo::Vec3(p.zeta2.real()).dot(cgo::Vec3(p.zeta2.imag()))) > tol2)
            why = "Re zeta not orthogonal to Im zeta";
        else if (std::abs(p.tau * p.tau -
                          (0.25 * eta.squaredNorm() + pi * pi * k * k + p.ell.squaredNorm())) > tol2)
            why = "tau^2 identity broken";
        else if (std::abs(p.ell.dot(freq)) > 1e-12 * scale * std::max(1.0, freq.norm()))
            why = "ell not orthogonal to the target frequency";
        else if (std::abs(p.zeta1[0].real()) > 1e-12 * scale)
            why = "axial component of zeta1 not purely imaginary";
        else if (std::abs(p.zeta1[0].imag() - (theta + 2.0 * pi * p.mode1)) > 1e-12 * scale)
            why = "mode1 inconsistent with the axial component";
        else if (std::abs(p.zeta2[0].imag() - (theta + 2.0 * pi * p.mode2)) > 1e-12 * scale)
            why = "mode2 inconsistent with the axial component";
        else if (p.mode2 != p.mode1 - k)
            why = "mode2 != mode1 - k";
        else if (!(p.tau > 2.0 * pi * p.r))
            why = "tau <= 2 pi r";
        if (!why.empty()) {
            if (bad == 0) first = why + " (draw " + std::to_string(t) + ")";
            ++bad;
        }
    }
    g.check(bad == 0, std::to_string(bad) + " of 10000 draws failed; first: " + first);
}

// --------------------------------------------------------------- 2: poincare

void crit_poincare(Gate& g) {
    const double disk_ref = 2.404825557695773;    // first Bessel J0 zero
    const double square_ref = 4.442882938158366;  // pi sqrt(2)

    geometry::CrossSectionSpec dspec = th::disk_spec(0.015);
    geometry::Mesh dmesh = geometry::generate_mesh(dspec);
    double fem_d = geometry::poincare_constant(dmesh);
    double fd_d = oracle::poincare_fd(dspec, 24, 34);
    g.close(fem_d, disk_ref, 1e-3, "disk FEM value");
    g.close(fd_d, disk_ref, 1e-3, "disk FD oracle");
    g.close(fem_d, fd_d, 2e-3, "disk FEM vs oracle");

    geometry::CrossSectionSpec sspec = th::square_spec(0.015, 1.0);
    geometry::Mesh smesh = geometry::generate_mesh(sspec);
    double fem_s = geometry::poincare_constant(smesh);
    double fd_s = oracle::poincare_fd(sspec, 16, 24);
    g.close(fem_s, square_ref, 1e-3, "square FEM value");
    g.close(fd_s, square_ref, 1e-3, "square FD oracle");
    g.close(fem_s, fd_s, 2e-3, "square FEM vs oracle");
}

// ----------------------------------------------------- 3: forward vs oracle

VecXc boundary_mode_coeff(const geometry::Mesh& mesh, const forward::BoundaryBasis& basis,
                          int mode, const std::function<cplx(const Vec2&)>& f) {
    VecXc coeff = VecXc::Zero(basis.dim());
    int row = mode - basis.center + basis.K;
    for (std::size_t s = 0; s < basis.vertices.size(); ++s)
        coeff[row * static_cast<int>(basis.vertices.size()) + static_cast<int>(s)] =
            f(mesh.vertices[static_cast<std::size_t>(basis.vertices[s])]);
    return coeff;
}

void crit_forward_oracle(Gate& g) {
    geometry::Mesh mesh = th::disk_mesh(0.07);
    double theta = 0.35;
    FiberContext ctx(theta, 3);
    oracle::DenseGrid grid = oracle::DenseGrid::build(mesh.spec, 36, 41);
    fem::Locator loc(mesh);

    std::mt19937_64 gen(23);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        PotentialField V = forward::potential_random(mesh, 40 + trial, 1, 3, 0.8, 1.0);

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
                acc += cm[static_cast<std::size_t>(m + 1)] *
                       std::exp(wm[static_cast<std::size_t>(m + 1)].dot(p)) *
                       std::exp(cplx(0.0, (theta + 2.0 * pi * m) * x1));
            return acc;
        };

        forward::DirichletData gd;
        gd.basis = forward::face_interior_basis(mesh, th::whole_boundary(mesh), 1, 0);
        gd.coeff = VecXc::Zero(gd.basis.dim());
        for (int m = -1; m <= 1; ++m)
            gd.coeff += boundary_mode_coeff(mesh, gd.basis, m, [&](const Vec2& p) {
                return cm[static_cast<std::size_t>(m + 1)] *
                       std::exp(wm[static_cast<std::size_t>(m + 1)].dot(p));
            });
        forward::FiberSolution sol = forward::solve_fibered_bvp(mesh, ctx, V, gd);

        th::PotentialOnMesh vf(mesh, V);
        oracle::FdSolution fd = oracle::fd_solve(
            grid, theta, [&](double x1, const Vec2& p) { return vf(x1, p); }, gfun);

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
                num += std::norm(ufem - fd.values(j, static_cast<Eigen::Index>(q)));
                den += std::norm(fd.values(j, static_cast<Eigen::Index>(q)));
            }
        }
        double rel = std::sqrt(num / den);
        g.check(rel <= 0.02, "potential " + std::to_string(trial) + ": relative L2 gap " +
                                 fmt(rel) + " above 2%");
    }
}

// ------------------------------------------------- 4: disk DN eigenvalues

void crit_disk_dn(Gate& g) {
    geometry::Mesh mesh = th::disk_mesh(0.04);
    geometry::BoundaryPartition part = th::full_partition(mesh);
    double theta = 0.3;
    FiberContext ctx(theta, 0);

    for (double c : {1.0, -8.0}) {
        PotentialField V = forward::potential_constant(mesh, c, 16.0);
        PartialDNMap dn = forward::assemble_partial_dn(mesh, ctx, V, part, 0, 0);
        const auto& inv = dn.in_basis.vertices;
        const auto& outv = dn.out_vertices;
        MatXc Mb = dn.out_mass.cast<cplx>();

        for (int m = 0; m <= 4; ++m) {
            VecXc tin(inv.size()), tout(outv.size());
            for (std::size_t s = 0; s < inv.size(); ++s) {
                const Vec2& p = mesh.vertices[static_cast<std::size_t>(inv[s])];
                tin[static_cast<Eigen::Index>(s)] =
                    std::exp(cplx(0.0, m * std::atan2(p.y(), p.x())));
            }
            for (std::size_t s = 0; s < outv.size(); ++s) {
                const Vec2& p = mesh.vertices[static_cast<std::size_t>(outv[s])];
                tout[static_cast<Eigen::Index>(s)] =
                    std::exp(cplx(0.0, m * std::atan2(p.y(), p.x())));
            }
            VecXc flux = dn.matrix * tin;
            double lam = ((tout.adjoint() * (Mb * flux))(0, 0) /
                          (tout.adjoint() * (Mb * tout))(0, 0))
                             .real();
            double ref = oracle::disk_dn_analytic(1.0, theta, c, m);
            g.check(std::abs(lam - ref) <= 0.01 * std::abs(ref),
                    "c=" + fmt(c) + " m=" + std::to_string(m) + ": FEM " + fmt(lam) +
                        " vs analytic " + fmt(ref));
        }
    }
}

// -------------------------------------------------------------- 5: decay

void crit_cgo_decay(Gate& g) {
    geometry::Mesh mesh = th::disk_mesh(0.05);
    PotentialField V = forward::potential_constant(mesh, 1.0);
    std::vector<double> taus{25.0, 50.0, 100.0, 200.0};
    Vec2 eta(0.0, 2.0 * pi);

    cgo::DecayLadder sm = cgo::decay_ladder(mesh, V, 1, eta, 0.4, taus, false, 0.25);
    for (double n : sm.norm) g.check(n > 0.0 && std::isfinite(n), "smooth rung norm " + fmt(n));
    g.check(sm.slope >= -1.25 && sm.slope <= -0.75,
            "smooth remainder slope " + fmt(sm.slope) + " outside [-1.25, -0.75]");

    cgo::DecayLadder va = cgo::decay_ladder(mesh, V, 1, eta, 0.4, taus, true, 0.25);
    for (double n : va.norm) g.check(n > 0.0 && std::isfinite(n), "vanishing rung norm " + fmt(n));
    g.check(va.slope <= -0.3, "vanishing-family slope " + fmt(va.slope) + " above -0.3");
}

// ----------------------------------------------------------- 6: carleman

void crit_carleman(Gate& g) {
    geometry::Mesh mesh = th::disk_mesh(0.05);
    PotentialField V = forward::potential_bump(mesh, 0.2, 0.5, Vec2(0.1, 0.0), 0.5);
    std::vector<cgo::CarlemanField> fields = cgo::random_carleman_fields(33, 20, 1.0);
    std::vector<double> taus{30.0, 60.0, 120.0};
    std::vector<cgo::CarlemanRow> rows =
        cgo::carleman_empirical(V, mesh, Vec2(1.0, 0.0), 0.3, taus, fields);

    g.check(rows.size() == taus.size(), "row count mismatch");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        g.check(rows[i].ratios.size() == fields.size(), "ratio count mismatch");
        g.check(rows[i].min_ratio > 0.0,
                "tau=" + fmt(rows[i].tau) + ": floor " + fmt(rows[i].min_ratio) + " not positive");
        if (i > 0)
            g.check(rows[i].min_ratio >= rows[i - 1].min_ratio * (1.0 - 1e-9),
                    "floor decreased from tau=" + fmt(rows[i - 1].tau) + " (" +
                        fmt(rows[i - 1].min_ratio) + ") to tau=" + fmt(rows[i].tau) + " (" +
                        fmt(rows[i].min_ratio) + ")");
    }
}

// ----------------------------------------------------------- 7: recovery

void crit_recovery(Gate& g) {
    geometry::Mesh mesh = th::disk_mesh(0.06);
    Vec2 xi0(1.0, 0.0);
    geometry::BoundaryPartition part = geometry::make_partition(mesh, xi0, pi / 4.0);
    double eps = geometry::choose_epsilon(mesh, part, xi0);

    PotentialField V1 = forward::potential_zero(mesh);
    PotentialField V2 = forward::potential_axial_cosine(mesh, 0.0, 0.12, Vec2(0.0, 0.0), 0.5);

    recon::TauPolicy pol;
    pol.floor = 8.0;
    pol.cap = 16.0;
    pol.c_hat = 1.0;

    recon::CoefficientRequest req;
    req.k = 1;
    req.eta = Vec2(0.0, 2.0 * pi);
    req.theta = 0.3;
    req.xi0 = xi0;
    req.eps = eps;
    req.tau_target = recon::tau_for_gamma(0.0, pol);  // exact data: policy cap

    recon::FrequencySample s = recon::estimate_fourier_coefficient(mesh, part, V1, V2, req);
    cplx target = 0.5 * 0.12 * oracle::bump_ft(Vec2(0.0, 0.0), 0.5, Vec2(0.0, 2.0 * pi));
    double rel = std::abs(s.estimate - target) / std::abs(target);
    g.check(rel <= 0.10, "coefficient estimate " + fmt(std::abs(s.estimate)) + " vs target " +
                             fmt(std::abs(target)) + ": relative gap " + fmt(rel) + " above 10%");

    recon::FrequencySample null_s = recon::estimate_fourier_coefficient(mesh, part, V2, V2, req);
    g.check(std::abs(null_s.estimate) <= 1e-6 * std::abs(target),
            "identical potentials leak " + fmt(std::abs(null_s.estimate)));
}

// ----------------------------------------------------------- 8: stability

void crit_stability(Gate& g) {
    geometry::Mesh mesh = th::disk_mesh(0.1);
    geometry::BoundaryPartition part = th::full_partition(mesh);
    PotentialField V1 = forward::potential_constant(mesh, 0.3);
    PotentialField W = forward::potential_axial_cosine(mesh, 0.0, 1.0, Vec2(0.1, 0.1), 0.5);
    auto family = [&](double s) { return th::potential_sum(V1, W, s); };

    recon::StabilityConfig cfg;
    cfg.scales = {0.002, 0.008, 0.032, 0.128};  // geometric ladder, ratio 4
    cfg.gamma_star = 1e-8;
    cfg.theta = 0.3;
    cfg.K = 3;
    cfg.in_K = 2;

    recon::StabilityReport rep = recon::run_stability_experiment(mesh, part, V1, family, cfg);
    g.check(rep.warning.empty(), "warning: " + rep.warning);
    g.check(rep.rows.size() == cfg.scales.size(), "row count mismatch");
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const recon::StabilityRow& row = rep.rows[i];
        g.check(!row.skipped, "scale " + fmt(row.s) + " skipped");
        g.check(row.ratio > 0.0, "scale " + fmt(row.s) + ": nonpositive ratio");
        if (i > 0) {
            g.check(row.gamma > rep.rows[i - 1].gamma, "gamma not increasing at s=" + fmt(row.s));
            g.check(row.delta > rep.rows[i - 1].delta, "delta not increasing at s=" + fmt(row.s));
        }
        g.check(row.delta <= rep.fitted_C * row.phi * (1.0 + 1e-12),
                "fitted constant violated at s=" + fmt(row.s));
    }
    g.check(rep.fitted_C > 0.0, "fitted constant not positive");
    g.check(rep.spread < 10.0,
            "ratio spread " + fmt(rep.spread) + " spans a decade; no single constant fits");
}

// ----------------------------------------------------------- 9: unitarity

void crit_unitarity(Gate& g) {
    geometry::Mesh mesh = th::disk_mesh(0.12);
    FiberContext ctx(0.0, 3);
    const int nv = static_cast<int>(mesh.n_vertices());
    const int S = 5, n0 = -2, N = 16;

    std::mt19937_64 gen(77);
    std::normal_distribution<double> gauss;
    std::vector<CellField> slices;
    for (int n = 0; n < S; ++n) {
        CellField f = CellField::zero(ctx, mesh);
        for (Eigen::Index i = 0; i < f.values.rows(); ++i)
            for (Eigen::Index j = 0; j < f.values.cols(); ++j)
                f.values(i, j) = cplx(gauss(gen), gauss(gen));
        slices.push_back(f);
    }
    std::vector<double> grid(N);
    for (int j = 0; j < N; ++j) grid[static_cast<std::size_t>(j)] = 2.0 * pi * j / N;

    std::vector<CellField> fibers = spectral::fbg_forward(slices, n0, grid);
    g.check(fibers.size() == grid.size(), "fiber count mismatch");

    double sum_f = 0.0, sum_u = 0.0;
    for (const CellField& f : slices) {
        double n = spectral::cell_norm(ctx, mesh, f);
        sum_f += n * n;
    }
    for (const CellField& u : fibers) {
        double n = spectral::cell_norm(ctx, mesh, u);
        sum_u += n * n;
    }
    sum_u /= N;
    g.check(std::abs(sum_u - sum_f) <= 1e-10 * sum_f,
            "Parseval gap " + fmt(std::abs(sum_u - sum_f) / sum_f));

    // inversion: f_n = (1/N) sum_theta e^{i n theta} (Uf)_theta
    for (int n = 0; n < S; ++n) {
        MatXc rec = MatXc::Zero(slices[0].values.rows(), nv);
        for (int j = 0; j < N; ++j)
            rec += std::exp(cplx(0.0, (n0 + n) * grid[static_cast<std::size_t>(j)])) *
                   fibers[static_cast<std::size_t>(j)].values;
        rec /= N;
        double rel = (rec - slices[static_cast<std::size_t>(n)].values).norm() /
                     slices[static_cast<std::size_t>(n)].values.norm();
        g.check(rel <= 1e-10, "slice " + std::to_string(n) + " inversion error " + fmt(rel));
    }

    // band-limited projection round trip and mode-sum Parseval
    FiberContext ctx2(0.4, 3);
    ModeExpansion me;
    me.theta = ctx2.theta;
    me.K = ctx2.K;
    me.center = 0;
    me.mesh_hash = mesh.content_hash();
    me.coeff = MatXc(ctx2.n_modes(), nv);
    for (Eigen::Index i = 0; i < me.coeff.rows(); ++i)
        for (Eigen::Index j = 0; j < me.coeff.cols(); ++j)
            me.coeff(i, j) = cplx(gauss(gen), gauss(gen));

    CellField v = spectral::fiber_synthesize(ctx2, mesh, me);
    ModeExpansion back = spectral::fiber_project(ctx2, mesh, v);
    double rel = (back.coeff - me.coeff).norm() / me.coeff.norm();
    g.check(rel <= 1e-10, "projection round trip error " + fmt(rel));

    SpMat M = fem::mass(mesh);
    double mode_sum = 0.0;
    for (Eigen::Index r = 0; r < me.coeff.rows(); ++r) {
        VecXc row = me.coeff.row(r).transpose();
        mode_sum += ((row.adjoint() * (M.cast<cplx>() * row))(0, 0)).real();
    }
    double cn = spectral::cell_norm(ctx2, mesh, v);
    g.check(std::abs(cn * cn - mode_sum) <= 1e-10 * mode_sum,
            "mode-sum Parseval gap " + fmt(std::abs(cn * cn - mode_sum) / mode_sum));
}

// -------------------------------------------------------- 10: conductivity

void crit_conductivity(Gate& g) {
    // weighted map against the direct divergence-form assembly
    geometry::Mesh mesh = th::disk_mesh(0.08);
    geometry::BoundaryPartition part = th::full_partition(mesh);
    double theta = 0.3;

    conductivity::ConductivityField a = conductivity::conductivity_exponential(mesh, 0.4);
    conductivity::LiouvilleResult lr = conductivity::liouville_potential(a, mesh);
    g.check(lr.within_bounds, "exponential profile leaves the declared bounds");

    FiberContext ctx(theta, 1);
    PartialDNMap dn = forward::assemble_partial_dn(mesh, ctx, lr.V, part, 1, 0);
    PartialDNMap sg = conductivity::sigma_from_lambda(mesh, a, dn, 0);

    std::vector<int> bslot(mesh.n_vertices(), -1);
    for (std::size_t i = 0; i < mesh.boundary_vertices.size(); ++i)
        bslot[static_cast<std::size_t>(mesh.boundary_vertices[i])] = static_cast<int>(i);
    auto afun = [](const Vec2& p) { return std::exp(0.4 * p.x()); };

    const int nin = static_cast<int>(sg.in_basis.vertices.size());
    const int nout = static_cast<int>(sg.out_vertices.size());
    MatXc O = MatXc::Zero(sg.matrix.rows(), sg.matrix.cols());
    for (int mr = 0; mr < sg.in_basis.n_modes(); ++mr) {
        double beta = theta + 2.0 * pi * sg.in_basis.mode(mr);
        for (int s = 0; s < nin; ++s) {
            int slot = bslot[static_cast<std::size_t>(sg.in_basis.vertices[static_cast<std::size_t>(s)])];
            VecX col = oracle::divergence_dn_column(mesh, afun, beta, slot);
            for (int t = 0; t < nout; ++t) {
                int oslot = bslot[static_cast<std::size_t>(sg.out_vertices[static_cast<std::size_t>(t)])];
                O(mr * nout + t, mr * nin + s) = col[oslot];
            }
        }
    }
    double rel = (sg.matrix - O).norm() / O.norm();
    g.check(rel <= 0.02, "weighted map vs divergence assembly: relative gap " + fmt(rel));

    // stability chain on a bump family over an exponential base
    geometry::Mesh mesh9 = th::disk_mesh(0.09);
    geometry::BoundaryPartition part9 = th::full_partition(mesh9);
    conductivity::ConductivityField a1 = conductivity::conductivity_exponential(mesh9, 0.3);
    auto family = [&](double s) {
        return conductivity::conductivity_with_bump(mesh9, a1, 0.5 * s, Vec2(0.1, -0.05), 0.5, 0.0);
    };

    conductivity::CondStabilityConfig cfg;
    cfg.scales = {0.015625, 0.0625, 0.25};
    cfg.theta = theta;
    cfg.K = 3;
    cfg.in_K = 2;
    cfg.pad = 1;
    cfg.n_axial = 24;

    conductivity::CondStabilityReport rep =
        conductivity::conductivity_stability(mesh9, part9, a1, family, cfg);
    g.check(rep.warning.empty(), "warning: " + rep.warning);
    g.check(rep.rows.size() == cfg.scales.size(), "row count mismatch");
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const conductivity::CondStabilityRow& row = rep.rows[i];
        g.check(!row.skipped, "scale " + fmt(row.s) + " skipped");
        g.check(row.g4_ok, "scale " + fmt(row.s) + ": factorization inequality violated");
        g.check(row.factor_ok, "scale " + fmt(row.s) + ": H1 factor bound violated");
        g.check(row.ratio > 0.0, "scale " + fmt(row.s) + ": nonpositive ratio");
        if (i > 0)
            g.check(row.sigma_norm > rep.rows[i - 1].sigma_norm,
                    "weighted gap not increasing at s=" + fmt(row.s));
    }
    g.check(rep.fitted_C > 0.0, "fitted constant not positive");
    g.check(rep.spread < 10.0, "ratio spread " + fmt(rep.spread) + " spans a decade");
    g.check(rep.alpha.direct_h1 > 0.0, "alpha cross-check degenerate");
    g.check(rep.alpha.gap_rel <= 0.02,
            "alpha cross-check gap " + fmt(rep.alpha.gap_rel) + " above 2%");
}

struct Criterion {
    int id;
    const char* label;
    double limit_s;  // 0 = no stated wall-clock bound
    void (*body)(Gate&);
};

const Criterion kCriteria[] = {
    {1, "cgo-frequency-algebra", 5.0, crit_cgo_algebra},
    {2, "poincare-constant", 30.0, crit_poincare},
    {3, "forward-vs-fd-oracle", 120.0, crit_forward_oracle},
    {4, "disk-dn-eigenvalues", 0.0, crit_disk_dn},
    {5, "cgo-remainder-decay", 180.0, crit_cgo_decay},
    {6, "carleman-floor", 0.0, crit_carleman},
    {7, "fourier-recovery", 0.0, crit_recovery},
    {8, "stability-ladder", 0.0, crit_stability},
    {9, "fiber-transform-unitarity", 0.0, crit_unitarity},
    {10, "conductivity-chain", 0.0, crit_conductivity},
};

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const Criterion& c : kCriteria) {
        if (!wanted.empty() && wanted.count(c.id) == 0) continue;
        Gate g;
        auto t0 = std::chrono::steady_clock::now();
        try {
            c.body(g);
        } catch (const std::exception& e) {
            g.fails.push_back(std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0.0 && secs > c.limit_s)
            g.fails.push_back("wall time " + fmt(secs) + " s exceeds the " + fmt(c.limit_s) +
                              " s bound");
        if (g.fails.empty()) {
            std::printf("[PASS] %2d %-26s (%.1f s)\n", c.id, c.label, secs);
        } else {
            ++failures;
            std::printf("[FAIL] %2d %-26s (%.1f s)\n", c.id, c.label, secs);
            for (const std::string& f : g.fails) std::printf("       - %s\n", f.c_str());
        }
        std::fflush(stdout);
    }
    return failures;
}
