#include "cwg/recon.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cwg/fem.hpp"

namespace cwg::recon {

double stability_modulus(double gamma, double gamma_star) {
    require(gamma >= 0.0, "stability_modulus: gamma must be nonnegative");
    require(gamma_star > 0.0 && gamma_star < std::exp(-std::exp(1.0)),
            "stability_modulus: gamma_star must lie in (0, e^-e)");
    if (gamma == 0.0) return 0.0;
    if (gamma >= gamma_star) return gamma;
    return 1.0 / std::log(-std::log(gamma));
}

double tau_for_gamma(double gamma, const TauPolicy& policy) {
    require(policy.floor > 0.0 && policy.cap >= policy.floor && policy.c_hat > 0.0,
            "tau_for_gamma: need 0 < floor <= cap and c_hat > 0");
    require(gamma >= 0.0, "tau_for_gamma: gamma must be nonnegative");
    if (gamma == 0.0) return policy.cap;
    double x = std::log(1.0 / gamma);
    if (x <= 1.0) return policy.floor;
    double t = std::ceil(std::log(x) / policy.c_hat);
    return std::min(policy.cap, std::max(policy.floor, t));
}

// --- boundary pairing ---------------------------------------------------------

PairingResult pairing_from_boundary(const PartialDNMap& dn2, const PartialDNMap& dn1,
                                    const CGOSolution& u2, const CGOSolution& u1,
                                    const BoundaryPartition& part, const Mesh& mesh, double eps,
                                    double dv_sup, double gamma) {
    require(u2.kind == CGOSolution::Kind::vanishing,
            "pairing: the injected trace must come from the boundary-vanishing family");
    require(dn1.in_basis.vertices == dn2.in_basis.vertices && dn1.in_basis.K == dn2.in_basis.K &&
                dn1.in_basis.center == dn2.in_basis.center,
            "pairing: DN data with mismatched input bases");
    require(dn1.out_vertices == dn2.out_vertices && dn1.out_K == dn2.out_K &&
                dn1.out_center == dn2.out_center,
            "pairing: DN data with mismatched output sampling");
    require(std::abs(dn1.theta - dn2.theta) <= 1e-14 &&
                std::abs(dn1.theta - u2.ctx.theta) <= 1e-14 &&
                std::abs(dn1.theta - u1.ctx.theta) <= 1e-14,
            "pairing: fiber mismatch between data and solution families");

    // the observable arc (shadow side of +xi at width eps) must be measured
    geometry::EpsilonFaces ef = geometry::epsilon_faces(mesh, u2.params.xi, eps);
    require(part.output_face.contains_all(ef.minus),
            "pairing: observable arc not contained in the output face");

    const forward::BoundaryBasis& ib = dn1.in_basis;
    const int nF = static_cast<int>(ib.vertices.size());
    require(ib.mode(0) <= u2.ctx.mode(0) &&
                ib.mode(ib.n_modes() - 1) >= u2.ctx.mode(u2.ctx.n_modes() - 1),
            "pairing: input basis window does not cover the injected trace window");

    VecXc f(ib.dim());
    for (int r = 0; r < ib.n_modes(); ++r) {
        int m = ib.mode(r);
        for (int s = 0; s < nF; ++s)
            f[r * nF + s] = u2.ctx.has_mode(m)
                                ? u2.u_modes(u2.ctx.row_of(m), ib.vertices[static_cast<std::size_t>(s)])
                                : cplx(0.0, 0.0);
    }

    VecXc q = dn2.matrix * f - dn1.matrix * f;

    // 1D mass on the observable edges, gathered onto the output slots
    const int nG = static_cast<int>(dn1.out_vertices.size());
    std::vector<int> oslot(mesh.n_vertices(), -1);
    for (int s = 0; s < nG; ++s) oslot[static_cast<std::size_t>(dn1.out_vertices[static_cast<std::size_t>(s)])] = s;
    SpMat mfull = fem::boundary_mass(mesh, ef.minus.edges);
    MatXc Mm = MatXc::Zero(nG, nG);
    for (int col = 0; col < mfull.outerSize(); ++col)
        for (SpMat::InnerIterator it(mfull, col); it; ++it) {
            int a = oslot[static_cast<std::size_t>(it.row())], b = oslot[static_cast<std::size_t>(col)];
            require(a >= 0 && b >= 0, "pairing: observable edge touches a vertex outside the output set");
            Mm(a, b) = it.value();
        }

    const int Wout = 2 * dn1.out_K + 1;
    cplx est(0.0, 0.0);
    double tnorm2 = 0.0;
    for (int r = 0; r < Wout; ++r) {
        int m = dn1.out_center - dn1.out_K + r;
        if (!u1.ctx.has_mode(m)) continue;
        VecXc t1(nG);
        for (int s = 0; s < nG; ++s)
            t1[s] = u1.u_modes(u1.ctx.row_of(m), dn1.out_vertices[static_cast<std::size_t>(s)]);
        VecXc Mq = Mm * q.segment(r * nG, nG);
        est += t1.dot(Mq);
        tnorm2 += (t1.dot(Mm * t1)).real();
    }

    PairingResult out;
    out.value = est;
    out.f_norm = std::sqrt(std::max(0.0, (f.dot(dn1.gram * f)).real()));
    out.t_norm = std::sqrt(std::max(0.0, tnorm2));
    double vol = mesh.area();  // unit axial period
    out.budget_tau = dv_sup * (std::sqrt(vol) * (u1.remainder_l2 + u2.remainder_l2) +
                               u1.remainder_l2 * u2.remainder_l2);
    out.budget_noise = gamma * out.f_norm * out.t_norm;
    return out;
}

// --- single-frequency estimate --------------------------------------------------

namespace {

// unit direction orthogonal to eta closest to the probe
Vec2 sector_direction(const Vec2& eta, const Vec2& xi0) {
    Vec2 u = eta / eta.norm();
    Vec2 xi(-u.y(), u.x());
    return (xi - xi0).norm() <= (-xi - xi0).norm() ? xi : -xi;
}

}  // namespace

FrequencySample estimate_fourier_coefficient(const Mesh& mesh, const BoundaryPartition& part,
                                             const PotentialField& V1, const PotentialField& V2,
                                             const CoefficientRequest& req) {
    require(req.eta.norm() > 0.0, "coefficient estimate: eta must be nonzero");
    require(req.eps > 0.0, "coefficient estimate: eps must be positive");
    Vec2 xi = sector_direction(req.eta, req.xi0);
    if ((xi - req.xi0).norm() > req.eps)
        throw ValidationError(
            "coefficient estimate: frequency outside the accessible sector of the probe (|xi - xi0| = " +
            format_g17((xi - req.xi0).norm()) + " > eps = " + format_g17(req.eps) + ")");

    CGOParams p = req.tau_target > 0.0
                      ? cgo::params_for_tau(req.k, req.eta, req.theta, req.tau_target, req.xi0)
                      : cgo::make_cgo_params(req.k, req.eta, req.r, req.theta, req.xi0);

    cgo::VanishingOptions vopt;
    vopt.window_K = std::abs(p.k) + V2.M + req.window_margin;
    CGOSolution u2 = cgo::solve_cgo_vanishing(mesh, V2, p, req.eps, vopt);
    cgo::SmoothOptions sopt;
    sopt.window_K = std::abs(p.k) + V1.M + req.window_margin;
    CGOSolution u1 = cgo::solve_cgo_smooth(mesh, V1, p, sopt);

    // joint mode window covering both families
    int lo = std::min(u1.ctx.mode(0), u2.ctx.mode(0));
    int hi = std::max(u1.ctx.mode(u1.ctx.n_modes() - 1), u2.ctx.mode(u2.ctx.n_modes() - 1));
    int center = (lo + hi) / 2;
    int K = std::max(hi - center, center - lo);
    FiberContext ctx(req.theta, K, center);

    PartialDNMap dn2 = forward::assemble_partial_dn(mesh, ctx, V2, part, u2.ctx.K, p.mode2);
    PartialDNMap dn1 = forward::assemble_partial_dn(mesh, ctx, V1, part, u2.ctx.K, p.mode2);

    double dv = req.dv_sup > 0.0 ? req.dv_sup : V1.bound_plus + V2.bound_plus;
    PairingResult pr =
        pairing_from_boundary(dn2, dn1, u2, u1, part, mesh, req.eps, dv, req.gamma);

    FrequencySample out;
    out.k = req.k;
    out.eta = req.eta;
    out.tau = p.tau;
    out.r = p.r;
    out.theta = req.theta;
    out.estimate = pr.value;
    out.budget_tau = pr.budget_tau;
    out.budget_noise = pr.budget_noise;
    return out;
}

// --- synthesis -----------------------------------------------------------------

Reconstruction reconstruct_difference(const Mesh& mesh, const std::vector<ProbeSetup>& probes,
                                      const PotentialField& V1, const PotentialField& V2,
                                      const std::vector<ReconTarget>& targets,
                                      const ReconstructionOptions& opt) {
    require(!probes.empty(), "reconstruct: no probes configured");
    require(!targets.empty(), "reconstruct: empty target list");
    for (std::size_t a = 0; a < targets.size(); ++a) {
        require(targets[a].eta.norm() > 0.0, "reconstruct: target with eta = 0");
        for (std::size_t b = a + 1; b < targets.size(); ++b)
            require(!(targets[a].k == -targets[b].k &&
                      (targets[a].eta + targets[b].eta).norm() <= 1e-12),
                    "reconstruct: targets must hold one representative per conjugate pair");
    }

    Reconstruction rec;
    int kmax = 1;
    for (const auto& t : targets) {
        bool reached = false;
        for (const auto& pb : probes) {
            Vec2 xi = sector_direction(t.eta, pb.xi0);
            if ((xi - pb.xi0).norm() > pb.eps) continue;
            CoefficientRequest req;
            req.k = t.k;
            req.eta = t.eta;
            req.theta = opt.theta;
            req.xi0 = pb.xi0;
            req.eps = pb.eps;
            req.tau_target = opt.tau_target;
            req.gamma = opt.gamma;
            req.dv_sup = opt.dv_sup;
            rec.samples.push_back(estimate_fourier_coefficient(mesh, pb.part, V1, V2, req));
            reached = true;
            break;
        }
        if (!reached)
            rec.gaps.push_back(t);
        else
            kmax = std::max(kmax, std::abs(t.k));
    }
    if (rec.samples.empty())
        throw ValidationError("reconstruct: no target lies in any probe's accessible sector");
    rec.coverage = static_cast<double>(rec.samples.size()) / static_cast<double>(targets.size());

    rec.ctx = FiberContext(0.0, std::max(3, kmax), 0, opt.n_axial);
    rec.field = CellField::zero(rec.ctx, mesh);
    const double area = mesh.area();
    const int nv = static_cast<int>(mesh.n_vertices());
    for (const auto& s : rec.samples) {
        cplx c = s.estimate / area;
        for (int j = 0; j <= rec.ctx.n_axial; ++j) {
            cplx ax = c * std::exp(cplx(0.0, 2.0 * pi * s.k * rec.ctx.x1(j)));
            for (int v = 0; v < nv; ++v) {
                cplx ph = std::exp(cplx(0.0, s.eta.dot(mesh.vertices[static_cast<std::size_t>(v)])));
                rec.field.values(j, v) += 2.0 * (ax * ph).real();
            }
        }
    }
    return rec;
}

// --- dual norm -------------------------------------------------------------------

double h_minus1_norm(const Mesh& mesh, const FiberContext& ctx, const CellField& W, DualClass cls) {
    const int n = ctx.n_axial;
    const int nv = static_cast<int>(mesh.n_vertices());
    require(W.values.rows() == n + 1 && W.values.cols() == nv,
            "h_minus1_norm: field does not match the grid");
    require(n >= 4, "h_minus1_norm: axial grid too coarse");

    SpMat Kfull = fem::stiffness(mesh), Mfull = fem::mass(mesh);
    fem::IndexSplit split(mesh);
    const int ni = static_cast<int>(split.interior.size());
    auto restrict_mat = [&](const SpMat& A) {
        std::vector<Triplet> tr;
        for (int col = 0; col < A.outerSize(); ++col)
            for (SpMat::InnerIterator it(A, col); it; ++it) {
                int ri = split.interior_of[static_cast<std::size_t>(it.row())];
                int ci = split.interior_of[static_cast<std::size_t>(col)];
                if (ri >= 0 && ci >= 0) tr.emplace_back(ri, ci, it.value());
            }
        SpMat R(ni, ni);
        R.setFromTriplets(tr.begin(), tr.end());
        return R;
    };
    SpMat Ki = restrict_mat(Kfull), Mi = restrict_mat(Mfull);

    // one Riesz solve per axial mode; the quadratic form of each solve is the
    // squared dual-norm contribution of that mode
    auto mode_term = [&](const VecXc& what, double freq2) {
        VecXc g = Mfull.cast<cplx>() * what;
        VecXc gi(ni);
        for (int i = 0; i < ni; ++i) gi[i] = g[split.interior[static_cast<std::size_t>(i)]];
        SpMat A = Ki + (freq2 + 1.0) * Mi;
        Eigen::SimplicialLDLT<SpMat> ldlt(A);
        if (ldlt.info() != Eigen::Success)
            throw SolverError("h_minus1_norm: Riesz factorization failed");
        VecX pr = ldlt.solve(gi.real().eval());
        VecX pi = ldlt.solve(gi.imag().eval());
        double term = pr.dot(gi.real()) + pi.dot(gi.imag());
        return std::max(0.0, term);
    };

    double total = 0.0;
    if (cls == DualClass::dirichlet) {
        // composite trapezoid against the orthonormal sine basis
        std::vector<double> wq(static_cast<std::size_t>(n + 1), 1.0 / n);
        wq.front() = wq.back() = 0.5 / n;
        for (int m = 1; m <= n - 1; ++m) {
            VecXc what = VecXc::Zero(nv);
            for (int j = 0; j <= n; ++j) {
                double basis = std::sqrt(2.0) * std::sin(pi * m * ctx.x1(j));
                what += wq[static_cast<std::size_t>(j)] * basis * W.values.row(j).transpose();
            }
            total += mode_term(what, pi * pi * m * m);
        }
    } else {
        // periodic exponentials from the n distinct rows
        int N = (n - 1) / 2;
        for (int m = -N; m <= N; ++m) {
            VecXc what = VecXc::Zero(nv);
            for (int j = 0; j < n; ++j)
                what += (1.0 / n) * std::exp(cplx(0.0, -2.0 * pi * m * ctx.x1(j))) *
                        W.values.row(j).transpose();
            total += mode_term(what, 4.0 * pi * pi * m * m);
        }
    }
    return std::sqrt(total);
}

CellField difference_field(const Mesh& mesh, const FiberContext& ctx, const PotentialField& V1,
                           const PotentialField& V2) {
    CellField W = CellField::zero(ctx, mesh);
    int M = std::max(V1.M, V2.M);
    for (int m = -M; m <= M; ++m) {
        VecXc row = VecXc::Zero(static_cast<Eigen::Index>(mesh.n_vertices()));
        if (std::abs(m) <= V1.M) row += V1.mode_row(m);
        if (std::abs(m) <= V2.M) row -= V2.mode_row(m);
        for (int j = 0; j <= ctx.n_axial; ++j)
            W.values.row(j) += std::exp(cplx(0.0, 2.0 * pi * m * ctx.x1(j))) * row.transpose();
    }
    return W;
}

// --- noise + experiment ----------------------------------------------------------

PartialDNMap inject_dn_noise(const PartialDNMap& map, double gamma, std::uint64_t seed) {
    require(gamma >= 0.0, "inject_dn_noise: gamma must be nonnegative");
    if (gamma == 0.0) return map;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    MatXc E(map.matrix.rows(), map.matrix.cols());
    for (Eigen::Index j = 0; j < E.cols(); ++j)
        for (Eigen::Index i = 0; i < E.rows(); ++i) E(i, j) = cplx(nd(rng), nd(rng));
    PartialDNMap probe = map;
    probe.matrix += E;
    double nu = forward::dn_difference_norm(probe, map);
    require(nu > 0.0, "inject_dn_noise: degenerate perturbation direction");
    PartialDNMap out = map;
    out.matrix += (gamma / nu) * E;
    return out;
}

StabilityReport run_stability_experiment(const Mesh& mesh, const BoundaryPartition& part,
                                         const PotentialField& V1,
                                         const std::function<PotentialField(double)>& family,
                                         const StabilityConfig& cfg) {
    require(!cfg.scales.empty(), "stability experiment: empty scale ladder");
    StabilityReport rep;
    rep.gamma_star = cfg.gamma_star;
    double poin = geometry::poincare_constant(mesh);

    for (double s : cfg.scales) {
        require(s >= 0.0, "stability experiment: scales must be nonnegative");
        StabilityRow row;
        row.s = s;
        PotentialField V2 = family(s);
        FiberContext actx(cfg.theta, std::max(V1.M, V2.M));
        auto a1 = forward::check_admissible(V1, actx, mesh, poin);
        auto a2 = forward::check_admissible(V2, actx, mesh, poin);
        if (!a1.admissible || !a2.admissible) {
            row.skipped = true;
            rep.warning += "scale " + format_g17(s) + " skipped (inadmissible); ";
            rep.rows.push_back(row);
            continue;
        }
        if (cfg.theta_grid.size() > 1) {
            row.gamma = forward::dn_sup_over_fibers(mesh, V1, V2, part, cfg.theta_grid, cfg.K,
                                                    cfg.in_K, cfg.workers)
                            .sup;
        } else {
            FiberContext ctx(cfg.theta, cfg.K);
            PartialDNMap d1 = forward::assemble_partial_dn(mesh, ctx, V1, part, cfg.in_K, 0);
            PartialDNMap d2 = forward::assemble_partial_dn(mesh, ctx, V2, part, cfg.in_K, 0);
            row.gamma = forward::dn_difference_norm(d1, d2);
        }
        FiberContext dctx(0.0, std::max(3, std::max(V1.M, V2.M)));
        row.delta = h_minus1_norm(mesh, dctx, difference_field(mesh, dctx, V1, V2), cfg.dual);
        row.phi = stability_modulus(row.gamma, cfg.gamma_star);
        row.ratio = (s == 0.0 || row.phi <= 0.0) ? 0.0 : row.delta / row.phi;
        rep.rows.push_back(row);
    }

    double lo = 0.0, hi = 0.0;
    for (const auto& row : rep.rows) {
        if (row.skipped || row.ratio <= 0.0) continue;
        if (hi == 0.0) lo = hi = row.ratio;
        lo = std::min(lo, row.ratio);
        hi = std::max(hi, row.ratio);
    }
    rep.fitted_C = hi;
    rep.spread = (lo > 0.0) ? hi / lo : 1.0;
    return rep;
}

}  // namespace cwg::recon
