#include "cwg/forward.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "cwg/fem.hpp"

namespace cwg::forward {

// --- potential fields -------------------------------------------------------

VecXc PotentialField::mode_row(int m) const {
    require(std::abs(m) <= M, "PotentialField: mode " + std::to_string(m) + " outside -M..M");
    return modes.row(m + M).transpose();
}

CellField PotentialField::sample(const FiberContext& ctx, const Mesh& mesh) const {
    CellField f = CellField::zero(ctx, mesh);
    for (int j = 0; j <= ctx.n_axial; ++j)
        for (int m = -M; m <= M; ++m)
            f.values.row(j) += std::exp(cplx(0.0, 2.0 * pi * m * ctx.x1(j))) * modes.row(m + M);
    return f;
}

std::uint64_t PotentialField::content_hash() const {
    std::uint64_t h = fnv1a(&M, sizeof(M));
    h = fnv1a(modes.data(), sizeof(cplx) * static_cast<std::size_t>(modes.size()), h);
    return h;
}

void check_reality(const PotentialField& V) {
    for (int m = 0; m <= V.M; ++m) {
        double d = (V.modes.row(V.M + m) - V.modes.row(V.M - m).conjugate()).norm();
        if (d > 1e-10 * (1.0 + V.modes.norm()))
            throw ValidationError("PotentialField: reality symmetry violated at mode " + std::to_string(m));
    }
}

namespace {

double bump3(const Vec2& p, const Vec2& c, double rho) {
    double q = 1.0 - (p - c).squaredNorm() / (rho * rho);
    return q > 0.0 ? q * q * q : 0.0;
}

PotentialField nodal_potential(const Mesh& mesh, int M) {
    PotentialField V;
    V.M = M;
    V.modes = MatXc::Zero(2 * M + 1, static_cast<Eigen::Index>(mesh.n_vertices()));
    return V;
}

}  // namespace

PotentialField potential_zero(const Mesh& mesh) {
    PotentialField V = nodal_potential(mesh, 0);
    V.analytic = [](double, const Vec2&) { return 0.0; };
    return V;
}

PotentialField potential_constant(const Mesh& mesh, double c, double bound_minus_margin) {
    PotentialField V = nodal_potential(mesh, 0);
    V.modes.row(0).setConstant(cplx(c, 0.0));
    V.bound_plus = std::abs(c);
    V.bound_minus = std::max(0.0, -c) + bound_minus_margin;
    V.analytic = [c](double, const Vec2&) { return c; };
    return V;
}

PotentialField potential_bump(const Mesh& mesh, double c0, double amp, const Vec2& center, double rho) {
    require(rho > 0.0, "potential_bump: rho must be positive");
    PotentialField V = nodal_potential(mesh, 0);
    for (std::size_t v = 0; v < mesh.n_vertices(); ++v)
        V.modes(0, static_cast<Eigen::Index>(v)) = c0 + amp * bump3(mesh.vertices[v], center, rho);
    double lo = std::min(c0, c0 + amp), hi = std::max(c0, c0 + amp);
    V.bound_plus = std::max(std::abs(lo), std::abs(hi));
    V.bound_minus = std::max(0.0, -lo);
    V.analytic = [c0, amp, center, rho](double, const Vec2& p) { return c0 + amp * bump3(p, center, rho); };
    return V;
}

PotentialField potential_axial_cosine(const Mesh& mesh, double c0, double amp, const Vec2& center, double rho) {
    require(rho > 0.0, "potential_axial_cosine: rho must be positive");
    PotentialField V = nodal_potential(mesh, 1);
    for (std::size_t v = 0; v < mesh.n_vertices(); ++v) {
        double b = bump3(mesh.vertices[v], center, rho);
        V.modes(0, static_cast<Eigen::Index>(v)) = 0.5 * amp * b;  // mode -1
        V.modes(1, static_cast<Eigen::Index>(v)) = c0;             // mode 0
        V.modes(2, static_cast<Eigen::Index>(v)) = 0.5 * amp * b;  // mode +1
    }
    V.bound_plus = std::max(std::abs(c0 - std::abs(amp)), std::abs(c0 + std::abs(amp)));
    V.bound_minus = std::max(0.0, -(c0 - std::abs(amp)));
    V.analytic = [c0, amp, center, rho](double x1, const Vec2& p) {
        return c0 + amp * std::cos(2.0 * pi * x1) * bump3(p, center, rho);
    };
    return V;
}

PotentialField potential_random(const Mesh& mesh, std::uint64_t seed, int M, int n_bumps,
                                double target_sup, double bound_minus) {
    require(M >= 0 && n_bumps >= 1 && target_sup > 0.0, "potential_random: bad parameters");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    PotentialField V = nodal_potential(mesh, M);
    double rmax = 0.0;
    for (const auto& p : mesh.vertices) rmax = std::max(rmax, p.norm());
    for (int b = 0; b < n_bumps; ++b) {
        double ang = 2.0 * pi * uni(rng);
        double rad = 0.55 * rmax * uni(rng);
        Vec2 c(rad * std::cos(ang), rad * std::sin(ang));
        double rho = (0.2 + 0.25 * uni(rng)) * rmax;
        double amp = 2.0 * uni(rng) - 1.0;
        int m = M == 0 ? 0 : static_cast<int>(uni(rng) * (M + 1));  // axial mode 0..M
        double phase = 2.0 * pi * uni(rng);
        cplx half = 0.5 * amp * std::exp(cplx(0.0, phase));
        for (std::size_t v = 0; v < mesh.n_vertices(); ++v) {
            double B = bump3(mesh.vertices[v], c, rho);
            if (m == 0)
                V.modes(M, static_cast<Eigen::Index>(v)) += amp * B;
            else {
                V.modes(M + m, static_cast<Eigen::Index>(v)) += half * B;
                V.modes(M - m, static_cast<Eigen::Index>(v)) += std::conj(half) * B;
            }
        }
    }
    // rescale so the sampled sup hits target_sup
    FiberContext probe(0.0, std::max(1, M));
    CellField s = V.sample(probe, mesh);
    double sup = 0.0, neg = 0.0;
    for (Eigen::Index i = 0; i < s.values.size(); ++i) {
        double val = s.values.data()[i].real();
        sup = std::max(sup, std::abs(val));
        neg = std::max(neg, -val);
    }
    require(sup > 0.0, "potential_random: degenerate draw");
    V.modes *= target_sup / sup;
    V.bound_plus = target_sup;
    V.bound_minus = std::max(bound_minus, neg * target_sup / sup);
    return V;
}

AdmissibilityReport check_admissible(const PotentialField& V, const FiberContext& ctx,
                                     const Mesh& mesh, double poincare_constant) {
    AdmissibilityReport rep;
    rep.poincare = poincare_constant;
    CellField s = V.sample(ctx, mesh);
    for (Eigen::Index i = 0; i < s.values.size(); ++i) {
        cplx z = s.values.data()[i];
        if (std::abs(z.imag()) > 1e-9 * (1.0 + std::abs(z.real())))
            throw ValidationError("check_admissible: potential samples are not real");
        rep.sup_abs = std::max(rep.sup_abs, std::abs(z.real()));
        rep.sup_neg = std::max(rep.sup_neg, -z.real());
    }
    const double slack = 1e-9;
    rep.admissible = rep.sup_abs <= V.bound_plus + slack && rep.sup_neg <= V.bound_minus + slack &&
                     V.bound_minus < poincare_constant;
    return rep;
}

// --- boundary basis ---------------------------------------------------------

BoundaryBasis face_interior_basis(const Mesh& mesh, const geometry::FaceSet& face, int K, int center) {
    std::vector<char> in_face(mesh.boundary.size(), 0);
    for (int e : face.edges) in_face[static_cast<std::size_t>(e)] = 1;
    BoundaryBasis basis;
    basis.K = K;
    basis.center = center;
    std::size_t nb = mesh.boundary.size();
    // vertex bv[i] has incident boundary edges i-1 and i
    for (std::size_t i = 0; i < nb; ++i) {
        std::size_t prev = (i + nb - 1) % nb;
        if (in_face[prev] && in_face[i]) basis.vertices.push_back(mesh.boundary_vertices[i]);
    }
    require(!basis.vertices.empty(), "face_interior_basis: face has no interior vertices");
    return basis;
}

// --- fiber operator ---------------------------------------------------------

FiberOperator::FiberOperator(const Mesh& mesh, const FiberContext& ctx, const PotentialField& V)
    : mesh_(mesh), ctx_(ctx) {
    check_reality(V);
    nv_ = static_cast<int>(mesh.n_vertices());
    nb_ = static_cast<int>(mesh.boundary_vertices.size());
    int W = ctx.n_modes();

    SpMat K = fem::stiffness(mesh);
    SpMat M = fem::mass(mesh);
    std::vector<SpMatc> MV(static_cast<std::size_t>(2 * V.M + 1));
    for (int m = -V.M; m <= V.M; ++m) MV[static_cast<std::size_t>(m + V.M)] = fem::weighted_mass(mesh, V.mode_row(m));

    fem::IndexSplit split(mesh);
    interior_ = split.interior;
    interior_of_ = split.interior_of;
    bslot_of_.assign(static_cast<std::size_t>(nv_), -1);
    for (int i = 0; i < nb_; ++i) bslot_of_[static_cast<std::size_t>(mesh.boundary_vertices[static_cast<std::size_t>(i)])] = i;

    std::vector<Tripletc> trip;
    for (int r = 0; r < W; ++r) {
        int kr = ctx.mode(r);
        double beta = ctx.beta(kr);
        for (int c = 0; c < W; ++c) {
            int kc = ctx.mode(c);
            int m = kr - kc;
            // diagonal block: stiffness + beta^2 mass; off-diagonal: potential coupling
            if (r == c) {
                for (int col = 0; col < K.outerSize(); ++col) {
                    for (SpMat::InnerIterator it(K, col); it; ++it)
                        trip.emplace_back(r * nv_ + static_cast<int>(it.row()), c * nv_ + col, cplx(it.value(), 0.0));
                    for (SpMat::InnerIterator it(M, col); it; ++it)
                        trip.emplace_back(r * nv_ + static_cast<int>(it.row()), c * nv_ + col,
                                          cplx(beta * beta * it.value(), 0.0));
                }
            }
            if (std::abs(m) <= V.M) {
                const SpMatc& B = MV[static_cast<std::size_t>(m + V.M)];
                for (int col = 0; col < B.outerSize(); ++col)
                    for (SpMatc::InnerIterator it(B, col); it; ++it)
                        trip.emplace_back(r * nv_ + static_cast<int>(it.row()), c * nv_ + col, it.value());
            }
        }
    }
    A_.resize(W * nv_, W * nv_);
    A_.setFromTriplets(trip.begin(), trip.end());

    // interior subsystem
    int ni = static_cast<int>(interior_.size());
    std::vector<Tripletc> ti;
    for (int col = 0; col < A_.outerSize(); ++col)
        for (SpMatc::InnerIterator it(A_, col); it; ++it) {
            int rv = static_cast<int>(it.row()) % nv_, rm = static_cast<int>(it.row()) / nv_;
            int cv = col % nv_, cm = col / nv_;
            int ri = interior_of_[static_cast<std::size_t>(rv)], ci = interior_of_[static_cast<std::size_t>(cv)];
            if (ri >= 0 && ci >= 0) ti.emplace_back(rm * ni + ri, cm * ni + ci, it.value());
        }
    SpMatc Aii(W * ni, W * ni);
    Aii.setFromTriplets(ti.begin(), ti.end());
    lu_ = std::make_shared<Eigen::SparseLU<SpMatc>>();
    lu_->compute(Aii);
    if (lu_->info() != Eigen::Success)
        throw SolverError("FiberOperator: interior factorization failed (theta=" + std::to_string(ctx.theta) + ")");

    // boundary mass over the loop, restricted to boundary slots
    SpMat Mb = fem::boundary_mass_full(mesh);
    std::vector<Triplet> tb;
    for (int col = 0; col < Mb.outerSize(); ++col)
        for (SpMat::InnerIterator it(Mb, col); it; ++it) {
            int rs = bslot_of_[static_cast<std::size_t>(it.row())], cs = bslot_of_[static_cast<std::size_t>(col)];
            if (rs >= 0 && cs >= 0) tb.emplace_back(rs, cs, it.value());
        }
    bmass_mat_.resize(nb_, nb_);
    bmass_mat_.setFromTriplets(tb.begin(), tb.end());
    bmass_.compute(bmass_mat_);
    if (bmass_.info() != Eigen::Success) throw SolverError("FiberOperator: boundary mass factorization failed");
}

FiberOperator::Solution FiberOperator::solve(const MatXc& g, const MatXc* source_modes) const {
    int W = ctx_.n_modes();
    int ni = static_cast<int>(interior_.size());
    require(g.rows() == W && g.cols() == nb_, "FiberOperator::solve: trace shape mismatch");
    if (source_modes)
        require(source_modes->rows() == W && source_modes->cols() == nv_,
                "FiberOperator::solve: source shape mismatch");

    // full vector with boundary values in place, interior zero
    VecXc v = VecXc::Zero(W * nv_);
    for (int r = 0; r < W; ++r)
        for (int b = 0; b < nb_; ++b)
            v[r * nv_ + mesh_.boundary_vertices[static_cast<std::size_t>(b)]] = g(r, b);

    VecXc F = VecXc::Zero(W * nv_);
    if (source_modes) {
        SpMatc M = fem::mass(mesh_).cast<cplx>();
        for (int r = 0; r < W; ++r)
            F.segment(r * nv_, nv_) = M * source_modes->row(r).transpose();
    }

    VecXc r0 = A_ * v;
    VecXc rhs(W * ni);
    for (int r = 0; r < W; ++r)
        for (int i = 0; i < ni; ++i) {
            int vtx = interior_[static_cast<std::size_t>(i)];
            rhs[r * ni + i] = F[r * nv_ + vtx] - r0[r * nv_ + vtx];
        }
    VecXc x = lu_->solve(rhs);
    if (lu_->info() != Eigen::Success) throw SolverError("FiberOperator::solve: backsolve failed");
    for (int r = 0; r < W; ++r)
        for (int i = 0; i < ni; ++i) v[r * nv_ + interior_[static_cast<std::size_t>(i)]] = x[r * ni + i];

    VecXc resid = A_ * v - F;
    double rnum = 0.0, rden = std::max(F.norm() + r0.norm(), 1e-300);
    for (int r = 0; r < W; ++r)
        for (int i = 0; i < ni; ++i) rnum += std::norm(resid[r * nv_ + interior_[static_cast<std::size_t>(i)]]);

    Solution sol;
    sol.pde_residual = std::sqrt(rnum) / rden;
    sol.field.theta = ctx_.theta;
    sol.field.K = ctx_.K;
    sol.field.center = ctx_.center;
    sol.field.mesh_hash = mesh_.content_hash();
    sol.field.coeff = MatXc::Zero(W, nv_);
    for (int r = 0; r < W; ++r) sol.field.coeff.row(r) = v.segment(r * nv_, nv_).transpose();

    // variational flux: boundary rows of the residual, mass-inverted on the loop
    sol.flux = sol.field;
    sol.flux.coeff.setZero();
    for (int r = 0; r < W; ++r) {
        VecXc t(nb_);
        for (int b = 0; b < nb_; ++b)
            t[b] = resid[r * nv_ + mesh_.boundary_vertices[static_cast<std::size_t>(b)]];
        VecX qr = bmass_.solve(t.real());
        VecX qi = bmass_.solve(t.imag());
        for (int b = 0; b < nb_; ++b)
            sol.flux.coeff(r, mesh_.boundary_vertices[static_cast<std::size_t>(b)]) = cplx(qr[b], qi[b]);
    }
    return sol;
}

FiberSolution solve_fibered_bvp(const Mesh& mesh, const FiberContext& ctx, const PotentialField& V,
                                const DirichletData& g, const ModeExpansion* source) {
    require(g.basis.center - g.basis.K >= ctx.center - ctx.K &&
                g.basis.center + g.basis.K <= ctx.center + ctx.K,
            "solve_fibered_bvp: data window not contained in solver window");
    FiberOperator op(mesh, ctx, V);
    int nb = static_cast<int>(mesh.boundary_vertices.size());
    std::vector<int> bslot(mesh.n_vertices(), -1);
    for (int b = 0; b < nb; ++b) bslot[static_cast<std::size_t>(mesh.boundary_vertices[static_cast<std::size_t>(b)])] = b;

    MatXc trace = MatXc::Zero(ctx.n_modes(), nb);
    for (int r = 0; r < g.basis.n_modes(); ++r) {
        int k = g.basis.mode(r);
        int rr = ctx.row_of(k);
        for (std::size_t i = 0; i < g.basis.vertices.size(); ++i)
            trace(rr, bslot[static_cast<std::size_t>(g.basis.vertices[i])]) =
                g.coeff[r * static_cast<int>(g.basis.vertices.size()) + static_cast<int>(i)];
    }
    MatXc src;
    const MatXc* srcp = nullptr;
    if (source) {
        require(source->coeff.rows() == ctx.n_modes(), "solve_fibered_bvp: source window mismatch");
        src = source->coeff;
        srcp = &src;
    }
    auto sol = op.solve(trace, srcp);
    return FiberSolution{sol.field, sol.flux, sol.pde_residual};
}

// --- partial DN assembly ----------------------------------------------------

VecXc PartialDNMap::apply(const VecXc& coeff) const {
    require(coeff.size() == matrix.cols(), "PartialDNMap::apply: coefficient size mismatch");
    return matrix * coeff;
}

PartialDNMap assemble_partial_dn(const Mesh& mesh, const FiberContext& ctx, const PotentialField& V,
                                 const BoundaryPartition& part, int in_K, int in_center) {
    require(in_center - in_K >= ctx.center - ctx.K && in_center + in_K <= ctx.center + ctx.K,
            "assemble_partial_dn: input window must sit inside the solver window");
    FiberOperator op(mesh, ctx, V);

    PartialDNMap map;
    map.in_basis = face_interior_basis(mesh, part.input_face, in_K, in_center);
    map.theta = ctx.theta;
    map.mesh_hash = mesh.content_hash();
    map.potential_hash = V.content_hash();
    map.out_K = ctx.K;
    map.out_center = ctx.center;

    // out vertices: all vertices incident to a G' edge, in loop order
    std::vector<char> out_mark(mesh.n_vertices(), 0);
    for (int e : part.output_face.edges) {
        out_mark[static_cast<std::size_t>(mesh.boundary[static_cast<std::size_t>(e)].v0)] = 1;
        out_mark[static_cast<std::size_t>(mesh.boundary[static_cast<std::size_t>(e)].v1)] = 1;
    }
    for (int v : mesh.boundary_vertices)
        if (out_mark[static_cast<std::size_t>(v)]) map.out_vertices.push_back(v);

    int nb = static_cast<int>(mesh.boundary_vertices.size());
    std::vector<int> bslot(mesh.n_vertices(), -1);
    for (int b = 0; b < nb; ++b) bslot[static_cast<std::size_t>(mesh.boundary_vertices[static_cast<std::size_t>(b)])] = b;

    int nF = static_cast<int>(map.in_basis.vertices.size());
    int nG = static_cast<int>(map.out_vertices.size());
    int W = ctx.n_modes();
    map.matrix = MatXc::Zero(W * nG, map.in_basis.dim());

    for (int rin = 0; rin < map.in_basis.n_modes(); ++rin) {
        for (int i = 0; i < nF; ++i) {
            MatXc trace = MatXc::Zero(W, nb);
            trace(ctx.row_of(map.in_basis.mode(rin)), bslot[static_cast<std::size_t>(map.in_basis.vertices[static_cast<std::size_t>(i)])]) = 1.0;
            auto sol = op.solve(trace);
            int col = rin * nF + i;
            for (int r = 0; r < W; ++r)
                for (int jg = 0; jg < nG; ++jg)
                    map.matrix(r * nG + jg, col) = sol.flux.coeff(r, map.out_vertices[static_cast<std::size_t>(jg)]);
        }
    }

    // output weight: 1D mass on the G' edges, restricted to out vertices
    SpMat Mg = fem::boundary_mass(mesh, part.output_face.edges);
    map.out_mass = MatX::Zero(nG, nG);
    std::vector<int> oslot(mesh.n_vertices(), -1);
    for (int jg = 0; jg < nG; ++jg) oslot[static_cast<std::size_t>(map.out_vertices[static_cast<std::size_t>(jg)])] = jg;
    for (int col = 0; col < Mg.outerSize(); ++col)
        for (SpMat::InnerIterator it(Mg, col); it; ++it) {
            int rs = oslot[static_cast<std::size_t>(it.row())], cs = oslot[static_cast<std::size_t>(col)];
            if (rs >= 0 && cs >= 0) map.out_mass(rs, cs) = it.value();
        }

    // input Gram: potential-free lifts, one real SPD solve family per input mode
    SpMat Ks = fem::stiffness(mesh);
    SpMat Ms = fem::mass(mesh);
    fem::IndexSplit split(mesh);
    int ni = static_cast<int>(split.interior.size());
    map.gram = MatXc::Zero(map.in_basis.dim(), map.in_basis.dim());
    for (int rin = 0; rin < map.in_basis.n_modes(); ++rin) {
        double beta = ctx.beta(map.in_basis.mode(rin));
        SpMat R = Ks + beta * beta * Ms;
        std::vector<Triplet> ti;
        for (int col = 0; col < R.outerSize(); ++col)
            for (SpMat::InnerIterator it(R, col); it; ++it) {
                int ri = split.interior_of[static_cast<std::size_t>(it.row())];
                int ci = split.interior_of[static_cast<std::size_t>(col)];
                if (ri >= 0 && ci >= 0) ti.emplace_back(ri, ci, it.value());
            }
        SpMat Rii(ni, ni);
        Rii.setFromTriplets(ti.begin(), ti.end());
        Eigen::SimplicialLDLT<SpMat> ldlt(Rii);
        if (ldlt.info() != Eigen::Success) throw SolverError("assemble_partial_dn: lift factorization failed");

        MatX lifts = MatX::Zero(static_cast<Eigen::Index>(mesh.n_vertices()), nF);
        MatX rhs = MatX::Zero(ni, nF);
        for (int i = 0; i < nF; ++i) {
            int b = map.in_basis.vertices[static_cast<std::size_t>(i)];
            lifts(b, i) = 1.0;
            for (SpMat::InnerIterator it(R, b); it; ++it) {  // column b of R (R symmetric)
                int ri = split.interior_of[static_cast<std::size_t>(it.row())];
                if (ri >= 0) rhs(ri, i) -= it.value();
            }
        }
        MatX xi = ldlt.solve(rhs);
        for (int i = 0; i < nF; ++i)
            for (int s = 0; s < ni; ++s) lifts(split.interior[static_cast<std::size_t>(s)], i) = xi(s, i);
        MatX gblock = lifts.transpose() * (Ms * lifts);
        map.gram.block(rin * nF, rin * nF, nF, nF) = gblock.cast<cplx>();
    }
    return map;
}

double dn_difference_norm(const PartialDNMap& A, const PartialDNMap& B, int dense_limit) {
    require(A.in_basis.vertices == B.in_basis.vertices && A.in_basis.K == B.in_basis.K &&
                A.in_basis.center == B.in_basis.center,
            "dn_difference_norm: input bases differ");
    require(A.out_vertices == B.out_vertices && A.out_K == B.out_K && A.out_center == B.out_center,
            "dn_difference_norm: output samplings differ");
    require(A.theta == B.theta, "dn_difference_norm: fibers differ");
    MatXc D = A.matrix - B.matrix;

    // weighted normal matrix D^H (I_modes x out_mass) D
    int nG = static_cast<int>(A.out_vertices.size());
    int Wout = 2 * A.out_K + 1;
    MatXc WD(D.rows(), D.cols());
    for (int r = 0; r < Wout; ++r)
        WD.block(r * nG, 0, nG, D.cols()) = A.out_mass.cast<cplx>() * D.block(r * nG, 0, nG, D.cols());
    MatXc N = D.adjoint() * WD;

    Eigen::LLT<MatXc> llt(A.gram);
    if (llt.info() != Eigen::Success) throw SolverError("dn_difference_norm: Gram is not positive definite");
    MatXc L = llt.matrixL();

    if (N.rows() <= dense_limit) {
        MatXc Binv = L.triangularView<Eigen::Lower>().solve(N);
        MatXc C = L.triangularView<Eigen::Lower>().solve(Binv.adjoint()).adjoint();
        Eigen::SelfAdjointEigenSolver<MatXc> es(0.5 * (C + C.adjoint()), Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw SolverError("dn_difference_norm: eigensolve failed");
        double lmax = es.eigenvalues().maxCoeff();
        return std::sqrt(std::max(0.0, lmax));
    }
    // power iteration on G^{-1} N
    VecXc x = VecXc::Ones(N.rows());
    x /= x.norm();
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
        VecXc y = llt.solve(N * x);
        double ny = y.norm();
        if (!(ny > 0.0)) return 0.0;
        y /= ny;
        double l_new = std::abs(x.dot(N * x) / x.dot(A.gram * x));
        if (it > 3 && std::abs(l_new - lambda) < 1e-10 * std::max(1.0, l_new)) {
            lambda = l_new;
            break;
        }
        lambda = l_new;
        x = y;
    }
    return std::sqrt(std::max(0.0, lambda));
}

FiberSweep dn_sup_over_fibers(const Mesh& mesh, const PotentialField& V1, const PotentialField& V2,
                              const BoundaryPartition& part, const std::vector<double>& theta_grid,
                              int K, int in_K, unsigned workers) {
    require(!theta_grid.empty(), "dn_sup_over_fibers: empty theta grid");
    FiberSweep sweep;
    sweep.theta_grid = theta_grid;
    sweep.values.assign(theta_grid.size(), 0.0);
    parallel_for(
        theta_grid.size(),
        [&](std::size_t i) {
            FiberContext ctx(theta_grid[i], K);
            PartialDNMap m1 = assemble_partial_dn(mesh, ctx, V1, part, in_K, 0);
            PartialDNMap m2 = assemble_partial_dn(mesh, ctx, V2, part, in_K, 0);
            sweep.values[i] = dn_difference_norm(m1, m2);
        },
        workers);
    std::size_t arg = 0;
    for (std::size_t i = 0; i < sweep.values.size(); ++i)
        if (sweep.values[i] > sweep.values[arg]) arg = i;
    sweep.sup = sweep.values[arg];
    sweep.argmax_theta = theta_grid[arg];
    return sweep;
}

// --- serialization ----------------------------------------------------------

namespace {
void write_matc(std::ofstream& out, const MatXc& m) {
    std::int64_t r = m.rows(), c = m.cols();
    out.write(reinterpret_cast<const char*>(&r), sizeof(r));
    out.write(reinterpret_cast<const char*>(&c), sizeof(c));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(cplx) * static_cast<std::size_t>(r * c)));
}
MatXc read_matc(std::ifstream& in) {
    std::int64_t r, c;
    in.read(reinterpret_cast<char*>(&r), sizeof(r));
    in.read(reinterpret_cast<char*>(&c), sizeof(c));
    require(in.good() && r >= 0 && c >= 0, "read_partial_dn: corrupt matrix header");
    MatXc m(r, c);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(cplx) * static_cast<std::size_t>(r * c)));
    return m;
}
}  // namespace

void write_partial_dn(const PartialDNMap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "write_partial_dn: cannot open " + path);
    const char magic[8] = {'C', 'W', 'G', 'D', 'N', 'M', '1', '\0'};
    out.write(magic, 8);
    write_matc(out, map.matrix);
    write_matc(out, map.gram);
    MatXc om = map.out_mass.cast<cplx>();
    write_matc(out, om);
    require(out.good(), "write_partial_dn: write failed");

    nlohmann::json meta;
    meta["schema"] = "cwg-dnmap/1";
    meta["theta"] = map.theta;
    meta["in_K"] = map.in_basis.K;
    meta["in_center"] = map.in_basis.center;
    meta["in_vertices"] = map.in_basis.vertices;
    meta["out_K"] = map.out_K;
    meta["out_center"] = map.out_center;
    meta["out_vertices"] = map.out_vertices;
    char hexbuf[32];
    std::snprintf(hexbuf, sizeof(hexbuf), "%016llx", static_cast<unsigned long long>(map.mesh_hash));
    meta["mesh_hash"] = std::string(hexbuf);
    std::snprintf(hexbuf, sizeof(hexbuf), "%016llx", static_cast<unsigned long long>(map.potential_hash));
    meta["potential_hash"] = std::string(hexbuf);
    std::ofstream js(path + ".json");
    require(js.good(), "write_partial_dn: cannot open sidecar");
    js << meta.dump(2) << "\n";
}

PartialDNMap read_partial_dn(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "read_partial_dn: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    require(in.good() && std::string(magic, 7) == "CWGDNM1", "read_partial_dn: bad magic");
    PartialDNMap map;
    map.matrix = read_matc(in);
    map.gram = read_matc(in);
    map.out_mass = read_matc(in).real();

    std::ifstream js(path + ".json");
    require(js.good(), "read_partial_dn: missing sidecar " + path + ".json");
    nlohmann::json meta = nlohmann::json::parse(js);
    require(meta.value("schema", "") == "cwg-dnmap/1", "read_partial_dn: unsupported sidecar schema");
    map.theta = meta.at("theta").get<double>();
    map.in_basis.K = meta.at("in_K").get<int>();
    map.in_basis.center = meta.at("in_center").get<int>();
    map.in_basis.vertices = meta.at("in_vertices").get<std::vector<int>>();
    map.out_K = meta.at("out_K").get<int>();
    map.out_center = meta.at("out_center").get<int>();
    map.out_vertices = meta.at("out_vertices").get<std::vector<int>>();
    map.mesh_hash = std::stoull(meta.at("mesh_hash").get<std::string>(), nullptr, 16);
    map.potential_hash = std::stoull(meta.at("potential_hash").get<std::string>(), nullptr, 16);
    return map;
}

}  // namespace cwg::forward
