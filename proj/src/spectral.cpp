#include "cwg/spectral.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cwg/fem.hpp"

namespace cwg::spectral {

FiberContext::FiberContext(double theta_, int K_, int center_, int n_axial_)
    : theta(theta_), K(K_), center(center_), n_axial(n_axial_) {
    require(theta >= 0.0 && theta < 2.0 * pi, "FiberContext: theta must lie in [0, 2pi)");
    require(K >= 0, "FiberContext: K must be >= 0");
    if (n_axial == 0) n_axial = 4 * K + 4;
    require(n_axial >= 4 * K + 4, "FiberContext: x1 grid needs at least 4K+4 intervals");
}

CellField CellField::zero(const FiberContext& ctx, const Mesh& mesh) {
    CellField f;
    f.values = MatXc::Zero(ctx.n_axial + 1, static_cast<Eigen::Index>(mesh.n_vertices()));
    return f;
}

VecXc ModeExpansion::mode_row(int k) const {
    int row = k - center + K;
    require(row >= 0 && row < coeff.rows(), "ModeExpansion: mode " + std::to_string(k) + " not in window");
    return coeff.row(row).transpose();
}

ModeExpansion fiber_project(const FiberContext& ctx, const Mesh& mesh, const CellField& v) {
    require(v.values.rows() == ctx.n_axial + 1, "fiber_project: x1 grid size mismatch");
    require(v.values.cols() == static_cast<Eigen::Index>(mesh.n_vertices()),
            "fiber_project: vertex count mismatch");
    ModeExpansion m;
    m.theta = ctx.theta;
    m.K = ctx.K;
    m.center = ctx.center;
    m.mesh_hash = mesh.content_hash();
    m.coeff = MatXc::Zero(ctx.n_modes(), v.values.cols());
    int N = ctx.n_axial;
    for (int r = 0; r < ctx.n_modes(); ++r) {
        double beta = ctx.beta(ctx.mode(r));
        for (int j = 0; j <= N; ++j) {
            double w = (j == 0 || j == N) ? 0.5 / N : 1.0 / N;  // trapezoid
            cplx ph = std::exp(cplx(0.0, -beta * ctx.x1(j)));
            m.coeff.row(r) += (w * ph) * v.values.row(j);
        }
    }
    return m;
}

CellField fiber_synthesize(const FiberContext& ctx, const Mesh& mesh, const ModeExpansion& m) {
    require(m.coeff.rows() == ctx.n_modes(), "fiber_synthesize: window mismatch");
    require(m.coeff.cols() == static_cast<Eigen::Index>(mesh.n_vertices()),
            "fiber_synthesize: vertex count mismatch");
    CellField v = CellField::zero(ctx, mesh);
    for (int j = 0; j <= ctx.n_axial; ++j)
        for (int r = 0; r < ctx.n_modes(); ++r) {
            cplx ph = std::exp(cplx(0.0, ctx.beta(ctx.mode(r)) * ctx.x1(j)));
            v.values.row(j) += ph * m.coeff.row(r);
        }
    return v;
}

ModeExpansion mode_operator_apply(const FiberContext& ctx, const Mesh& mesh, const ModeExpansion& m) {
    require(m.coeff.cols() == static_cast<Eigen::Index>(mesh.n_vertices()),
            "mode_operator_apply: vertex count mismatch");
    SpMat K = fem::stiffness(mesh);
    SpMat M = fem::mass(mesh);
    Eigen::SimplicialLDLT<SpMat> mass_ldlt(M);
    if (mass_ldlt.info() != Eigen::Success) throw SolverError("mode_operator_apply: mass factorization failed");
    ModeExpansion out = m;
    for (int r = 0; r < m.coeff.rows(); ++r) {
        int k = m.center - m.K + r;
        double b = ctx.beta(k);
        VecXc row = m.coeff.row(r).transpose();
        VecX re = mass_ldlt.solve(K * row.real());
        VecX im = mass_ldlt.solve(K * row.imag());
        out.coeff.row(r) = (re.cast<cplx>() + iu * im.cast<cplx>() + (b * b) * row).transpose();
    }
    return out;
}

double cell_norm(const FiberContext& ctx, const Mesh& mesh, const CellField& v) {
    SpMatc M = fem::mass(mesh).cast<cplx>();
    double s = 0.0;
    int N = ctx.n_axial;
    for (int j = 0; j <= N; ++j) {
        double w = (j == 0 || j == N) ? 0.5 / N : 1.0 / N;
        VecXc row = v.values.row(j).transpose();
        s += w * row.dot(M * row).real();  // Eigen dot conjugates the first argument
    }
    return std::sqrt(std::max(0.0, s));
}

MembershipReport quasi_periodic_membership(const FiberContext& ctx, const Mesh& mesh,
                                           const CellField& v,
                                           const std::optional<CellField>& lap, double tol) {
    require(tol > 0.0, "quasi_periodic_membership: tol must be positive");
    MembershipReport rep;
    int N = ctx.n_axial;
    double h1 = 1.0 / N;
    cplx twist = std::exp(cplx(0.0, ctx.theta));
    double vnorm = std::max(v.values.norm(), 1e-300);

    ModeExpansion vm = fiber_project(ctx, mesh, v);
    CellField back = fiber_synthesize(ctx, mesh, vm);

    // trace defects at x1 = 0,1.  The value rows compare directly.  The d1
    // stencils act on the out-of-band residual: on in-band mode sums the
    // one-sided truncation error is itself quasi-periodic and cancels, while a
    // genuine derivative break forces out-of-band content and survives.
    MatXc resid = v.values - back.values;
    Eigen::RowVectorXcd d_lo = (-3.0 * resid.row(0) + 4.0 * resid.row(1) - resid.row(2)) / (2 * h1);
    Eigen::RowVectorXcd d_hi = (3.0 * resid.row(N) - 4.0 * resid.row(N - 1) + resid.row(N - 2)) / (2 * h1);
    double trace0 = (v.values.row(N) - twist * v.values.row(0)).norm();
    double trace1 = (d_hi - twist * d_lo).norm() * h1;  // scale d1 defect back to field units
    rep.trace_defect = (trace0 + trace1) / vnorm;

    if (lap.has_value()) {
        // per-mode identity (K + beta^2 M) vhat = M laphat on interior vertices
        ModeExpansion hm = fiber_project(ctx, mesh, *lap);
        SpMatc K = fem::stiffness(mesh).cast<cplx>();
        SpMatc M = fem::mass(mesh).cast<cplx>();
        fem::IndexSplit split(mesh);
        double num = 0.0, den = 0.0;
        for (int r = 0; r < vm.coeff.rows(); ++r) {
            double b = ctx.beta(ctx.mode(r));
            VecXc vr = vm.coeff.row(r).transpose();
            VecXc lhs = K * vr + (b * b) * (M * vr);
            VecXc rhs = M * hm.coeff.row(r).transpose();
            for (int i : split.interior) {
                num += std::norm(lhs[i] - rhs[i]);
                den += std::norm(lhs[i]) + std::norm(rhs[i]);
            }
        }
        rep.mode_defect = std::sqrt(num / std::max(den, 1e-300));
    } else {
        rep.mode_defect = (back.values - v.values).norm() / vnorm;
    }

    bool by_trace = rep.trace_defect < tol;
    bool by_mode = rep.mode_defect < tol;
    rep.member = by_trace && by_mode;
    // the two tests are equivalent in the continuum; discretely they may only
    // disagree when both defects graze the tolerance
    auto grazing = [tol](double d) { return d > 0.1 * tol && d < 10 * tol; };
    rep.verdicts_agree = (by_trace == by_mode) ||
                         (grazing(rep.trace_defect) && grazing(rep.mode_defect));
    return rep;
}

std::vector<CellField> fbg_forward(const std::vector<CellField>& slices, int n0,
                                   const std::vector<double>& theta_grid) {
    require(!slices.empty(), "fbg_forward: need at least one slice");
    for (const auto& s : slices)
        require(s.values.rows() == slices[0].values.rows() && s.values.cols() == slices[0].values.cols(),
                "fbg_forward: slice shape mismatch");
    std::vector<CellField> out;
    out.reserve(theta_grid.size());
    for (double theta : theta_grid) {
        CellField acc;
        acc.values = MatXc::Zero(slices[0].values.rows(), slices[0].values.cols());
        for (std::size_t s = 0; s < slices.size(); ++s) {
            int n = n0 + static_cast<int>(s);
            acc.values += std::exp(cplx(0.0, -n * theta)) * slices[s].values;
        }
        out.push_back(std::move(acc));
    }
    return out;
}

void write_mode_expansion(const ModeExpansion& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "write_mode_expansion: cannot open " + path);
    const char magic[8] = {'C', 'W', 'G', 'M', 'O', 'D', 'E', '1'};
    out.write(magic, 8);
    std::int32_t K = m.K, center = m.center;
    std::int64_t rows = m.coeff.rows(), cols = m.coeff.cols();
    out.write(reinterpret_cast<const char*>(&m.theta), sizeof(double));
    out.write(reinterpret_cast<const char*>(&K), sizeof(K));
    out.write(reinterpret_cast<const char*>(&center), sizeof(center));
    out.write(reinterpret_cast<const char*>(&m.mesh_hash), sizeof(m.mesh_hash));
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(m.coeff.data()),
              static_cast<std::streamsize>(sizeof(cplx) * static_cast<std::size_t>(rows * cols)));
    require(out.good(), "write_mode_expansion: write failed");
}

ModeExpansion read_mode_expansion(const std::string& path, std::uint64_t expect_mesh_hash) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "read_mode_expansion: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    require(in.good() && std::string(magic, 8) == "CWGMODE1", "read_mode_expansion: bad magic");
    ModeExpansion m;
    std::int32_t K, center;
    std::int64_t rows, cols;
    in.read(reinterpret_cast<char*>(&m.theta), sizeof(double));
    in.read(reinterpret_cast<char*>(&K), sizeof(K));
    in.read(reinterpret_cast<char*>(&center), sizeof(center));
    in.read(reinterpret_cast<char*>(&m.mesh_hash), sizeof(m.mesh_hash));
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    require(in.good() && rows > 0 && cols > 0 && rows == 2 * static_cast<std::int64_t>(K) + 1,
            "read_mode_expansion: corrupt header");
    if (expect_mesh_hash != 0 && m.mesh_hash != expect_mesh_hash)
        throw ValidationError("read_mode_expansion: mesh hash mismatch (file " + path + ")");
    m.K = K;
    m.center = center;
    m.coeff.resize(rows, cols);
    in.read(reinterpret_cast<char*>(m.coeff.data()),
            static_cast<std::streamsize>(sizeof(cplx) * static_cast<std::size_t>(rows * cols)));
    require(in.good(), "read_mode_expansion: truncated payload");
    return m;
}

}  // namespace cwg::spectral
