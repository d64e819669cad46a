// Axial Fourier machinery for the quasi-periodic fiber problems: projection
// onto the modes e^{i(theta+2k pi)x1}, synthesis, the per-mode operator, the
// membership test, and the fiber decomposition of compactly supported data.
#pragma once

#include <optional>
#include <vector>

#include "cwg/common.hpp"
#include "cwg/geometry.hpp"

namespace cwg::spectral {

using geometry::Mesh;

// Discrete fiber: quasimomentum theta in [0,2pi), modes center-K..center+K.
// center=0 gives the symmetric window -K..K; recovery work recenters the
// window at the axial frequency of a CGO phase.  The x1 grid has n_axial
// uniform intervals on [0,1] (n_axial+1 stored points, both endpoints kept so
// trace conditions are directly testable); n_axial >= 4K+4.
struct FiberContext {
    double theta = 0.0;
    int K = 1;
    int center = 0;
    int n_axial = 8;

    FiberContext() = default;
    FiberContext(double theta_, int K_, int center_ = 0, int n_axial_ = 0);

    int n_modes() const { return 2 * K + 1; }
    int mode(int row) const { return center - K + row; }          // row -> mode index k
    int row_of(int k) const { return k - center + K; }            // mode index -> row, may be out of range
    bool has_mode(int k) const { return std::abs(k - center) <= K; }
    double beta(int k) const { return theta + 2.0 * pi * k; }     // axial frequency of mode k
    double x1(int j) const { return static_cast<double>(j) / n_axial; }
};

// Field sampled on the closed x1 grid (rows) times mesh vertices (cols).
struct CellField {
    MatXc values;  // (n_axial+1) x n_vertices

    static CellField zero(const FiberContext& ctx, const Mesh& mesh);
};

// Per-mode nodal coefficient stack; row r holds mode ctx.mode(r).
struct ModeExpansion {
    double theta = 0.0;
    int K = 1;
    int center = 0;
    std::uint64_t mesh_hash = 0;
    MatXc coeff;  // n_modes x n_vertices

    VecXc mode_row(int k) const;  // coefficients of mode k (throws if absent)
};

// Trapezoid projection of v onto the fiber modes; exact for fields that are
// band limited to the window when the grid obeys n_axial >= 4K+4.
ModeExpansion fiber_project(const FiberContext& ctx, const Mesh& mesh, const CellField& v);

// Evaluates the mode sum back onto the x1 grid.
CellField fiber_synthesize(const FiberContext& ctx, const Mesh& mesh, const ModeExpansion& m);

// (-Laplacian_x' + beta_k^2) applied per mode: M^{-1} K vhat_k + beta_k^2 vhat_k.
ModeExpansion mode_operator_apply(const FiberContext& ctx, const Mesh& mesh, const ModeExpansion& m);

// Membership test for the quasi-periodic class.  Two defects:
//  * trace: || v(1,.) - e^{i theta} v(0,.) || plus the same twist mismatch for
//    one-sided second-order d1 differences of the out-of-band residual
//    (applied raw, finite-difference truncation of in-band mode sums would
//    mask the check), relative to ||v||;
//  * mode: with lap = -Laplacian v supplied, the per-mode identity
//    (K + beta_k^2 M) vhat_k = M laphat_k on interior vertices; without lap,
//    the projection defect || v - synth(project(v)) || / || v ||.
// The verdicts agree except when both defects sit within a factor 10 of tol.
struct MembershipReport {
    bool member = false;
    double trace_defect = 0.0;
    double mode_defect = 0.0;
    bool verdicts_agree = true;
};
MembershipReport quasi_periodic_membership(const FiberContext& ctx, const Mesh& mesh,
                                           const CellField& v,
                                           const std::optional<CellField>& lap, double tol);

// L2(cell) norm: trapezoid in x1, consistent P1 mass in x'.
double cell_norm(const FiberContext& ctx, const Mesh& mesh, const CellField& v);

// Fiber decomposition (Uf)_theta(x) = sum_n e^{-i n theta} f(x1+n, x'): slices
// holds f(. + n, .) for n = n0..n0+S-1; returns one cell field per theta.
std::vector<CellField> fbg_forward(const std::vector<CellField>& slices, int n0,
                                   const std::vector<double>& theta_grid);

// Binary container (magic "CWGMODE1"): header carries theta, K, center and the
// source mesh hash; loading onto a mesh with a different hash is rejected.
void write_mode_expansion(const ModeExpansion& m, const std::string& path);
ModeExpansion read_mode_expansion(const std::string& path, std::uint64_t expect_mesh_hash);

}  // namespace cwg::spectral
