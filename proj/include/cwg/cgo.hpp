// Complex-frequency solution families on the cell: exact parameter algebra,
// the periodic remainder built on a transverse torus (shifted-lattice Green
// multiplier), and the boundary-vanishing remainder built as an
// equality-constrained weighted least-squares problem.
#pragma once

#include <functional>
#include <vector>

#include "cwg/common.hpp"
#include "cwg/forward.hpp"
#include "cwg/geometry.hpp"
#include "cwg/spectral.hpp"

namespace cwg::cgo {

using forward::PotentialField;
using geometry::Mesh;
using spectral::CellField;
using spectral::FiberContext;

using Vec3 = Eigen::Vector3d;
using Vec3c = Eigen::Vector3cd;

// Complex frequency pair: zeta1 + conj(zeta2) = i(2*pi*k, eta) exactly, both
// null (zeta.zeta = 0) and theta-compatible in the axial component.
struct CGOParams {
    int k = 0;          // target axial frequency
    Vec2 eta;           // target transverse frequency, nonzero
    Vec2 xi;            // unit direction, xi . eta = 0
    double r = 0.0;
    double theta = 0.0;
    Vec3 ell = Vec3::Zero();
    double tau = 0.0;
    Vec3c zeta1, zeta2;
    int mode1 = 0;  // axial mode of e^{zeta1 . x}: first component = i(theta + 2*pi*mode1)
    int mode2 = 0;  // axial mode of e^{zeta2 . x}
};

// xi defaults to the +90 degree rotation of eta/|eta|; the probe overload
// flips its sign to approach the probe direction.
CGOParams make_cgo_params(int k, const Vec2& eta, double r, double theta);
CGOParams make_cgo_params(int k, const Vec2& eta, double r, double theta, const Vec2& probe);
// explicit xi (must be unit and orthogonal to eta)
CGOParams make_cgo_params_xi(int k, const Vec2& eta, double r, double theta, const Vec2& xi);

// nearest achievable tau: tau is quantized through floor(r), so the returned
// params land on the admissible value closest to tau_target
CGOParams params_for_tau(int k, const Vec2& eta, double theta, double tau_target, const Vec2& probe);

struct CGOSolution {
    enum class Kind { smooth, vanishing };

    CGOParams params;
    Kind kind = Kind::smooth;
    FiberContext ctx;    // window the reconstructed u lives on
    CellField remainder; // v_zeta on the ctx grid (O(1) amplitudes, no phase growth)
    MatXc u_modes;       // ctx.n_modes() x n_vertices, modes of u = e^{zeta.x}(1 + v_zeta)
    double remainder_l2 = 0.0;  // ||v_zeta||_{L2(cell)}
    double weighted_l2 = 0.0;   // vanishing: sqrt of the minimized objective; smooth: = remainder_l2
    double residual = 0.0;      // relative equation residual in the native discretization
    double trace_defect = 0.0;  // vanishing: |u| on the constrained face / boundary scale
    int iterations = 0;

    CGOSolution(const CGOParams& p, Kind kd, const FiberContext& c)
        : params(p), kind(kd), ctx(c) {}
};

struct SmoothOptions {
    int n_axial = 32;       // FFT points along the period
    int n_transverse = 96;  // transverse torus grid per side
    double box_scale = 1.35;  // torus half-side = box_scale * max radius of omega
    double tol = 1e-12;
    int max_iter = 60;
    int window_K = -1;  // u-window half width; -1 = |k| + V.M + 3
};

// Periodic remainder: fixed point of v = -G[V(1+v)] on (0,1) x torus with the
// half-shifted transverse lattice in the xi direction (|Im symbol| >= 2 pi
// tau / L keeps the iteration a contraction for admissible V).
CGOSolution solve_cgo_smooth(const Mesh& mesh, const PotentialField& V, const CGOParams& p,
                             const SmoothOptions& opt = {});

struct VanishingOptions {
    int window_K = -1;      // -1 = |k| + V.M + 3
    double feas_tol = 1e-8;
    bool full_dirichlet = false;  // diagnostic: constrain the whole boundary (comparison field)
};

// Boundary-vanishing remainder: minimizes the weight-scaled L2 norm subject
// to the interior equation and u = 0 on the deep-shadow arc; solved in the
// scaled variable e^{-tau xi . x'} v so all matrix entries stay O(e^{tau h}).
CGOSolution solve_cgo_vanishing(const Mesh& mesh, const PotentialField& V, const CGOParams& p,
                                double eps, const VanishingOptions& opt = {});

struct DecayLadder {
    std::vector<double> tau, norm, weighted, residual;
    double slope = 0.0;  // least-squares slope of log norm vs log tau
};

DecayLadder decay_ladder(const Mesh& mesh, const PotentialField& V, int k, const Vec2& eta,
                         double theta, const std::vector<double>& taus, bool vanishing,
                         double eps, unsigned workers = 0);

// --- empirical weighted-inequality check --------------------------------

// Analytic test field w = e^{i(theta + 2 pi k_ax) x1} * phi(x'), phi zero on
// the rim of the disk; closures give exact transverse Laplacian and normal
// derivative so the check is quadrature-only.
struct CarlemanField {
    std::function<double(const Vec2&)> value;
    std::function<double(const Vec2&)> lap;
    std::function<double(const Vec2&)> dnu;  // radial derivative on |x'| = R
    int k_ax = 0;
    bool boundary_touching = true;
};

std::vector<CarlemanField> random_carleman_fields(std::uint64_t seed, int count, double radius);

struct CarlemanRow {
    double tau = 0.0;
    double min_ratio = 0.0;
    std::vector<double> ratios;
};

// ratio per (field, tau): [weighted eq norm^2 + tau * outflow boundary term] /
// [weighted field norm^2 + tau * inflow boundary term]; disk cross-sections only
std::vector<CarlemanRow> carleman_empirical(const PotentialField& V, const Mesh& mesh,
                                            const Vec2& xi, double theta,
                                            const std::vector<double>& taus,
                                            const std::vector<CarlemanField>& fields);

}  // namespace cwg::cgo
