// Divergence-form boundary data through the Liouville transform: admissible
// conductivities, the induced Schroedinger potential, the weighted boundary
// map built from partial DN data, and the H1 stability chain for
// conductivity differences.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cwg/common.hpp"
#include "cwg/forward.hpp"
#include "cwg/geometry.hpp"
#include "cwg/recon.hpp"
#include "cwg/spectral.hpp"

namespace cwg::conductivity {

using forward::PartialDNMap;
using forward::PotentialField;
using geometry::BoundaryPartition;
using geometry::Mesh;
using spectral::FiberContext;

// 1-periodic scalar conductivity as axial modes with nodal cross-section
// coefficients.  Presets carry closed-form value / gradient / Laplacian so
// derived quantities (the induced potential, boundary normal derivatives) are
// exact; grid-loaded fields fall back to discrete differentiation.
struct ConductivityField {
    int M = 0;
    MatXc modes;               // (2M+1) x n_vertices, row r is mode r-M
    double a_star = 1.0;       // declared ellipticity floor
    double bound_plus = 1.0;   // declared M+: W^{1,inf} bound and potential sup bound
    double bound_minus = 0.5;  // declared M- for the induced potential's negative part
    std::function<double(double, const Vec2&)> value;               // a(x1, x')
    std::function<Eigen::Vector3d(double, const Vec2&)> grad;       // (d1, dx, dy) a
    std::function<double(double, const Vec2&)> lap;                 // 3D Laplacian of a

    VecXc mode_row(int m) const;
    bool has_closures() const { return value && grad && lap; }
    std::uint64_t content_hash() const;
};

ConductivityField conductivity_constant(const Mesh& mesh, double c);
// a = e^{s x2} with x2 the first transverse coordinate; induced potential s^2/4
ConductivityField conductivity_exponential(const Mesh& mesh, double s);
// a = c0 + amp (1 - |x'-c|^2/rho^2)^2 (1 + ax_amp cos(2 pi x1)) inside the
// bump disk, c0 outside; vanishes to second order at the bump rim so pairs
// sharing c0 satisfy both trace compatibility conditions exactly
ConductivityField conductivity_bump(const Mesh& mesh, double c0, double amp, const Vec2& center,
                                    double rho, double ax_amp = 0.0);
// base plus the same compact bump; the base must carry closures.  Declared
// bounds are refreshed from samples of the summed field.
ConductivityField conductivity_with_bump(const Mesh& mesh, const ConductivityField& base,
                                         double amp, const Vec2& center, double rho,
                                         double ax_amp = 0.0);

// Versioned text container ("cwg-cond/1"); loaded fields carry no closures.
void write_conductivity(const ConductivityField& a, const Mesh& mesh, const std::string& path);
ConductivityField read_conductivity(const std::string& path, const Mesh& mesh);

// induced potential a^{-1/2} Lap a^{1/2} = Lap(a)/(2a) - |grad a|^2 / (4 a^2)
struct LiouvilleResult {
    PotentialField V;
    double sup = 0.0;      // sampled sup |V_a|
    double neg_sup = 0.0;  // sampled sup of max(0, -V_a)
    bool within_bounds = true;
};
LiouvilleResult liouville_potential(const ConductivityField& a, const Mesh& mesh, int M_out = -1);

struct ConductivityReport {
    bool periodic = true;        // structural in the mode representation
    bool floor_ok = false;       // min sample >= a_star
    bool w1inf_ok = false;       // max(sup|a|, sup|grad a|) <= bound_plus
    bool v_bounds_ok = false;    // induced potential within (bound_plus, bound_minus)
    bool smallness_grad = false; // |a|_W1inf^2 + 2 a* sup|Lap a| <= 4 M- a*^2
    bool smallness_w2 = false;   // |a|_W2inf <= 4 M- / (sqrt(4M-+1)+1) a*
    bool admissible = false;     // floor && w1inf && v_bounds
    double min_sample = 0.0, w1inf = 0.0, lap_sup = 0.0, w2inf = 0.0;
    double v_sup = 0.0, v_neg_sup = 0.0;
};
ConductivityReport admissibility_check(const ConductivityField& a, const Mesh& mesh);

// Weighted boundary map: shrink the mode windows of `dn` by `pad` and wrap it
// in the sqrt-conductivity mode convolutions, subtracting the
// normal-derivative correction on the input/output overlap.  a == 1 reduces
// to the plain window shrink.  The returned map's gram is the weighted input
// norm, so operator norms against it live in the weighted spaces.
PartialDNMap sigma_from_lambda(const Mesh& mesh, const ConductivityField& a,
                               const PartialDNMap& dn, int pad);

struct SigmaDifference {
    double norm = 0.0;         // weighted-map difference norm
    double lambda_norm = 0.0;  // plain DN difference norm on matching windows
    bool g4_ok = false;        // lambda_norm <= norm / sqrt(a1.a_star)
    double trace_gap = 0.0;    // max |a1 - a2| over boundary samples
    double normal_gap = 0.0;   // max |dnu a1 - dnu a2| over overlap samples
};

// Difference of the weighted maps per the shared-weight identity (both sides
// wrapped with sqrt(a1)); rejects pairs whose boundary compatibility exceeds
// the absolute tolerance 1e-10.
SigmaDifference sigma_difference_norm(const Mesh& mesh, const ConductivityField& a1,
                                      const ConductivityField& a2, const PartialDNMap& dn1,
                                      const PartialDNMap& dn2, const BoundaryPartition& part,
                                      int pad);

struct AlphaCheck {
    double direct_h1 = 0.0;  // 1-periodic H1 norm of sqrt(a1) - sqrt(a2) from samples
    double solve_h1 = 0.0;   // the same field through the potential-difference solve
    double gap_rel = 0.0;    // H1 norm of (direct - solve) / direct
    double residual = 0.0;   // discrete equation residual of the solve
};

struct CondStabilityConfig {
    std::vector<double> scales{1.0};
    double theta = 0.0;
    double gamma_star = 1e-8;
    int K = 6;       // wide DN window half-width
    int in_K = 3;    // wide input-basis half-width
    int pad = 2;     // sqrt-convolution mode padding
    int n_axial = 32;
};

struct CondStabilityRow {
    double s = 0.0;
    double sigma_norm = 0.0, lambda_norm = 0.0;
    double h1 = 0.0;        // ||a1 - a2||_{H1(cell)}
    double alpha_h1 = 0.0;  // ||sqrt(a1) - sqrt(a2)||_{H1(cell)}
    double phi = 0.0;       // modulus of a_*^{-1/2} sigma_norm
    double ratio = 0.0;     // h1 / phi
    bool g4_ok = false;
    bool factor_ok = false;  // h1 <= 2 a*^{-1/2} M+ alpha_h1
    bool skipped = false;
};

struct CondStabilityReport {
    std::vector<CondStabilityRow> rows;
    AlphaCheck alpha;  // cross-check at the largest usable scale
    double fitted_C = 0.0, spread = 1.0;
    double gamma_star = 0.0;
    std::string warning;
};

CondStabilityReport conductivity_stability(const Mesh& mesh, const BoundaryPartition& part,
                                           const ConductivityField& a1,
                                           const std::function<ConductivityField(double)>& family,
                                           const CondStabilityConfig& cfg);

}  // namespace cwg::conductivity
