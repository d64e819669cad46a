// Estimation chain from boundary data: pairing of a DN difference against the
// two solution families, Fourier-coefficient recovery of a potential
// difference, truncated synthesis, the negative-order dual norm, the log-log
// stability modulus, and the stability experiment harness.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cwg/cgo.hpp"
#include "cwg/common.hpp"
#include "cwg/forward.hpp"
#include "cwg/geometry.hpp"
#include "cwg/spectral.hpp"

namespace cwg::recon {

using cgo::CGOParams;
using cgo::CGOSolution;
using forward::PartialDNMap;
using forward::PotentialField;
using geometry::BoundaryPartition;
using geometry::Mesh;
using spectral::CellField;
using spectral::FiberContext;

// Piecewise modulus: gamma on [gamma_star, inf), 1/ln|ln gamma| on
// (0, gamma_star), 0 at 0.  gamma_star < e^-e keeps the middle branch below 1
// and the whole function nondecreasing.
double stability_modulus(double gamma, double gamma_star);

// tau(gamma) = max(floor, ln ln(1/gamma) / c_hat) capped at `cap`; gamma = 0
// maps to the cap (exact data: push tau as far as the solver allows).
struct TauPolicy {
    double floor = 20.0;
    double cap = 200.0;
    double c_hat = 1.0;
};
double tau_for_gamma(double gamma, const TauPolicy& policy);

struct PairingResult {
    cplx value;            // integral of [(L2-L1)f] conj(u1) over the observable arc
    double budget_tau = 0.0;    // remainder-driven term (decays like 1/tau)
    double budget_noise = 0.0;  // data-noise term gamma * |f| * |trace u1|
    double f_norm = 0.0;        // lift norm of the injected trace
    double t_norm = 0.0;        // observable-arc norm of the smooth-family trace
};

// Discrete pairing of the DN difference (dn2 - dn1) applied to the trace of
// the vanishing-family solution against the smooth-family trace, integrated
// over the epsilon shadow arc for +xi (which must lie inside the output face).
// dv_sup is the caller's sup bound on V2-V1 (budget only); gamma the assumed
// operator-norm noise level of the data.
PairingResult pairing_from_boundary(const PartialDNMap& dn2, const PartialDNMap& dn1,
                                    const CGOSolution& u2, const CGOSolution& u1,
                                    const BoundaryPartition& part, const Mesh& mesh, double eps,
                                    double dv_sup, double gamma = 0.0);

struct FrequencySample {
    int k = 0;
    Vec2 eta{0.0, 0.0};
    double tau = 0.0, r = 0.0, theta = 0.0;
    cplx estimate;              // recovered FT(V2 - V1)(2 pi k, eta)
    double budget_tau = 0.0;
    double budget_noise = 0.0;
};

struct CoefficientRequest {
    int k = 1;
    Vec2 eta{0.0, 2.0 * pi};
    double theta = 0.0;
    Vec2 xi0{1.0, 0.0};       // probe direction of the partition
    double eps = 0.25;        // face half-width from geometry::choose_epsilon
    double r = 0.5;           // used when tau_target <= 0
    double tau_target = 0.0;  // > 0: pick r through the tau quantization
    double gamma = 0.0;       // assumed data noise (budget + policy input)
    double dv_sup = 0.0;      // 0: fall back to declared potential bounds
    int window_margin = 3;    // extra modes kept around the coupled windows
};

// Full chain for one target frequency: CGO pair, partial DN data simulated
// from both potentials, boundary pairing.  The estimate approximates
// FT(V2-V1)(2 pi k, eta) = int (V2-V1) e^{-i(2 pi k x1 + eta.x')}.
FrequencySample estimate_fourier_coefficient(const Mesh& mesh, const BoundaryPartition& part,
                                             const PotentialField& V1, const PotentialField& V2,
                                             const CoefficientRequest& req);

struct ReconTarget {
    int k = 0;
    Vec2 eta{0.0, 0.0};
};

struct ProbeSetup {
    Vec2 xi0{1.0, 0.0};
    BoundaryPartition part;
    double eps = 0.25;
};

struct ReconstructionOptions {
    double theta = 0.0;
    double tau_target = 12.0;
    double gamma = 0.0;
    double dv_sup = 0.0;
    int n_axial = 0;  // 0: derived from the largest |k| in the targets
};

struct Reconstruction {
    CellField field;  // synthesized difference on the ctx grid (real part kept)
    FiberContext ctx;
    std::vector<FrequencySample> samples;
    std::vector<ReconTarget> gaps;  // targets outside every probe's sector
    double coverage = 0.0;          // sampled fraction of the target list
};

// Sector-truncated synthesis: each target holds one representative per
// conjugate frequency pair; the synthesized field adds the estimated harmonic
// and its conjugate with the 1/|omega| normalization.
Reconstruction reconstruct_difference(const Mesh& mesh, const std::vector<ProbeSetup>& probes,
                                      const PotentialField& V1, const PotentialField& V2,
                                      const std::vector<ReconTarget>& targets,
                                      const ReconstructionOptions& opt);

// Negative-order dual norm of a cell field through one Riesz solve per axial
// mode: dirichlet uses the sine basis and zero trace on the whole cell
// boundary (end faces included); periodic uses e^{2 pi i n x1} modes with zero
// trace on the lateral boundary only.
enum class DualClass { dirichlet, periodic };
double h_minus1_norm(const Mesh& mesh, const FiberContext& ctx, const CellField& W,
                     DualClass cls = DualClass::dirichlet);

// V1 - V2 sampled on the grid of ctx (mode synthesis; exact for mode data).
CellField difference_field(const Mesh& mesh, const FiberContext& ctx, const PotentialField& V1,
                           const PotentialField& V2);

// Deterministic noise injection: perturbs the DN matrix by a pseudo-random
// direction rescaled so the operator-norm distance to the input is `gamma`.
PartialDNMap inject_dn_noise(const PartialDNMap& map, double gamma, std::uint64_t seed);

struct StabilityConfig {
    std::vector<double> scales;      // perturbation parameters s, nonnegative
    double gamma_star = 1e-8;
    double theta = 0.0;
    std::vector<double> theta_grid;  // size > 1: sup of the DN gap over fibers
    int K = 4, in_K = 2;             // DN window and input-basis half-widths
    DualClass dual = DualClass::dirichlet;
    unsigned workers = 0;
};

struct StabilityRow {
    double s = 0.0, gamma = 0.0, delta = 0.0, phi = 0.0, ratio = 0.0;
    bool skipped = false;
};

struct StabilityReport {
    std::vector<StabilityRow> rows;
    double fitted_C = 0.0;  // max of delta / Phi(gamma) over rows with phi > 0
    double spread = 1.0;    // max/min of those ratios
    double gamma_star = 0.0;
    std::string warning;
};

// gamma(s) from the DN gap, delta(s) from the dual norm of the true
// difference, ratio against the modulus; inadmissible members are skipped
// with a warning instead of aborting the sweep.
StabilityReport run_stability_experiment(const Mesh& mesh, const BoundaryPartition& part,
                                         const PotentialField& V1,
                                         const std::function<PotentialField(double)>& family,
                                         const StabilityConfig& cfg);

}  // namespace cwg::recon
