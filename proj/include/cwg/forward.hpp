// Fibered forward problem on the elementary cell (0,1) x omega: quasi-periodic
// Schroedinger solves, variational flux recovery, and partial
// Dirichlet-to-Neumann matrices with the lift-based input norm.
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cwg/common.hpp"
#include "cwg/geometry.hpp"
#include "cwg/spectral.hpp"

namespace cwg::forward {

using geometry::BoundaryPartition;
using geometry::Mesh;
using spectral::CellField;
using spectral::FiberContext;
using spectral::ModeExpansion;

// 1-periodic real potential as axial Fourier modes (-M..M) with nodal
// cross-section coefficients.  Reality means row(-m) = conj(row(m)); checked
// on construction of every preset and on load.
struct PotentialField {
    int M = 0;
    MatXc modes;               // (2M+1) x n_vertices, row r is mode r-M
    double bound_plus = 0.0;   // declared sup bound on |V|
    double bound_minus = 0.0;  // declared sup bound on the negative part
    // closed-form evaluator when the potential is a symbolic preset
    std::function<double(double, const Vec2&)> analytic;

    VecXc mode_row(int m) const;
    CellField sample(const FiberContext& ctx, const Mesh& mesh) const;
    std::uint64_t content_hash() const;
};

void check_reality(const PotentialField& V);

// Presets.  Bumps are (1 - |x'-c|^2/rho^2)^3 inside the disk of radius rho,
// zero outside (C2 across the edge, supported strictly inside omega when
// |c| + rho < dist(0, boundary)).
PotentialField potential_zero(const Mesh& mesh);
PotentialField potential_constant(const Mesh& mesh, double c, double bound_minus_margin = 0.0);
PotentialField potential_bump(const Mesh& mesh, double c0, double amp, const Vec2& center, double rho);
PotentialField potential_axial_cosine(const Mesh& mesh, double c0, double amp, const Vec2& center, double rho);
// sum of `n_bumps` random bumps times random axial modes |m|<=M, rescaled so
// the sampled sup is `target_sup`; deterministic in `seed`
PotentialField potential_random(const Mesh& mesh, std::uint64_t seed, int M, int n_bumps,
                                double target_sup, double bound_minus);

struct AdmissibilityReport {
    bool admissible = false;
    double sup_abs = 0.0;       // sampled sup |V|
    double sup_neg = 0.0;       // sampled sup of the negative part
    double poincare = 0.0;      // C_omega used for the comparison
};
AdmissibilityReport check_admissible(const PotentialField& V, const FiberContext& ctx,
                                     const Mesh& mesh, double poincare_constant);

// Dirichlet basis on F': vertices of the F' arc all of whose incident
// boundary edges belong to F', one hat function per (mode, vertex).  Flat
// column index = mode_row * n_vertices + vertex_slot.
struct BoundaryBasis {
    std::vector<int> vertices;  // mesh vertex ids
    int K = 0;                  // window half width
    int center = 0;             // window center
    int n_modes() const { return 2 * K + 1; }
    int dim() const { return n_modes() * static_cast<int>(vertices.size()); }
    int mode(int row) const { return center - K + row; }
};
BoundaryBasis face_interior_basis(const Mesh& mesh, const geometry::FaceSet& face, int K, int center);

struct DirichletData {
    BoundaryBasis basis;
    VecXc coeff;  // dim() entries
};

// One assembled fiber operator: block Hermitian system over (window modes) x
// (all vertices) with the potential entering through mode-convolution mass
// matrices.  Factorized once; solves are cheap afterwards.
class FiberOperator {
  public:
    FiberOperator(const Mesh& mesh, const FiberContext& ctx, const PotentialField& V);

    struct Solution {
        ModeExpansion field;  // all vertices
        ModeExpansion flux;   // nodal normal derivative, nonzero only at boundary vertices
        double pde_residual = 0.0;
    };

    // g: full boundary trace per mode (n_modes x n_boundary_vertices, ordered
    // like mesh.boundary_vertices); source: volume right-hand side, optional.
    Solution solve(const MatXc& g, const MatXc* source_modes = nullptr) const;

    const FiberContext& ctx() const { return ctx_; }
    const Mesh& mesh() const { return mesh_; }

  private:
    const Mesh& mesh_;
    FiberContext ctx_;
    int nv_ = 0, nb_ = 0;
    SpMatc A_;  // full block system
    std::shared_ptr<Eigen::SparseLU<SpMatc>> lu_;
    std::vector<int> interior_, interior_of_;
    std::vector<int> bslot_of_;  // vertex -> boundary slot or -1
    Eigen::SimplicialLDLT<SpMat> bmass_;
    SpMat bmass_mat_;
};

struct FiberSolution {
    ModeExpansion field;
    ModeExpansion flux;
    double pde_residual = 0.0;
};

FiberSolution solve_fibered_bvp(const Mesh& mesh, const FiberContext& ctx, const PotentialField& V,
                                const DirichletData& g, const ModeExpansion* source = nullptr);

// Partial DN map: columns are the responses to the F' basis hats, rows sample
// the flux at the G'-arc vertices per output mode.  The input norm is the
// L2(cell) norm of the potential-free lift (Gram matrix), the output norm the
// L2 of the flux restricted to the G' edges.
struct PartialDNMap {
    MatXc matrix;                  // out_dim x in_dim
    BoundaryBasis in_basis;
    std::vector<int> out_vertices; // mesh vertex ids on the G' arc
    int out_K = 0, out_center = 0;
    MatXc gram;                    // in_dim x in_dim, Hermitian PD
    MatX out_mass;                 // n_out_vertices square, 1D mass on G' edges
    double theta = 0.0;
    std::uint64_t mesh_hash = 0, potential_hash = 0;

    int out_dim() const { return (2 * out_K + 1) * static_cast<int>(out_vertices.size()); }
    VecXc apply(const VecXc& coeff) const;
};

PartialDNMap assemble_partial_dn(const Mesh& mesh, const FiberContext& ctx, const PotentialField& V,
                                 const BoundaryPartition& part, int in_K, int in_center);

// Largest generalized singular value of (A - B) against the shared input Gram
// and output mass.  Power iteration takes over past `dense_limit` inputs.
double dn_difference_norm(const PartialDNMap& A, const PartialDNMap& B, int dense_limit = 2000);

struct FiberSweep {
    double sup = 0.0;
    double argmax_theta = 0.0;
    std::vector<double> theta_grid;
    std::vector<double> values;
};
FiberSweep dn_sup_over_fibers(const Mesh& mesh, const PotentialField& V1, const PotentialField& V2,
                              const BoundaryPartition& part, const std::vector<double>& theta_grid,
                              int K, int in_K, unsigned workers = 0);

// Binary matrix container plus JSON metadata sidecar (path + ".json").
void write_partial_dn(const PartialDNMap& map, const std::string& path);
PartialDNMap read_partial_dn(const std::string& path);

}  // namespace cwg::forward
