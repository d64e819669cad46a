// Shared test fixtures: canonical meshes, nodal evaluation of mode-represented
// fields, a first-eigenpair solve, and small linear-algebra conveniences.
#pragma once

#include <random>
#include <vector>

#include "cwg/common.hpp"
#include "cwg/fem.hpp"
#include "cwg/forward.hpp"
#include "cwg/geometry.hpp"
#include "cwg/spectral.hpp"

namespace th {

using cwg::cplx;
using cwg::MatXc;
using cwg::SpMat;
using cwg::Vec2;
using cwg::VecX;
using cwg::VecXc;
using cwg::geometry::CrossSectionSpec;
using cwg::geometry::Mesh;

inline CrossSectionSpec disk_spec(double h, double radius = 1.0) {
    CrossSectionSpec s;
    s.kind = cwg::geometry::SectionKind::disk;
    s.radius = radius;
    s.h = h;
    return s;
}

inline CrossSectionSpec square_spec(double h, double side = 1.0) {
    CrossSectionSpec s;
    s.kind = cwg::geometry::SectionKind::polygon;
    double a = side / 2.0;
    s.polygon = {Vec2(a, -a), Vec2(a, a), Vec2(-a, a), Vec2(-a, -a)};
    s.h = h;
    return s;
}

inline Mesh disk_mesh(double h, double radius = 1.0) {
    return cwg::geometry::generate_mesh(disk_spec(h, radius));
}

inline Mesh square_mesh(double h, double side = 1.0) {
    return cwg::geometry::generate_mesh(square_spec(h, side));
}

inline cwg::geometry::FaceSet whole_boundary(const Mesh& mesh) {
    cwg::geometry::FaceSet f;
    f.tag = "all";
    for (std::size_t e = 0; e < mesh.boundary.size(); ++e) f.edges.push_back(static_cast<int>(e));
    return f;
}

inline cwg::geometry::BoundaryPartition full_partition(const Mesh& mesh) {
    cwg::geometry::BoundaryPartition p;
    p.input_face = whole_boundary(mesh);
    p.output_face = whole_boundary(mesh);
    return p;
}

// Pointwise evaluation of a mode-represented potential through P1 interpolation.
class PotentialOnMesh {
  public:
    PotentialOnMesh(const Mesh& mesh, const cwg::forward::PotentialField& V)
        : loc_(mesh), M_(V.M) {
        for (int r = 0; r < V.modes.rows(); ++r) rows_.push_back(V.modes.row(r).transpose());
    }

    double operator()(double x1, const Vec2& p) const {
        cplx acc(0.0, 0.0);
        for (int m = -M_; m <= M_; ++m)
            acc += loc_.eval(rows_[static_cast<std::size_t>(m + M_)], p) *
                   std::exp(cplx(0.0, 2.0 * cwg::pi * m * x1));
        return acc.real();
    }

  private:
    cwg::fem::Locator loc_;
    int M_ = 0;
    std::vector<VecXc> rows_;
};

// First Dirichlet eigenpair of the cross section (inverse power iteration on
// the interior block).  Returns lambda1 and the nodal eigenvector extended by
// zero to the boundary, normalized in the consistent mass norm.
struct Eigenpair {
    double lambda = 0.0;
    VecX vec;
};

inline Eigenpair first_dirichlet_eigenpair(const Mesh& mesh) {
    SpMat K = cwg::fem::stiffness(mesh);
    SpMat M = cwg::fem::mass(mesh);
    cwg::fem::IndexSplit split(mesh);
    const int ni = static_cast<int>(split.interior.size());
    std::vector<cwg::Triplet> tk, tm;
    for (int col = 0; col < K.outerSize(); ++col)
        for (SpMat::InnerIterator it(K, col); it; ++it) {
            int i = split.interior_of[static_cast<std::size_t>(it.row())];
            int j = split.interior_of[static_cast<std::size_t>(it.col())];
            if (i >= 0 && j >= 0) tk.emplace_back(i, j, it.value());
        }
    for (int col = 0; col < M.outerSize(); ++col)
        for (SpMat::InnerIterator it(M, col); it; ++it) {
            int i = split.interior_of[static_cast<std::size_t>(it.row())];
            int j = split.interior_of[static_cast<std::size_t>(it.col())];
            if (i >= 0 && j >= 0) tm.emplace_back(i, j, it.value());
        }
    SpMat Ki(ni, ni), Mi(ni, ni);
    Ki.setFromTriplets(tk.begin(), tk.end());
    Mi.setFromTriplets(tm.begin(), tm.end());
    Eigen::SimplicialLDLT<SpMat> ldlt(Ki);
    VecX x = VecX::Ones(ni);
    x /= std::sqrt(x.dot(Mi * x));
    double lambda = 0.0;
    for (int it = 0; it < 400; ++it) {
        VecX y = ldlt.solve(Mi * x);
        y /= std::sqrt(y.dot(Mi * y));
        lambda = y.dot(Ki * y);
        double res = (Ki * y - lambda * (Mi * y)).norm() / (Ki * y).norm();
        x = y;
        if (res < 1e-13) break;
    }
    Eigenpair out;
    out.lambda = lambda;
    out.vec = VecX::Zero(static_cast<Eigen::Index>(mesh.n_vertices()));
    for (int i = 0; i < ni; ++i) out.vec[split.interior[static_cast<std::size_t>(i)]] = x[i];
    return out;
}

// V1 + s*W on the union mode window (bounds added; closures dropped).
inline cwg::forward::PotentialField potential_sum(const cwg::forward::PotentialField& V,
                                                  const cwg::forward::PotentialField& W, double s) {
    cwg::forward::PotentialField out;
    out.M = std::max(V.M, W.M);
    out.modes = MatXc::Zero(2 * out.M + 1, V.modes.cols());
    for (int r = 0; r < V.modes.rows(); ++r) out.modes.row(r - V.M + out.M) += V.modes.row(r);
    for (int r = 0; r < W.modes.rows(); ++r) out.modes.row(r - W.M + out.M) += s * W.modes.row(r);
    out.bound_plus = V.bound_plus + std::abs(s) * W.bound_plus;
    out.bound_minus = V.bound_minus + std::abs(s) * W.bound_plus;
    return out;
}

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace th
