// P1 finite element assembly on a cross-section mesh.  One place for the
// element loops so every module sees identical matrices for identical meshes.
#pragma once

#include <vector>

#include "cwg/common.hpp"
#include "cwg/geometry.hpp"

namespace cwg::fem {

using geometry::Mesh;

// Stiffness (grad.grad) and consistent mass over all vertices.
SpMat stiffness(const Mesh& mesh);
SpMat mass(const Mesh& mesh);
VecX lumped_mass(const Mesh& mesh);

// Mass weighted by the P1 interpolant of nodal values w (exact elementwise
// integration of the cubic integrand).
SpMatc weighted_mass(const Mesh& mesh, const VecXc& w);

// 1D boundary mass restricted to the given edge subset (over all vertices;
// rows/cols of untouched vertices stay empty).
SpMat boundary_mass(const Mesh& mesh, const std::vector<int>& edges);
SpMat boundary_mass_full(const Mesh& mesh);

// Vertex index split.  interior_of(v) is -1 for boundary vertices.
struct IndexSplit {
    std::vector<int> interior;          // vertex ids
    std::vector<int> interior_of;       // vertex id -> position in `interior` or -1
    explicit IndexSplit(const Mesh& mesh);
};

// Point location + P1 evaluation; locate() returns -1 outside the mesh.
struct Locator {
    explicit Locator(const Mesh& mesh);
    int locate(const Vec2& p) const;                       // triangle id or -1
    cplx eval(const VecXc& nodal, const Vec2& p, cplx outside = cplx(0, 0)) const;
    double eval(const VecX& nodal, const Vec2& p, double outside = 0.0) const;

  private:
    const Mesh& mesh_;
    double cell_ = 0.0;
    Vec2 lo_;
    int nx_ = 0, ny_ = 0;
    std::vector<std::vector<int>> buckets_;
    bool bary(int t, const Vec2& p, double& l0, double& l1, double& l2) const;
};

// Triangle 3-point (midedge) quadrature of f over the mesh; exact for
// quadratics on each element.
double integrate(const Mesh& mesh, const std::function<double(const Vec2&)>& f);

}  // namespace cwg::fem
