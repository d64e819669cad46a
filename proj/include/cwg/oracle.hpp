// Brute-force reference implementations kept deliberately independent of the
// finite-element stack: a dense quasi-periodic finite-difference solver on a
// tensor grid, separable closed forms on the disk and the square, transverse
// Fourier transforms of the preset shapes, direct volume quadrature, and a
// self-contained divergence-form fiber solve.  Everything here trades speed
// for transparency; these routines mint reference values and never ship in a
// production path.
#pragma once

#include <array>
#include <functional>
#include <vector>

#include "cwg/common.hpp"
#include "cwg/geometry.hpp"

namespace cwg::oracle {

using geometry::CrossSectionSpec;
using geometry::Mesh;

// Uniform tensor grid over (0,1) x bounding-box(omega).  Axial layer j sits at
// x1 = j/n1 (periodic); transverse nodes are the lattice points strictly
// inside omega.
struct DenseGrid {
    CrossSectionSpec section;
    int n1 = 16;                 // axial layers
    int n2 = 32;                 // lattice points per transverse side
    double hx = 0.0, hy = 0.0;   // transverse spacings
    Vec2 origin;                 // lower-left bounding-box corner
    std::vector<Vec2> points;    // interior transverse nodes
    std::vector<int> index;      // n2*n2 lattice -> node slot or -1
    std::vector<std::array<int, 2>> coords;  // node slot -> lattice (ix, iy)

    int slot(int ix, int iy) const {
        if (ix < 0 || iy < 0 || ix >= n2 || iy >= n2) return -1;
        return index[static_cast<std::size_t>(iy * n2 + ix)];
    }
    static DenseGrid build(const CrossSectionSpec& section, int n1, int n2);
};

struct FdSolution {
    DenseGrid grid;
    MatXc values;  // n1 x points.size()
};

// Distance from p to the first boundary crossing along the unit direction d,
// capped at limit (returns limit + 1 when the segment stays inside).
double boundary_crossing(const CrossSectionSpec& section, const Vec2& p, const Vec2& d,
                         double limit);

// Dense 7-point solve of (-Laplace + V) u = source on the cell with trace g on
// the lateral boundary and quasi-periodic wrap e^{i theta} in x1.  Curved
// boundaries use shortened one-sided legs; the trace is evaluated exactly at
// the crossing points.
FdSolution fd_solve(const DenseGrid& grid, double theta,
                    const std::function<double(double, const Vec2&)>& V,
                    const std::function<cplx(double, const Vec2&)>& g,
                    const std::function<cplx(double, const Vec2&)>& source = {});

// sqrt of the smallest transverse Dirichlet eigenvalue, from dense
// eigensolves on two lattices combined by Richardson extrapolation.
double poincare_fd(const CrossSectionSpec& section, int n_coarse = 20, int n_fine = 28);

// DN eigenvalue of (-Laplace + c) on the disk of the given radius at fiber
// frequency beta and angular harmonic m: the Bessel quotient of the separated
// radial solution (modified branch for beta^2 + c > 0, oscillatory below).
double disk_dn_analytic(double radius, double beta, double c, int m);

// Transverse Fourier transform  int_omega e^{-i eta.x'} dx'  of the disk.
cplx disk_indicator_ft(double radius, const Vec2& eta);

// Transverse FT of (1 - |x'-c|^2/rho^2)^3 restricted to its support.
cplx bump_ft(const Vec2& center, double rho, const Vec2& eta);

// Direct quadrature of  int_cell W u2 conj(u1) dx  from nodal samples on a
// shared axial grid (rows = axial layers at j/n1, columns = mesh vertices):
// centroid rule per triangle, periodic trapezoid in x1.
cplx volume_pairing_oracle(const Mesh& mesh, const MatX& W, const MatXc& u2, const MatXc& u1);

// Self-contained first-order element solve of the divergence-form fiber
// problem  -div'(a grad' u) + beta^2 a u = 0  with a hat trace at one boundary
// vertex; returns the weighted nodal flux  a du/dnu  at every boundary vertex
// (loop order).  Assembly here is independent of the main element routines.
VecX divergence_dn_column(const Mesh& mesh, const std::function<double(const Vec2&)>& a,
                          double beta, int boundary_slot);

}  // namespace cwg::oracle
