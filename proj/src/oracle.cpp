#include "cwg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace cwg::oracle {

using geometry::SectionKind;

namespace {

bool inside(const CrossSectionSpec& s, const Vec2& p) {
    switch (s.kind) {
        case SectionKind::disk:
            return p.squaredNorm() < s.radius * s.radius;
        case SectionKind::ellipse: {
            double x = p.x() / s.semi_a, y = p.y() / s.semi_b;
            return x * x + y * y < 1.0;
        }
        case SectionKind::polygon: {
            int hits = 0;
            const auto& poly = s.polygon;
            for (std::size_t i = 0; i < poly.size(); ++i) {
                const Vec2& q0 = poly[i];
                const Vec2& q1 = poly[(i + 1) % poly.size()];
                if ((q0.y() > p.y()) == (q1.y() > p.y())) continue;
                double xc = q0.x() + (p.y() - q0.y()) / (q1.y() - q0.y()) * (q1.x() - q0.x());
                if (xc > p.x()) ++hits;
            }
            return hits % 2 == 1;
        }
    }
    return false;
}

void bbox(const CrossSectionSpec& s, Vec2& lo, Vec2& hi) {
    lo = hi = Vec2::Zero();
    switch (s.kind) {
        case SectionKind::disk:
            lo = Vec2(-s.radius, -s.radius);
            hi = Vec2(s.radius, s.radius);
            return;
        case SectionKind::ellipse:
            lo = Vec2(-s.semi_a, -s.semi_b);
            hi = Vec2(s.semi_a, s.semi_b);
            return;
        case SectionKind::polygon: {
            lo = hi = s.polygon.at(0);
            for (const Vec2& q : s.polygon) {
                lo = lo.cwiseMin(q);
                hi = hi.cwiseMax(q);
            }
            return;
        }
    }
}

}  // namespace

double boundary_crossing(const CrossSectionSpec& s, const Vec2& p, const Vec2& d, double limit) {
    switch (s.kind) {
        case SectionKind::disk:
        case SectionKind::ellipse: {
            double a = s.kind == SectionKind::disk ? s.radius : s.semi_a;
            double b = s.kind == SectionKind::disk ? s.radius : s.semi_b;
            Vec2 P(p.x() / a, p.y() / b), D(d.x() / a, d.y() / b);
            double pd = P.dot(D), dd = D.squaredNorm();
            double disc = pd * pd + dd * (1.0 - P.squaredNorm());
            if (disc < 0.0) return limit + 1.0;
            double t = (-pd + std::sqrt(disc)) / dd;
            return t >= 0.0 && t <= limit ? t : limit + 1.0;
        }
        case SectionKind::polygon: {
            double best = limit + 1.0;
            const auto& poly = s.polygon;
            for (std::size_t i = 0; i < poly.size(); ++i) {
                const Vec2& q0 = poly[i];
                Vec2 e = poly[(i + 1) % poly.size()] - q0;
                double det = d.x() * (-e.y()) - d.y() * (-e.x());
                if (std::abs(det) < 1e-300) continue;
                Vec2 rhs = q0 - p;
                double t = (rhs.x() * (-e.y()) - rhs.y() * (-e.x())) / det;
                double u = (d.x() * rhs.y() - d.y() * rhs.x()) / det;
                if (t >= 0.0 && u >= -1e-12 && u <= 1.0 + 1e-12) best = std::min(best, t);
            }
            return best <= limit ? best : limit + 1.0;
        }
    }
    return limit + 1.0;
}

DenseGrid DenseGrid::build(const CrossSectionSpec& section, int n1, int n2) {
    require(n1 >= 4 && n2 >= 8, "DenseGrid: grid too coarse");
    DenseGrid g;
    g.section = section;
    g.n1 = n1;
    g.n2 = n2;
    Vec2 lo, hi;
    bbox(section, lo, hi);
    g.origin = lo;
    g.hx = (hi.x() - lo.x()) / (n2 - 1);
    g.hy = (hi.y() - lo.y()) / (n2 - 1);
    g.index.assign(static_cast<std::size_t>(n2) * n2, -1);
    // lattice points that graze the boundary (bbox-aligned polygon edges put
    // whole rows exactly on it) are dropped: neighbours reach them through the
    // crossing-distance stencil instead of a near-singular unknown
    const double clear = 1e-9 * std::min(g.hx, g.hy);
    const Vec2 axes[2] = {Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
    for (int iy = 0; iy < n2; ++iy)
        for (int ix = 0; ix < n2; ++ix) {
            Vec2 p(lo.x() + ix * g.hx, lo.y() + iy * g.hy);
            if (!inside(section, p)) continue;
            bool grazing = false;
            for (int axis = 0; axis < 2 && !grazing; ++axis)
                grazing = boundary_crossing(section, p, axes[axis], clear) <= clear ||
                          boundary_crossing(section, p, -axes[axis], clear) <= clear;
            if (grazing) continue;
            g.index[static_cast<std::size_t>(iy * n2 + ix)] = static_cast<int>(g.points.size());
            g.points.push_back(p);
            g.coords.push_back({ix, iy});
        }
    require(g.points.size() >= 9, "DenseGrid: omega not resolved by the lattice");

    // the interior mask must be one connected component
    std::vector<char> seen(g.points.size(), 0);
    std::queue<int> work;
    work.push(0);
    seen[0] = 1;
    std::size_t reached = 1;
    while (!work.empty()) {
        int q = work.front();
        work.pop();
        int ix = g.coords[static_cast<std::size_t>(q)][0], iy = g.coords[static_cast<std::size_t>(q)][1];
        for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
            int r = g.slot(ix + dx, iy + dy);
            if (r >= 0 && !seen[static_cast<std::size_t>(r)]) {
                seen[static_cast<std::size_t>(r)] = 1;
                ++reached;
                work.push(r);
            }
        }
    }
    require(reached == g.points.size(), "DenseGrid: interior lattice points disconnected");
    return g;
}

FdSolution fd_solve(const DenseGrid& grid, double theta,
                    const std::function<double(double, const Vec2&)>& V,
                    const std::function<cplx(double, const Vec2&)>& g,
                    const std::function<cplx(double, const Vec2&)>& source) {
    const int n1 = grid.n1;
    const int np = static_cast<int>(grid.points.size());
    const double h1 = 1.0 / n1;
    const cplx wrap_fw = std::exp(cplx(0.0, theta)), wrap_bw = std::conj(wrap_fw);

    std::vector<Tripletc> trips;
    trips.reserve(static_cast<std::size_t>(7) * n1 * np);
    VecXc rhs = VecXc::Zero(static_cast<Eigen::Index>(n1) * np);

    const Vec2 axes[2] = {Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
    const double steps[2] = {grid.hx, grid.hy};

    for (int j = 0; j < n1; ++j) {
        double x1 = j * h1;
        for (int q = 0; q < np; ++q) {
            const Vec2& p = grid.points[static_cast<std::size_t>(q)];
            Eigen::Index row = static_cast<Eigen::Index>(j) * np + q;
            cplx diag(2.0 / (h1 * h1) + V(x1, p), 0.0);

            int jm = (j + n1 - 1) % n1, jp = (j + 1) % n1;
            trips.emplace_back(row, static_cast<Eigen::Index>(jm) * np + q,
                               -(j == 0 ? wrap_bw : cplx(1.0)) / (h1 * h1));
            trips.emplace_back(row, static_cast<Eigen::Index>(jp) * np + q,
                               -(j == n1 - 1 ? wrap_fw : cplx(1.0)) / (h1 * h1));

            int ix = grid.coords[static_cast<std::size_t>(q)][0];
            int iy = grid.coords[static_cast<std::size_t>(q)][1];
            for (int axis = 0; axis < 2; ++axis) {
                double h = steps[axis];
                int npos = axis == 0 ? grid.slot(ix + 1, iy) : grid.slot(ix, iy + 1);
                int nneg = axis == 0 ? grid.slot(ix - 1, iy) : grid.slot(ix, iy - 1);
                double tp = h, tn = h;
                if (npos < 0)
                    tp = std::clamp(boundary_crossing(grid.section, p, axes[axis], h), 1e-6 * h, h);
                if (nneg < 0)
                    tn = std::clamp(boundary_crossing(grid.section, p, -axes[axis], h), 1e-6 * h, h);
                diag += 2.0 / (tp * tn);
                double cp = 2.0 / (tp * (tp + tn)), cn = 2.0 / (tn * (tp + tn));
                if (npos >= 0)
                    trips.emplace_back(row, static_cast<Eigen::Index>(j) * np + npos, cplx(-cp));
                else
                    rhs[row] += cp * g(x1, p + tp * axes[axis]);
                if (nneg >= 0)
                    trips.emplace_back(row, static_cast<Eigen::Index>(j) * np + nneg, cplx(-cn));
                else
                    rhs[row] += cn * g(x1, p - tn * axes[axis]);
            }
            trips.emplace_back(row, row, diag);
            if (source) rhs[row] += source(x1, p);
        }
    }

    SpMatc A(static_cast<Eigen::Index>(n1) * np, static_cast<Eigen::Index>(n1) * np);
    A.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<SpMatc> lu(A);
    if (lu.info() != Eigen::Success) throw SolverError("fd_solve: factorization failed");
    VecXc u = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw SolverError("fd_solve: solve failed");

    FdSolution sol;
    sol.grid = grid;
    sol.values.resize(n1, np);
    for (int j = 0; j < n1; ++j)
        for (int q = 0; q < np; ++q) sol.values(j, q) = u[static_cast<Eigen::Index>(j) * np + q];
    return sol;
}

namespace {

// smallest Dirichlet eigenvalue of the transverse 5-point operator
double transverse_eig(const CrossSectionSpec& section, int n2) {
    DenseGrid grid = DenseGrid::build(section, 4, n2);
    const int np = static_cast<int>(grid.points.size());
    MatX A = MatX::Zero(np, np);
    const Vec2 axes[2] = {Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
    const double steps[2] = {grid.hx, grid.hy};
    for (int q = 0; q < np; ++q) {
        const Vec2& p = grid.points[static_cast<std::size_t>(q)];
        int ix = grid.coords[static_cast<std::size_t>(q)][0];
        int iy = grid.coords[static_cast<std::size_t>(q)][1];
        for (int axis = 0; axis < 2; ++axis) {
            double h = steps[axis];
            int npos = axis == 0 ? grid.slot(ix + 1, iy) : grid.slot(ix, iy + 1);
            int nneg = axis == 0 ? grid.slot(ix - 1, iy) : grid.slot(ix, iy - 1);
            double tp = h, tn = h;
            if (npos < 0)
                tp = std::clamp(boundary_crossing(section, p, axes[axis], h), 1e-6 * h, h);
            if (nneg < 0)
                tn = std::clamp(boundary_crossing(section, p, -axes[axis], h), 1e-6 * h, h);
            A(q, q) += 2.0 / (tp * tn);
            if (npos >= 0) A(q, npos) -= 2.0 / (tp * (tp + tn));
            if (nneg >= 0) A(q, nneg) -= 2.0 / (tn * (tp + tn));
        }
    }
    Eigen::EigenSolver<MatX> es(A);
    double best = 1e300;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        cplx ev = es.eigenvalues()[i];
        if (std::abs(ev.imag()) > 1e-6 * std::abs(ev) + 1e-9) continue;
        if (ev.real() > 1e-12) best = std::min(best, ev.real());
    }
    if (best >= 1e300) throw SolverError("poincare_fd: no real positive eigenvalue found");
    return best;
}

}  // namespace

double poincare_fd(const CrossSectionSpec& section, int n_coarse, int n_fine) {
    require(n_coarse >= 8 && n_fine > n_coarse, "poincare_fd: bad grid sizes");
    double lc = transverse_eig(section, n_coarse);
    double lf = transverse_eig(section, n_fine);
    double r = static_cast<double>(n_fine - 1) / (n_coarse - 1);  // h_c / h_f
    double extrapolated = (r * r * lf - lc) / (r * r - 1.0);
    return std::sqrt(extrapolated);
}

double disk_dn_analytic(double radius, double beta, double c, int m) {
    require(radius > 0.0 && m >= 0, "disk_dn_analytic: need radius > 0 and m >= 0");
    double w = beta * beta + c;
    double x = std::sqrt(std::abs(w)) * radius;
    if (x < 1e-8) return m / radius;
    if (w > 0.0) {
        double mu = std::sqrt(w);
        double val = std::cyl_bessel_i(m, x);
        double der = m == 0 ? std::cyl_bessel_i(1, x)
                            : 0.5 * (std::cyl_bessel_i(m - 1, x) + std::cyl_bessel_i(m + 1, x));
        return mu * der / val;
    }
    double nu = std::sqrt(-w);
    double val = std::cyl_bessel_j(static_cast<double>(m), x);
    require(std::abs(val) > 1e-12, "disk_dn_analytic: frequency sits on a Dirichlet resonance");
    double der = m == 0 ? -std::cyl_bessel_j(1.0, x)
                        : 0.5 * (std::cyl_bessel_j(m - 1.0, x) - std::cyl_bessel_j(m + 1.0, x));
    return nu * der / val;
}

cplx disk_indicator_ft(double radius, const Vec2& eta) {
    double s = eta.norm() * radius;
    if (s < 1e-8) return cplx(pi * radius * radius, 0.0);
    return cplx(2.0 * pi * radius * std::cyl_bessel_j(1.0, s) / eta.norm(), 0.0);
}

cplx bump_ft(const Vec2& center, double rho, const Vec2& eta) {
    double s = eta.norm() * rho;
    double radial = s < 1e-3 ? pi / 4.0 * (1.0 - s * s / 20.0)
                             : 96.0 * pi * std::cyl_bessel_j(4.0, s) / (s * s * s * s);
    return rho * rho * radial * std::exp(cplx(0.0, -eta.dot(center)));
}

cplx volume_pairing_oracle(const Mesh& mesh, const MatX& W, const MatXc& u2, const MatXc& u1) {
    require(W.rows() == u2.rows() && W.rows() == u1.rows(),
            "volume_pairing_oracle: mismatched axial grids");
    require(W.cols() == static_cast<Eigen::Index>(mesh.n_vertices()) && u2.cols() == W.cols() &&
                u1.cols() == W.cols(),
            "volume_pairing_oracle: samples must live on the mesh vertices");
    const int n1 = static_cast<int>(W.rows());
    cplx acc(0.0, 0.0);
    for (const auto& t : mesh.triangles) {
        const Vec2 &p0 = mesh.vertices[static_cast<std::size_t>(t[0])],
                   &p1 = mesh.vertices[static_cast<std::size_t>(t[1])],
                   &p2 = mesh.vertices[static_cast<std::size_t>(t[2])];
        double area = 0.5 * ((p1 - p0).x() * (p2 - p0).y() - (p2 - p0).x() * (p1 - p0).y());
        for (int j = 0; j < n1; ++j) {
            cplx f(0.0, 0.0);
            for (int v : t) f += W(j, v) * u2(j, v) * std::conj(u1(j, v));
            acc += area * f / 3.0;
        }
    }
    return acc / static_cast<double>(n1);
}

VecX divergence_dn_column(const Mesh& mesh, const std::function<double(const Vec2&)>& a,
                          double beta, int boundary_slot) {
    const int nv = static_cast<int>(mesh.n_vertices());
    const int nb = static_cast<int>(mesh.boundary_vertices.size());
    require(boundary_slot >= 0 && boundary_slot < nb,
            "divergence_dn_column: boundary slot out of range");

    std::vector<Triplet> trips;
    trips.reserve(mesh.triangles.size() * 9);
    for (const auto& t : mesh.triangles) {
        const Vec2 &p0 = mesh.vertices[static_cast<std::size_t>(t[0])],
                   &p1 = mesh.vertices[static_cast<std::size_t>(t[1])],
                   &p2 = mesh.vertices[static_cast<std::size_t>(t[2])];
        double det = (p1 - p0).x() * (p2 - p0).y() - (p2 - p0).x() * (p1 - p0).y();
        double area = 0.5 * det;
        Vec2 b[3] = {Vec2(p1.y() - p2.y(), p2.x() - p1.x()) / det,
                     Vec2(p2.y() - p0.y(), p0.x() - p2.x()) / det,
                     Vec2(p0.y() - p1.y(), p1.x() - p0.x()) / det};
        double ac = a((p0 + p1 + p2) / 3.0);
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) {
                double kij = ac * area * b[i].dot(b[k]);
                double mij = ac * area / 12.0 * (i == k ? 2.0 : 1.0);
                trips.emplace_back(t[i], t[k], kij + beta * beta * mij);
            }
    }
    SpMat A(nv, nv);
    A.setFromTriplets(trips.begin(), trips.end());

    VecX u = VecX::Zero(nv);
    u[mesh.boundary_vertices[static_cast<std::size_t>(boundary_slot)]] = 1.0;
    VecX r0 = A * u;

    std::vector<int> interior, interior_of(static_cast<std::size_t>(nv), -1);
    for (int v = 0; v < nv; ++v)
        if (!mesh.is_boundary_vertex(v)) {
            interior_of[static_cast<std::size_t>(v)] = static_cast<int>(interior.size());
            interior.push_back(v);
        }
    std::vector<Triplet> itrips;
    for (int col = 0; col < nv; ++col)
        for (SpMat::InnerIterator it(A, col); it; ++it) {
            int ri = interior_of[static_cast<std::size_t>(it.row())];
            int ci = interior_of[static_cast<std::size_t>(col)];
            if (ri >= 0 && ci >= 0) itrips.emplace_back(ri, ci, it.value());
        }
    SpMat Aii(static_cast<int>(interior.size()), static_cast<int>(interior.size()));
    Aii.setFromTriplets(itrips.begin(), itrips.end());
    VecX ri(static_cast<Eigen::Index>(interior.size()));
    for (std::size_t i = 0; i < interior.size(); ++i) ri[static_cast<Eigen::Index>(i)] = -r0[interior[i]];
    Eigen::SimplicialLDLT<SpMat> ldlt(Aii);
    if (ldlt.info() != Eigen::Success)
        throw SolverError("divergence_dn_column: interior factorization failed");
    VecX ui = ldlt.solve(ri);
    for (std::size_t i = 0; i < interior.size(); ++i) u[interior[i]] = ui[static_cast<Eigen::Index>(i)];

    // variational flux: invert the 1D boundary mass against the residual
    VecX res = A * u;
    VecX rb(nb);
    for (int i = 0; i < nb; ++i) rb[i] = res[mesh.boundary_vertices[static_cast<std::size_t>(i)]];
    std::vector<Triplet> btr;
    std::vector<int> bslot(static_cast<std::size_t>(nv), -1);
    for (int i = 0; i < nb; ++i) bslot[static_cast<std::size_t>(mesh.boundary_vertices[static_cast<std::size_t>(i)])] = i;
    for (const auto& e : mesh.boundary) {
        int i0 = bslot[static_cast<std::size_t>(e.v0)], i1 = bslot[static_cast<std::size_t>(e.v1)];
        btr.emplace_back(i0, i0, e.length / 3.0);
        btr.emplace_back(i1, i1, e.length / 3.0);
        btr.emplace_back(i0, i1, e.length / 6.0);
        btr.emplace_back(i1, i0, e.length / 6.0);
    }
    SpMat B(nb, nb);
    B.setFromTriplets(btr.begin(), btr.end());
    Eigen::SimplicialLDLT<SpMat> bldlt(B);
    if (bldlt.info() != Eigen::Success)
        throw SolverError("divergence_dn_column: boundary mass factorization failed");
    return bldlt.solve(rb);
}

}  // namespace cwg::oracle
