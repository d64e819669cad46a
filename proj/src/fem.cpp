#include "cwg/fem.hpp"

#include <cmath>

namespace cwg::fem {

namespace {

struct ElemGeom {
    double area;
    Vec2 grad[3];  // gradients of the three hat functions (constant on the element)
};

ElemGeom elem_geom(const Mesh& mesh, const std::array<int, 3>& T) {
    const Vec2& a = mesh.vertices[static_cast<std::size_t>(T[0])];
    const Vec2& b = mesh.vertices[static_cast<std::size_t>(T[1])];
    const Vec2& c = mesh.vertices[static_cast<std::size_t>(T[2])];
    double det = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    ElemGeom g;
    g.area = 0.5 * det;
    g.grad[0] = Vec2(b.y() - c.y(), c.x() - b.x()) / det;
    g.grad[1] = Vec2(c.y() - a.y(), a.x() - c.x()) / det;
    g.grad[2] = Vec2(a.y() - b.y(), b.x() - a.x()) / det;
    return g;
}

}  // namespace

SpMat stiffness(const Mesh& mesh) {
    std::vector<Triplet> trip;
    trip.reserve(mesh.triangles.size() * 9);
    for (const auto& T : mesh.triangles) {
        ElemGeom g = elem_geom(mesh, T);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trip.emplace_back(T[i], T[j], g.area * g.grad[i].dot(g.grad[j]));
    }
    SpMat K(static_cast<int>(mesh.n_vertices()), static_cast<int>(mesh.n_vertices()));
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

SpMat mass(const Mesh& mesh) {
    std::vector<Triplet> trip;
    trip.reserve(mesh.triangles.size() * 9);
    for (const auto& T : mesh.triangles) {
        double a = elem_geom(mesh, T).area;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trip.emplace_back(T[i], T[j], a * (i == j ? 1.0 / 6.0 : 1.0 / 12.0));
    }
    SpMat M(static_cast<int>(mesh.n_vertices()), static_cast<int>(mesh.n_vertices()));
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

VecX lumped_mass(const Mesh& mesh) {
    VecX d = VecX::Zero(static_cast<Eigen::Index>(mesh.n_vertices()));
    for (const auto& T : mesh.triangles) {
        double a = elem_geom(mesh, T).area / 3.0;
        for (int i = 0; i < 3; ++i) d[T[i]] += a;
    }
    return d;
}

SpMatc weighted_mass(const Mesh& mesh, const VecXc& w) {
    require(w.size() == static_cast<Eigen::Index>(mesh.n_vertices()),
            "weighted_mass: weight vector size mismatch");
    // int_T phi_i phi_j (sum_k w_k phi_k) via int_T phi^a phi^b phi^c =
    // 2|T| a! b! c! / (a+b+c+2)!  -> |T|/60 for (1,1,1), |T|/30 for (2,1,0), |T|/10 for (3,0,0)
    std::vector<Tripletc> trip;
    trip.reserve(mesh.triangles.size() * 9);
    for (const auto& T : mesh.triangles) {
        double a = elem_geom(mesh, T).area;
        cplx wv[3] = {w[T[0]], w[T[1]], w[T[2]]};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                cplx val(0, 0);
                for (int k = 0; k < 3; ++k) {
                    int deg[3] = {0, 0, 0};
                    deg[i]++;
                    deg[j]++;
                    deg[k]++;
                    double coef;
                    if (deg[0] == 3 || deg[1] == 3 || deg[2] == 3) coef = 1.0 / 10.0;
                    else if (deg[0] == 1 && deg[1] == 1 && deg[2] == 1) coef = 1.0 / 60.0;
                    else coef = 1.0 / 30.0;
                    val += coef * wv[k];
                }
                trip.emplace_back(T[i], T[j], a * val);
            }
    }
    SpMatc M(static_cast<int>(mesh.n_vertices()), static_cast<int>(mesh.n_vertices()));
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

SpMat boundary_mass(const Mesh& mesh, const std::vector<int>& edges) {
    std::vector<Triplet> trip;
    for (int e : edges) {
        const auto& be = mesh.boundary[static_cast<std::size_t>(e)];
        double l = be.length;
        trip.emplace_back(be.v0, be.v0, l / 3.0);
        trip.emplace_back(be.v1, be.v1, l / 3.0);
        trip.emplace_back(be.v0, be.v1, l / 6.0);
        trip.emplace_back(be.v1, be.v0, l / 6.0);
    }
    SpMat M(static_cast<int>(mesh.n_vertices()), static_cast<int>(mesh.n_vertices()));
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

SpMat boundary_mass_full(const Mesh& mesh) {
    std::vector<int> all(mesh.boundary.size());
    for (std::size_t e = 0; e < all.size(); ++e) all[e] = static_cast<int>(e);
    return boundary_mass(mesh, all);
}

IndexSplit::IndexSplit(const Mesh& mesh) {
    interior_of.assign(mesh.n_vertices(), -1);
    for (std::size_t v = 0; v < mesh.n_vertices(); ++v)
        if (!mesh.is_boundary_vertex(static_cast<int>(v))) {
            interior_of[v] = static_cast<int>(interior.size());
            interior.push_back(static_cast<int>(v));
        }
}

Locator::Locator(const Mesh& mesh) : mesh_(mesh) {
    Vec2 lo = mesh.vertices[0], hi = mesh.vertices[0];
    for (const auto& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    lo_ = lo - Vec2(1e-9, 1e-9);
    double ext = std::max(hi.x() - lo.x(), hi.y() - lo.y()) + 2e-9;
    int n = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.triangles.size()))));
    nx_ = ny_ = n;
    cell_ = ext / n;
    buckets_.resize(static_cast<std::size_t>(nx_ * ny_));
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& T = mesh.triangles[t];
        Vec2 tlo = mesh.vertices[static_cast<std::size_t>(T[0])];
        Vec2 thi = tlo;
        for (int k = 1; k < 3; ++k) {
            tlo = tlo.cwiseMin(mesh.vertices[static_cast<std::size_t>(T[k])]);
            thi = thi.cwiseMax(mesh.vertices[static_cast<std::size_t>(T[k])]);
        }
        int i0 = std::clamp(static_cast<int>((tlo.x() - lo_.x()) / cell_), 0, nx_ - 1);
        int i1 = std::clamp(static_cast<int>((thi.x() - lo_.x()) / cell_), 0, nx_ - 1);
        int j0 = std::clamp(static_cast<int>((tlo.y() - lo_.y()) / cell_), 0, ny_ - 1);
        int j1 = std::clamp(static_cast<int>((thi.y() - lo_.y()) / cell_), 0, ny_ - 1);
        for (int i = i0; i <= i1; ++i)
            for (int j = j0; j <= j1; ++j)
                buckets_[static_cast<std::size_t>(j * nx_ + i)].push_back(static_cast<int>(t));
    }
}

bool Locator::bary(int t, const Vec2& p, double& l0, double& l1, double& l2) const {
    const auto& T = mesh_.triangles[static_cast<std::size_t>(t)];
    const Vec2& a = mesh_.vertices[static_cast<std::size_t>(T[0])];
    const Vec2& b = mesh_.vertices[static_cast<std::size_t>(T[1])];
    const Vec2& c = mesh_.vertices[static_cast<std::size_t>(T[2])];
    double det = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    l1 = ((p.x() - a.x()) * (c.y() - a.y()) - (p.y() - a.y()) * (c.x() - a.x())) / det;
    l2 = ((b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x())) / det;
    l0 = 1.0 - l1 - l2;
    const double tol = -1e-10;
    return l0 >= tol && l1 >= tol && l2 >= tol;
}

int Locator::locate(const Vec2& p) const {
    int i = static_cast<int>((p.x() - lo_.x()) / cell_);
    int j = static_cast<int>((p.y() - lo_.y()) / cell_);
    if (i < 0 || i >= nx_ || j < 0 || j >= ny_) return -1;
    double l0, l1, l2;
    for (int t : buckets_[static_cast<std::size_t>(j * nx_ + i)])
        if (bary(t, p, l0, l1, l2)) return t;
    return -1;
}

cplx Locator::eval(const VecXc& nodal, const Vec2& p, cplx outside) const {
    int t = locate(p);
    if (t < 0) return outside;
    double l0, l1, l2;
    bary(t, p, l0, l1, l2);
    const auto& T = mesh_.triangles[static_cast<std::size_t>(t)];
    return l0 * nodal[T[0]] + l1 * nodal[T[1]] + l2 * nodal[T[2]];
}

double Locator::eval(const VecX& nodal, const Vec2& p, double outside) const {
    int t = locate(p);
    if (t < 0) return outside;
    double l0, l1, l2;
    bary(t, p, l0, l1, l2);
    const auto& T = mesh_.triangles[static_cast<std::size_t>(t)];
    return l0 * nodal[T[0]] + l1 * nodal[T[1]] + l2 * nodal[T[2]];
}

double integrate(const Mesh& mesh, const std::function<double(const Vec2&)>& f) {
    double s = 0.0;
    for (const auto& T : mesh.triangles) {
        const Vec2& a = mesh.vertices[static_cast<std::size_t>(T[0])];
        const Vec2& b = mesh.vertices[static_cast<std::size_t>(T[1])];
        const Vec2& c = mesh.vertices[static_cast<std::size_t>(T[2])];
        double det = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        double area = 0.5 * det;
        s += area / 3.0 * (f(0.5 * (a + b)) + f(0.5 * (b + c)) + f(0.5 * (c + a)));
    }
    return s;
}

}  // namespace cwg::fem
