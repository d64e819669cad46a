#include "cwg/conductivity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cwg/fem.hpp"
#include "cwg/recon.hpp"

namespace cwg::conductivity {

using geometry::BoundaryEdge;

VecXc ConductivityField::mode_row(int m) const {
    require(std::abs(m) <= M, "conductivity mode_row: mode outside the stored window");
    return modes.row(m + M).transpose();
}

std::uint64_t ConductivityField::content_hash() const {
    std::uint64_t h = fnv1a(&M, sizeof(M));
    h = fnv1a(&a_star, sizeof(a_star), h);
    h = fnv1a(&bound_plus, sizeof(bound_plus), h);
    h = fnv1a(&bound_minus, sizeof(bound_minus), h);
    for (Eigen::Index j = 0; j < modes.cols(); ++j)
        for (Eigen::Index i = 0; i < modes.rows(); ++i) {
            cplx v = modes(i, j);
            h = fnv1a(&v, sizeof(v), h);
        }
    return h;
}

namespace {

// samples of a at the mesh vertices on a uniform n1-point axial grid
MatX sample_rows(const ConductivityField& a, const Mesh& mesh, int n1) {
    const int nv = static_cast<int>(mesh.n_vertices());
    MatX s(n1, nv);
    for (int j = 0; j < n1; ++j) {
        double x1 = static_cast<double>(j) / n1;
        if (a.value) {
            for (int v = 0; v < nv; ++v) s(j, v) = a.value(x1, mesh.vertices[static_cast<std::size_t>(v)]);
        } else {
            VecXc acc = VecXc::Zero(nv);
            for (int m = -a.M; m <= a.M; ++m)
                acc += std::exp(cplx(0.0, 2.0 * pi * m * x1)) * a.mode_row(m);
            for (int v = 0; v < nv; ++v) s(j, v) = acc[v].real();
        }
    }
    return s;
}

// modes -P..P of real axial samples, conjugate rows tied together
MatXc project_modes(const MatX& samples, int P) {
    const int n1 = static_cast<int>(samples.rows());
    const int nv = static_cast<int>(samples.cols());
    require(n1 >= 2 * P + 2, "project_modes: sample grid too coarse for the window");
    MatXc out = MatXc::Zero(2 * P + 1, nv);
    for (int m = 0; m <= P; ++m) {
        VecXc acc = VecXc::Zero(nv);
        for (int j = 0; j < n1; ++j)
            acc += std::exp(cplx(0.0, -2.0 * pi * m * j / static_cast<double>(n1))) *
                   samples.row(j).transpose().cast<cplx>();
        acc /= static_cast<double>(n1);
        out.row(P + m) = acc.transpose();
        out.row(P - m) = acc.conjugate().transpose();
    }
    return out;
}

// pointwise evaluator (closed form when available, P1 mode synthesis else)
std::function<double(double, const Vec2&)> make_eval(const ConductivityField& a,
                                                     const fem::Locator& loc) {
    if (a.value) return a.value;
    const ConductivityField* ap = &a;
    const fem::Locator* lp = &loc;
    return [ap, lp](double x1, const Vec2& p) {
        cplx acc(0.0, 0.0);
        for (int m = -ap->M; m <= ap->M; ++m)
            acc += lp->eval(ap->mode_row(m), p) * std::exp(cplx(0.0, 2.0 * pi * m * x1));
        return acc.real();
    };
}

// outward unit normal at each boundary vertex (mean of the incident edges)
std::vector<Vec2> vertex_normals(const Mesh& mesh) {
    std::vector<Vec2> nus(mesh.boundary_vertices.size());
    for (std::size_t i = 0; i < mesh.boundary_vertices.size(); ++i) {
        std::size_t prev = (i + mesh.boundary.size() - 1) % mesh.boundary.size();
        nus[i] = (mesh.boundary[prev].normal + mesh.boundary[i].normal).normalized();
    }
    return nus;
}

// one-sided second-order normal derivative at a boundary point, stepping into
// the cross section
double dnu_fd(const std::function<double(double, const Vec2&)>& f, double x1, const Vec2& p,
              const Vec2& nu, double delta) {
    double f0 = f(x1, p);
    double f1 = f(x1, p - delta * nu);
    double f2 = f(x1, p - 2.0 * delta * nu);
    return (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * delta);
}

}  // namespace

// --- presets ------------------------------------------------------------------

ConductivityField conductivity_constant(const Mesh& mesh, double c) {
    require(c > 0.0, "conductivity_constant: value must be positive");
    ConductivityField a;
    a.M = 0;
    a.modes = MatXc::Constant(1, static_cast<Eigen::Index>(mesh.n_vertices()), cplx(c, 0.0));
    a.a_star = c;
    a.bound_plus = std::max(c, 1.0);
    a.bound_minus = 1.0;
    a.value = [c](double, const Vec2&) { return c; };
    a.grad = [](double, const Vec2&) { return Eigen::Vector3d::Zero().eval(); };
    a.lap = [](double, const Vec2&) { return 0.0; };
    return a;
}

ConductivityField conductivity_exponential(const Mesh& mesh, double s) {
    ConductivityField a;
    a.M = 0;
    const int nv = static_cast<int>(mesh.n_vertices());
    a.modes = MatXc::Zero(1, nv);
    for (int v = 0; v < nv; ++v)
        a.modes(0, v) = std::exp(s * mesh.vertices[static_cast<std::size_t>(v)].x());
    double R = mesh.max_radius();
    a.a_star = std::exp(-std::abs(s) * R);
    a.bound_plus = std::max(std::exp(std::abs(s) * R) * std::max(1.0, std::abs(s)), s * s / 4.0);
    double w1 = std::exp(std::abs(s) * R) * std::max(1.0, std::abs(s));
    double lap_sup = s * s * std::exp(std::abs(s) * R);
    a.bound_minus = std::max(1.0, (w1 * w1 + 2.0 * a.a_star * lap_sup) / (4.0 * a.a_star * a.a_star) * 1.01);
    a.value = [s](double, const Vec2& p) { return std::exp(s * p.x()); };
    a.grad = [s](double, const Vec2& p) {
        Eigen::Vector3d g;
        g << 0.0, s * std::exp(s * p.x()), 0.0;
        return g;
    };
    a.lap = [s](double, const Vec2& p) { return s * s * std::exp(s * p.x()); };
    return a;
}

ConductivityField conductivity_bump(const Mesh& mesh, double c0, double amp, const Vec2& center,
                                    double rho, double ax_amp) {
    require(c0 > 0.0 && rho > 0.0, "conductivity_bump: need c0 > 0 and rho > 0");
    require(std::abs(ax_amp) <= 1.0, "conductivity_bump: |ax_amp| must not exceed 1");
    double worst = c0 + std::min(0.0, amp) * (1.0 + std::abs(ax_amp));
    require(worst > 0.0, "conductivity_bump: field would lose ellipticity");

    auto q = [center, rho](const Vec2& p) {
        double u = (p - center).squaredNorm() / (rho * rho);
        return u < 1.0 ? (1.0 - u) * (1.0 - u) : 0.0;
    };
    ConductivityField a;
    a.M = ax_amp != 0.0 ? 1 : 0;
    const int nv = static_cast<int>(mesh.n_vertices());
    a.modes = MatXc::Zero(2 * a.M + 1, nv);
    for (int v = 0; v < nv; ++v) {
        double qv = q(mesh.vertices[static_cast<std::size_t>(v)]);
        a.modes(a.M, v) = c0 + amp * qv;
        if (a.M == 1) {
            a.modes(0, v) = amp * ax_amp * qv / 2.0;
            a.modes(2, v) = amp * ax_amp * qv / 2.0;
        }
    }
    a.value = [c0, amp, ax_amp, q](double x1, const Vec2& p) {
        return c0 + amp * q(p) * (1.0 + ax_amp * std::cos(2.0 * pi * x1));
    };
    a.grad = [amp, ax_amp, center, rho, q](double x1, const Vec2& p) {
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        double u = (p - center).squaredNorm() / (rho * rho);
        double gax = 1.0 + ax_amp * std::cos(2.0 * pi * x1);
        if (u < 1.0) {
            Vec2 gq = -(4.0 / (rho * rho)) * (1.0 - u) * (p - center);
            g(1) = amp * gq.x() * gax;
            g(2) = amp * gq.y() * gax;
        }
        g(0) = amp * q(p) * (-2.0 * pi * ax_amp * std::sin(2.0 * pi * x1));
        return g;
    };
    a.lap = [amp, ax_amp, center, rho, q](double x1, const Vec2& p) {
        double u = (p - center).squaredNorm() / (rho * rho);
        double gax = 1.0 + ax_amp * std::cos(2.0 * pi * x1);
        double lap_t = u < 1.0 ? -(8.0 / (rho * rho)) * (1.0 - 2.0 * u) : 0.0;
        double dxx1 = q(p) * (-4.0 * pi * pi * ax_amp * std::cos(2.0 * pi * x1));
        return amp * (lap_t * gax + dxx1);
    };

    a.a_star = worst;
    double amax = c0 + std::max(0.0, amp) * (1.0 + std::abs(ax_amp));
    double gsup_t = std::abs(amp) * (1.0 + std::abs(ax_amp)) * 8.0 / (3.0 * std::sqrt(3.0) * rho);
    double gsup_ax = std::abs(amp) * 2.0 * pi * std::abs(ax_amp);
    double w1 = std::max(amax, std::hypot(gsup_t, gsup_ax));
    // sample the induced potential for an honest sup bound
    double vsup = 0.0, vneg = 0.0;
    for (int j = 0; j < 16; ++j)
        for (int v = 0; v < nv; ++v) {
            double x1 = j / 16.0;
            const Vec2& p = mesh.vertices[static_cast<std::size_t>(v)];
            double av = a.value(x1, p);
            double w = a.lap(x1, p) / (2.0 * av) - a.grad(x1, p).squaredNorm() / (4.0 * av * av);
            vsup = std::max(vsup, std::abs(w));
            vneg = std::max(vneg, -w);
        }
    a.bound_plus = std::max(w1, vsup * 1.02) + 1e-12;
    a.bound_minus = std::max(1.0, vneg * 1.02 + 1e-12);
    return a;
}

ConductivityField conductivity_with_bump(const Mesh& mesh, const ConductivityField& base,
                                         double amp, const Vec2& center, double rho,
                                         double ax_amp) {
    require(base.has_closures(), "conductivity_with_bump: base needs closed-form evaluators");
    require(rho > 0.0 && std::abs(ax_amp) <= 1.0, "conductivity_with_bump: bad bump parameters");
    ConductivityField b = conductivity_bump(mesh, 1.0, amp, center, rho, ax_amp);

    ConductivityField a;
    a.M = std::max(base.M, b.M);
    const int nv = static_cast<int>(mesh.n_vertices());
    a.modes = MatXc::Zero(2 * a.M + 1, nv);
    for (int m = -base.M; m <= base.M; ++m) a.modes.row(a.M + m) += base.mode_row(m).transpose();
    for (int m = -b.M; m <= b.M; ++m) a.modes.row(a.M + m) += b.mode_row(m).transpose();
    a.modes.row(a.M) -= MatXc::Constant(1, nv, cplx(1.0, 0.0));  // drop the helper's floor

    auto bv = b.value;
    auto bg = b.grad;
    auto bl = b.lap;
    auto cv = base.value;
    auto cg = base.grad;
    auto cl = base.lap;
    a.value = [bv, cv](double x1, const Vec2& p) { return cv(x1, p) + bv(x1, p) - 1.0; };
    a.grad = [bg, cg](double x1, const Vec2& p) {
        return (cg(x1, p) + bg(x1, p)).eval();
    };
    a.lap = [bl, cl](double x1, const Vec2& p) { return cl(x1, p) + bl(x1, p); };

    const int n1 = std::max(16, 8 * a.M + 8);
    double amin = 1e300, w1 = 0.0, vsup = 0.0, vneg = 0.0;
    for (int j = 0; j < n1; ++j) {
        double x1 = static_cast<double>(j) / n1;
        for (int v = 0; v < nv; ++v) {
            const Vec2& p = mesh.vertices[static_cast<std::size_t>(v)];
            double av = a.value(x1, p);
            amin = std::min(amin, av);
            w1 = std::max({w1, std::abs(av), a.grad(x1, p).norm()});
            double w = a.lap(x1, p) / (2.0 * av) - a.grad(x1, p).squaredNorm() / (4.0 * av * av);
            vsup = std::max(vsup, std::abs(w));
            vneg = std::max(vneg, -w);
        }
    }
    require(amin > 0.0, "conductivity_with_bump: field would lose ellipticity");
    a.a_star = amin * 0.995;
    a.bound_plus = std::max(w1 * 1.02, vsup * 1.02) + 1e-12;
    a.bound_minus = std::max(base.bound_minus, vneg * 1.02 + 1e-12);
    return a;
}

// --- container ------------------------------------------------------------------

void write_conductivity(const ConductivityField& a, const Mesh& mesh, const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "write_conductivity: cannot open " + path);
    out << "cwg-cond/1\n";
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(mesh.content_hash()));
    out << a.M << ' ' << format_g17(a.a_star) << ' ' << format_g17(a.bound_plus) << ' '
        << format_g17(a.bound_minus) << ' ' << hex << '\n';
    out << a.modes.rows() << ' ' << a.modes.cols() << '\n';
    for (Eigen::Index r = 0; r < a.modes.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.modes.cols(); ++c)
            out << format_g17(a.modes(r, c).real()) << ' ' << format_g17(a.modes(r, c).imag())
                << (c + 1 == a.modes.cols() ? "" : " ");
        out << '\n';
    }
    require(static_cast<bool>(out), "write_conductivity: write failed for " + path);
}

ConductivityField read_conductivity(const std::string& path, const Mesh& mesh) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "read_conductivity: cannot open " + path);
    std::string version;
    in >> version;
    require(version == "cwg-cond/1", "read_conductivity: unsupported container version " + version);
    ConductivityField a;
    std::string hash;
    in >> a.M >> a.a_star >> a.bound_plus >> a.bound_minus >> hash;
    char expect[32];
    std::snprintf(expect, sizeof expect, "%016llx",
                  static_cast<unsigned long long>(mesh.content_hash()));
    require(hash == expect, "read_conductivity: field was stored for a different mesh");
    Eigen::Index rows = 0, cols = 0;
    in >> rows >> cols;
    require(rows == 2 * a.M + 1 && cols == static_cast<Eigen::Index>(mesh.n_vertices()),
            "read_conductivity: shape mismatch");
    a.modes.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            double re = 0.0, im = 0.0;
            in >> re >> im;
            a.modes(r, c) = cplx(re, im);
        }
    require(static_cast<bool>(in), "read_conductivity: truncated file " + path);
    return a;
}

// --- induced potential ------------------------------------------------------------

LiouvilleResult liouville_potential(const ConductivityField& a, const Mesh& mesh, int M_out) {
    if (M_out < 0) M_out = a.M == 0 ? 0 : 2 * a.M + 2;
    const int nv = static_cast<int>(mesh.n_vertices());
    const int n1 = std::max({16, 4 * M_out + 4, 8 * a.M + 8});

    MatX vsamp(n1, nv);
    if (a.has_closures()) {
        for (int j = 0; j < n1; ++j) {
            double x1 = static_cast<double>(j) / n1;
            for (int v = 0; v < nv; ++v) {
                const Vec2& p = mesh.vertices[static_cast<std::size_t>(v)];
                double av = a.value(x1, p);
                require(av > 0.0, "liouville_potential: nonpositive conductivity sample");
                vsamp(j, v) =
                    a.lap(x1, p) / (2.0 * av) - a.grad(x1, p).squaredNorm() / (4.0 * av * av);
            }
        }
    } else {
        // discrete route: spectral second difference along the period, lumped
        // weak Laplacian across the section; boundary vertices copy their
        // nearest interior neighbour (the weak Laplacian misses the boundary
        // flux there)
        MatX A = sample_rows(a, mesh, n1);
        require(A.minCoeff() > 0.0, "liouville_potential: nonpositive conductivity sample");
        MatX S = A.array().sqrt().matrix();
        MatXc shat = project_modes(S, n1 / 2 - 1);
        MatX d11 = MatX::Zero(n1, nv);
        int P = n1 / 2 - 1;
        for (int m = -P; m <= P; ++m) {
            double w = -(2.0 * pi * m) * (2.0 * pi * m);
            for (int j = 0; j < n1; ++j)
                d11.row(j) += (w * std::exp(cplx(0.0, 2.0 * pi * m * j / static_cast<double>(n1))) *
                               shat.row(m + P))
                                  .real();
        }
        SpMat K = fem::stiffness(mesh);
        VecX lm = fem::lumped_mass(mesh);
        fem::IndexSplit split(mesh);
        std::vector<int> nearest(static_cast<std::size_t>(nv), -1);
        for (int b : mesh.boundary_vertices) {
            double best = 1e300;
            for (int i : split.interior) {
                double d = (mesh.vertices[static_cast<std::size_t>(b)] -
                            mesh.vertices[static_cast<std::size_t>(i)])
                               .squaredNorm();
                if (d < best) {
                    best = d;
                    nearest[static_cast<std::size_t>(b)] = i;
                }
            }
        }
        for (int j = 0; j < n1; ++j) {
            VecX lapt = -(K * S.row(j).transpose());
            lapt.array() /= lm.array();
            for (int b : mesh.boundary_vertices)
                lapt[b] = lapt[nearest[static_cast<std::size_t>(b)]];
            vsamp.row(j) = ((d11.row(j).transpose() + lapt).array() / S.row(j).transpose().array())
                               .matrix()
                               .transpose();
        }
    }

    LiouvilleResult out;
    out.V.M = M_out;
    out.V.modes = project_modes(vsamp, M_out);
    out.sup = vsamp.array().abs().maxCoeff();
    out.neg_sup = std::max(0.0, -vsamp.minCoeff());
    out.V.bound_plus = out.sup * (1.0 + 1e-12) + 1e-300;
    out.V.bound_minus = out.neg_sup * (1.0 + 1e-12) + 1e-300;
    if (a.has_closures()) {
        auto value = a.value;
        auto grad = a.grad;
        auto lap = a.lap;
        out.V.analytic = [value, grad, lap](double x1, const Vec2& p) {
            double av = value(x1, p);
            return lap(x1, p) / (2.0 * av) - grad(x1, p).squaredNorm() / (4.0 * av * av);
        };
    }
    out.within_bounds = out.sup <= a.bound_plus * (1.0 + 1e-9) &&
                        out.neg_sup <= a.bound_minus * (1.0 + 1e-9);
    return out;
}

// --- admissibility ----------------------------------------------------------------

ConductivityReport admissibility_check(const ConductivityField& a, const Mesh& mesh) {
    ConductivityReport rep;
    const int nv = static_cast<int>(mesh.n_vertices());
    const int n1 = std::max(16, 8 * a.M + 8);

    MatX A = sample_rows(a, mesh, n1);
    rep.min_sample = A.minCoeff();
    rep.floor_ok = rep.min_sample >= a.a_star - 1e-12;

    double gsup = 0.0, lsup = 0.0;
    if (a.has_closures()) {
        for (int j = 0; j < n1; ++j) {
            double x1 = static_cast<double>(j) / n1;
            for (int v = 0; v < nv; ++v) {
                const Vec2& p = mesh.vertices[static_cast<std::size_t>(v)];
                gsup = std::max(gsup, a.grad(x1, p).norm());
                lsup = std::max(lsup, std::abs(a.lap(x1, p)));
            }
        }
    } else {
        // transverse P1 gradients per triangle, spectral axial derivatives
        MatXc ahat = project_modes(A, n1 / 2 - 1);
        int P = n1 / 2 - 1;
        MatX d1 = MatX::Zero(n1, nv);
        for (int m = -P; m <= P; ++m)
            for (int j = 0; j < n1; ++j)
                d1.row(j) += (cplx(0.0, 2.0 * pi * m) *
                              std::exp(cplx(0.0, 2.0 * pi * m * j / static_cast<double>(n1))) *
                              ahat.row(m + P))
                                 .real();
        for (int j = 0; j < n1; ++j) {
            for (const auto& t : mesh.triangles) {
                const Vec2 &p0 = mesh.vertices[static_cast<std::size_t>(t[0])],
                           &p1 = mesh.vertices[static_cast<std::size_t>(t[1])],
                           &p2 = mesh.vertices[static_cast<std::size_t>(t[2])];
                double det = (p1 - p0).x() * (p2 - p0).y() - (p2 - p0).x() * (p1 - p0).y();
                Vec2 g0(p1.y() - p2.y(), p2.x() - p1.x());
                Vec2 g1(p2.y() - p0.y(), p0.x() - p2.x());
                Vec2 g2(p0.y() - p1.y(), p1.x() - p0.x());
                Vec2 gt = (A(j, t[0]) * g0 + A(j, t[1]) * g1 + A(j, t[2]) * g2) / det;
                double ax = (d1(j, t[0]) + d1(j, t[1]) + d1(j, t[2])) / 3.0;
                gsup = std::max(gsup, std::hypot(gt.norm(), ax));
            }
        }
        // Laplacian sup through the lumped weak operator, interior only
        MatX d11 = MatX::Zero(n1, nv);
        for (int m = -P; m <= P; ++m) {
            double w = -(2.0 * pi * m) * (2.0 * pi * m);
            for (int j = 0; j < n1; ++j)
                d11.row(j) += (w * std::exp(cplx(0.0, 2.0 * pi * m * j / static_cast<double>(n1))) *
                               ahat.row(m + P))
                                  .real();
        }
        SpMat K = fem::stiffness(mesh);
        VecX lm = fem::lumped_mass(mesh);
        fem::IndexSplit split(mesh);
        for (int j = 0; j < n1; ++j) {
            VecX lapt = -(K * A.row(j).transpose());
            lapt.array() /= lm.array();
            for (int i : split.interior) lsup = std::max(lsup, std::abs(lapt[i] + d11(j, i)));
        }
    }
    rep.w1inf = std::max(A.array().abs().maxCoeff(), gsup);
    rep.lap_sup = lsup;
    rep.w2inf = std::max(rep.w1inf, lsup);  // second-order part through the Laplacian
    rep.w1inf_ok = rep.w1inf <= a.bound_plus * (1.0 + 1e-9);

    LiouvilleResult lv = liouville_potential(a, mesh);
    rep.v_sup = lv.sup;
    rep.v_neg_sup = lv.neg_sup;
    rep.v_bounds_ok = lv.within_bounds;

    double as = a.a_star, mm = a.bound_minus;
    rep.smallness_grad =
        rep.w1inf * rep.w1inf + 2.0 * as * rep.lap_sup <= 4.0 * mm * as * as * (1.0 + 1e-9);
    rep.smallness_w2 = rep.w2inf <= 4.0 * mm / (std::sqrt(4.0 * mm + 1.0) + 1.0) * as * (1.0 + 1e-9);
    rep.admissible = rep.floor_ok && rep.w1inf_ok && rep.v_bounds_ok;
    return rep;
}

// --- weighted boundary map ----------------------------------------------------------

PartialDNMap sigma_from_lambda(const Mesh& mesh, const ConductivityField& a,
                               const PartialDNMap& dn, int pad) {
    require(pad >= 0, "sigma_from_lambda: pad must be nonnegative");
    require(dn.in_basis.K >= pad && dn.out_K >= pad,
            "sigma_from_lambda: data windows too narrow for the requested pad");
    const int nF = static_cast<int>(dn.in_basis.vertices.size());
    const int nG = static_cast<int>(dn.out_vertices.size());
    const int KiW = dn.in_basis.K, KiN = KiW - pad;
    const int KoW = dn.out_K, KoN = KoW - pad;
    const int WiW = 2 * KiW + 1, WiN = 2 * KiN + 1;
    const int WoW = 2 * KoW + 1, WoN = 2 * KoN + 1;

    // sqrt-conductivity trace modes (window +-pad) at every boundary vertex,
    // plus the weighted normal-derivative factor on the overlap
    fem::Locator loc(mesh);
    auto eval = make_eval(a, loc);
    const int n1 = std::max(16, 8 * (a.M + pad + 1));
    const double delta = 0.5 * mesh.spec.h;
    std::vector<Vec2> nus = vertex_normals(mesh);
    std::vector<int> bslot(mesh.n_vertices(), -1);
    for (std::size_t i = 0; i < mesh.boundary_vertices.size(); ++i)
        bslot[static_cast<std::size_t>(mesh.boundary_vertices[i])] = static_cast<int>(i);

    auto sqrt_eval = [&eval](double x1, const Vec2& p) { return std::sqrt(eval(x1, p)); };
    const int nb = static_cast<int>(mesh.boundary_vertices.size());
    MatX ssamp(n1, nb), wsamp(n1, nb);
    for (int j = 0; j < n1; ++j) {
        double x1 = static_cast<double>(j) / n1;
        for (int b = 0; b < nb; ++b) {
            const Vec2& p = mesh.vertices[static_cast<std::size_t>(mesh.boundary_vertices[b])];
            double sv = sqrt_eval(x1, p);
            ssamp(j, b) = sv;
            wsamp(j, b) = sv * dnu_fd(sqrt_eval, x1, p, nus[static_cast<std::size_t>(b)], delta);
        }
    }
    MatXc shat = project_modes(ssamp, pad);
    MatXc what = project_modes(wsamp, std::min(n1 / 2 - 1, KiW + KoW));
    const int Pw = static_cast<int>((what.rows() - 1) / 2);

    // input convolution: wide coefficients of sqrt(a) * f for narrow-basis f
    MatXc Cin = MatXc::Zero(WiW * nF, WiN * nF);
    for (int rw = 0; rw < WiW; ++rw)
        for (int rn = 0; rn < WiN; ++rn) {
            int d = (dn.in_basis.center - KiW + rw) - (dn.in_basis.center - KiN + rn);
            if (std::abs(d) > pad) continue;
            for (int s = 0; s < nF; ++s) {
                int b = bslot[static_cast<std::size_t>(dn.in_basis.vertices[static_cast<std::size_t>(s)])];
                require(b >= 0, "sigma_from_lambda: input vertex off the boundary loop");
                Cin(rw * nF + s, rn * nF + s) = shat(pad + d, b);
            }
        }

    MatXc mid = dn.matrix * Cin;  // wide flux response per narrow column

    // output convolution and the overlap correction
    PartialDNMap out;
    out.matrix = MatXc::Zero(WoN * nG, WiN * nF);
    for (int rn = 0; rn < WoN; ++rn)
        for (int rw = 0; rw < WoW; ++rw) {
            int d = (dn.out_center - KoN + rn) - (dn.out_center - KoW + rw);
            if (std::abs(d) > pad) continue;
            for (int g = 0; g < nG; ++g) {
                int b = bslot[static_cast<std::size_t>(dn.out_vertices[static_cast<std::size_t>(g)])];
                require(b >= 0, "sigma_from_lambda: output vertex off the boundary loop");
                out.matrix.row(rn * nG + g) += shat(pad + d, b) * mid.row(rw * nG + g);
            }
        }
    std::vector<int> gslot(mesh.n_vertices(), -1);
    for (int g = 0; g < nG; ++g) gslot[static_cast<std::size_t>(dn.out_vertices[static_cast<std::size_t>(g)])] = g;
    for (int s = 0; s < nF; ++s) {
        int v = dn.in_basis.vertices[static_cast<std::size_t>(s)];
        int g = gslot[static_cast<std::size_t>(v)];
        if (g < 0) continue;  // correction lives on the face overlap only
        int b = bslot[static_cast<std::size_t>(v)];
        for (int rn_in = 0; rn_in < WiN; ++rn_in)
            for (int rn_out = 0; rn_out < WoN; ++rn_out) {
                int d = (dn.out_center - KoN + rn_out) - (dn.in_basis.center - KiN + rn_in);
                if (std::abs(d) > Pw) continue;
                out.matrix(rn_out * nG + g, rn_in * nF + s) -= what(Pw + d, b);
            }
    }

    out.in_basis = dn.in_basis;
    out.in_basis.K = KiN;
    out.out_vertices = dn.out_vertices;
    out.out_K = KoN;
    out.out_center = dn.out_center;
    out.gram = Cin.adjoint() * dn.gram * Cin;
    out.out_mass = dn.out_mass;
    out.theta = dn.theta;
    out.mesh_hash = dn.mesh_hash;
    std::uint64_t ah = a.content_hash();
    out.potential_hash = fnv1a(&ah, sizeof(ah), dn.potential_hash);
    return out;
}

SigmaDifference sigma_difference_norm(const Mesh& mesh, const ConductivityField& a1,
                                      const ConductivityField& a2, const PartialDNMap& dn1,
                                      const PartialDNMap& dn2, const BoundaryPartition& part,
                                      int pad) {
    require(std::abs(dn1.theta - dn2.theta) <= 1e-14 && dn1.in_basis.K == dn2.in_basis.K &&
                dn1.in_basis.center == dn2.in_basis.center &&
                dn1.in_basis.vertices == dn2.in_basis.vertices &&
                dn1.out_vertices == dn2.out_vertices && dn1.out_K == dn2.out_K &&
                dn1.out_center == dn2.out_center,
            "sigma_difference_norm: mismatched DN data");

    // compatibility of the pair: equal boundary traces everywhere, equal
    // normal derivatives on the face overlap
    fem::Locator loc(mesh);
    auto e1 = make_eval(a1, loc), e2 = make_eval(a2, loc);
    std::vector<Vec2> nus = vertex_normals(mesh);
    const double delta = 0.5 * mesh.spec.h;
    const int n1 = std::max(16, 8 * (std::max(a1.M, a2.M) + 1));

    std::vector<char> in_mark(mesh.n_vertices(), 0), out_mark(mesh.n_vertices(), 0);
    for (int e : part.input_face.edges) {
        in_mark[static_cast<std::size_t>(mesh.boundary[static_cast<std::size_t>(e)].v0)] = 1;
        in_mark[static_cast<std::size_t>(mesh.boundary[static_cast<std::size_t>(e)].v1)] = 1;
    }
    for (int e : part.output_face.edges) {
        out_mark[static_cast<std::size_t>(mesh.boundary[static_cast<std::size_t>(e)].v0)] = 1;
        out_mark[static_cast<std::size_t>(mesh.boundary[static_cast<std::size_t>(e)].v1)] = 1;
    }

    SigmaDifference rep;
    for (std::size_t i = 0; i < mesh.boundary_vertices.size(); ++i) {
        int v = mesh.boundary_vertices[i];
        const Vec2& p = mesh.vertices[static_cast<std::size_t>(v)];
        for (int j = 0; j < n1; ++j) {
            double x1 = static_cast<double>(j) / n1;
            rep.trace_gap = std::max(rep.trace_gap, std::abs(e1(x1, p) - e2(x1, p)));
            if (in_mark[static_cast<std::size_t>(v)] && out_mark[static_cast<std::size_t>(v)]) {
                double d1 = dnu_fd(e1, x1, p, nus[i], delta), d2 = dnu_fd(e2, x1, p, nus[i], delta);
                rep.normal_gap = std::max(rep.normal_gap, std::abs(d1 - d2));
            }
        }
    }
    if (rep.trace_gap > 1e-10)
        throw ValidationError("sigma_difference_norm: boundary traces of the pair differ (" +
                              format_g17(rep.trace_gap) + " absolute)");
    if (rep.normal_gap > 1e-10)
        throw ValidationError(
            "sigma_difference_norm: normal derivatives differ on the face overlap (" +
            format_g17(rep.normal_gap) + " absolute)");

    // shared-weight difference: both maps wrapped with sqrt(a1)
    PartialDNMap s1 = sigma_from_lambda(mesh, a1, dn1, pad);
    PartialDNMap s2 = sigma_from_lambda(mesh, a1, dn2, pad);
    rep.norm = forward::dn_difference_norm(s1, s2);

    ConductivityField unit = conductivity_constant(mesh, 1.0);
    PartialDNMap l1 = sigma_from_lambda(mesh, unit, dn1, pad);
    PartialDNMap l2 = sigma_from_lambda(mesh, unit, dn2, pad);
    rep.lambda_norm = forward::dn_difference_norm(l1, l2);

    rep.g4_ok = rep.lambda_norm <=
                rep.norm / std::sqrt(a1.a_star) * (1.0 + 1e-9) + 1e-14;
    return rep;
}

// --- stability chain ------------------------------------------------------------------

namespace {

// 1-periodic H1 norm of axial samples through the mode decomposition
double h1_norm_periodic(const Mesh& mesh, const MatX& samples) {
    SpMat K = fem::stiffness(mesh), M = fem::mass(mesh);
    const int n1 = static_cast<int>(samples.rows());
    MatXc hat = project_modes(samples, n1 / 2 - 1);
    int P = n1 / 2 - 1;
    double total = 0.0;
    for (int m = -P; m <= P; ++m) {
        VecXc x = hat.row(m + P).transpose();
        double kk = (x.adjoint() * (K.cast<cplx>() * x)).real()(0, 0);
        double mm = (x.adjoint() * (M.cast<cplx>() * x)).real()(0, 0);
        double b = 2.0 * pi * m;
        total += kk + (b * b + 1.0) * mm;
    }
    return std::sqrt(std::max(0.0, total));
}

double h1_norm_modes(const Mesh& mesh, const FiberContext& ctx, const MatXc& coeff) {
    SpMat K = fem::stiffness(mesh), M = fem::mass(mesh);
    double total = 0.0;
    for (int r = 0; r < ctx.n_modes(); ++r) {
        VecXc x = coeff.row(r).transpose();
        double kk = (x.adjoint() * (K.cast<cplx>() * x)).real()(0, 0);
        double mm = (x.adjoint() * (M.cast<cplx>() * x)).real()(0, 0);
        double b = ctx.beta(ctx.mode(r));
        total += kk + (b * b + 1.0) * mm;
    }
    return std::sqrt(std::max(0.0, total));
}

}  // namespace

CondStabilityReport conductivity_stability(const Mesh& mesh, const BoundaryPartition& part,
                                           const ConductivityField& a1,
                                           const std::function<ConductivityField(double)>& family,
                                           const CondStabilityConfig& cfg) {
    require(!cfg.scales.empty(), "conductivity_stability: empty scale ladder");
    require(cfg.in_K > cfg.pad && cfg.K > cfg.pad && cfg.K >= cfg.in_K,
            "conductivity_stability: windows must exceed the pad");
    CondStabilityReport rep;
    rep.gamma_star = cfg.gamma_star;

    ConductivityReport base = admissibility_check(a1, mesh);
    require(base.admissible, "conductivity_stability: reference conductivity inadmissible");
    LiouvilleResult l1 = liouville_potential(a1, mesh);
    FiberContext ctx(cfg.theta, cfg.K);
    PartialDNMap dn1 = forward::assemble_partial_dn(mesh, ctx, l1.V, part, cfg.in_K, 0);

    const int nv = static_cast<int>(mesh.n_vertices());
    const int n1 = cfg.n_axial;
    MatX s1(n1, nv), av1(n1, nv);
    {
        fem::Locator loc(mesh);
        auto e1 = make_eval(a1, loc);
        for (int j = 0; j < n1; ++j)
            for (int v = 0; v < nv; ++v) {
                av1(j, v) = e1(static_cast<double>(j) / n1, mesh.vertices[static_cast<std::size_t>(v)]);
                s1(j, v) = std::sqrt(av1(j, v));
            }
    }

    double best_scale = -1.0;
    ConductivityField a2_best;
    for (double s : cfg.scales) {
        CondStabilityRow row;
        row.s = s;
        ConductivityField a2 = family(s);
        ConductivityReport r2 = admissibility_check(a2, mesh);
        if (!r2.admissible) {
            row.skipped = true;
            rep.warning += "scale " + format_g17(s) + " skipped (inadmissible); ";
            rep.rows.push_back(row);
            continue;
        }
        LiouvilleResult l2 = liouville_potential(a2, mesh);
        PartialDNMap dn2 = forward::assemble_partial_dn(mesh, ctx, l2.V, part, cfg.in_K, 0);
        SigmaDifference sd = sigma_difference_norm(mesh, a1, a2, dn1, dn2, part, cfg.pad);
        row.sigma_norm = sd.norm;
        row.lambda_norm = sd.lambda_norm;
        row.g4_ok = sd.g4_ok;

        MatX s2(n1, nv), av2(n1, nv);
        {
            fem::Locator loc(mesh);
            auto e2 = make_eval(a2, loc);
            for (int j = 0; j < n1; ++j)
                for (int v = 0; v < nv; ++v) {
                    av2(j, v) =
                        e2(static_cast<double>(j) / n1, mesh.vertices[static_cast<std::size_t>(v)]);
                    s2(j, v) = std::sqrt(av2(j, v));
                }
        }
        row.h1 = h1_norm_periodic(mesh, av1 - av2);
        row.alpha_h1 = h1_norm_periodic(mesh, s1 - s2);
        double mplus = std::max(a1.bound_plus, a2.bound_plus);
        row.factor_ok =
            row.h1 <= 2.0 / std::sqrt(a1.a_star) * mplus * row.alpha_h1 * (1.0 + 1e-9) + 1e-14;
        row.phi = recon::stability_modulus(row.sigma_norm / std::sqrt(a1.a_star), cfg.gamma_star);
        row.ratio = row.phi > 0.0 ? row.h1 / row.phi : 0.0;
        rep.rows.push_back(row);
        if (s > best_scale && row.alpha_h1 > 0.0) {
            best_scale = s;
            a2_best = a2;
        }
    }

    // alpha cross-check at the largest usable scale: the direct difference of
    // the square roots against the solve of its characterizing equation
    if (best_scale >= 0.0) {
        ConductivityField a2 = a2_best;
        LiouvilleResult l2 = liouville_potential(a2, mesh);
        int Ka = std::max({l1.V.M, l2.V.M, a1.M, a2.M}) + 2;
        FiberContext actx(0.0, Ka);
        fem::Locator loc(mesh);
        auto e1 = make_eval(a1, loc), e2 = make_eval(a2, loc);
        const int na = std::max(n1, 4 * Ka + 4);
        MatX alpha_s(na, nv), rhs_s(na, nv);
        auto vfun = [&](const ConductivityField& a, const LiouvilleResult& l, double x1,
                        const Vec2& p, int vtx) {
            if (l.V.analytic) return l.V.analytic(x1, p);
            cplx acc(0.0, 0.0);
            for (int m = -l.V.M; m <= l.V.M; ++m)
                acc += l.V.modes(m + l.V.M, vtx) * std::exp(cplx(0.0, 2.0 * pi * m * x1));
            (void)a;
            return acc.real();
        };
        for (int j = 0; j < na; ++j) {
            double x1 = static_cast<double>(j) / na;
            for (int v = 0; v < nv; ++v) {
                const Vec2& p = mesh.vertices[static_cast<std::size_t>(v)];
                double sa1 = std::sqrt(e1(x1, p)), sa2 = std::sqrt(e2(x1, p));
                alpha_s(j, v) = sa1 - sa2;
                rhs_s(j, v) = -sa2 * (vfun(a1, l1, x1, p, v) - vfun(a2, l2, x1, p, v));
            }
        }
        MatXc source = project_modes(rhs_s, Ka);
        forward::FiberOperator op(mesh, actx, l1.V);
        MatXc g = MatXc::Zero(actx.n_modes(), static_cast<Eigen::Index>(mesh.boundary_vertices.size()));
        auto sol = op.solve(g, &source);
        MatXc direct = project_modes(alpha_s, Ka);
        rep.alpha.direct_h1 = h1_norm_modes(mesh, actx, direct);
        rep.alpha.solve_h1 = h1_norm_modes(mesh, actx, sol.field.coeff);
        rep.alpha.gap_rel = rep.alpha.direct_h1 > 0.0
                                ? h1_norm_modes(mesh, actx, direct - sol.field.coeff) /
                                      rep.alpha.direct_h1
                                : 0.0;
        rep.alpha.residual = sol.pde_residual;
    }

    double lo = 0.0, hi = 0.0;
    for (const auto& row : rep.rows) {
        if (row.skipped || row.ratio <= 0.0) continue;
        if (hi == 0.0) lo = hi = row.ratio;
        lo = std::min(lo, row.ratio);
        hi = std::max(hi, row.ratio);
    }
    rep.fitted_C = hi;
    rep.spread = lo > 0.0 ? hi / lo : 1.0;
    return rep;
}

}  // namespace cwg::conductivity
