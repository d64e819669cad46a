// Quadrature-only check of the weighted inequality on disk cross sections.
// Test fields are polynomial in x', so values, transverse Laplacians and rim
// normal derivatives are exact; the only discretization is the quadrature.
#include <algorithm>
#include <cmath>
#include <random>

#include "cwg/cgo.hpp"

namespace cwg::cgo {

namespace {

// Gauss-Legendre nodes/weights on [-1,1] (Newton on P_n; n is tiny).
struct Rule {
    std::vector<double> x, w;
};

Rule gauss(int n) {
    Rule r;
    r.x.resize(static_cast<std::size_t>(n));
    r.w.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double t = std::cos(pi * (i + 0.75) / (n + 0.5));
        double p0 = 0.0, p1 = 0.0;
        for (int it = 0; it < 100; ++it) {
            p0 = 1.0;
            p1 = t;
            for (int j = 2; j <= n; ++j) {
                double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (t * p1 - p0) / (t * t - 1.0);
            double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        double dp = n * (t * p1 - p0) / (t * t - 1.0);
        r.x[static_cast<std::size_t>(i)] = -t;
        r.x[static_cast<std::size_t>(n - 1 - i)] = t;
        r.w[static_cast<std::size_t>(i)] = r.w[static_cast<std::size_t>(n - 1 - i)] =
            2.0 / ((1.0 - t * t) * dp * dp);
    }
    return r;
}

// dense bivariate polynomial, coefficient c[i][j] of x^i y^j
struct Poly2 {
    std::vector<std::vector<double>> c;  // (dx+1) x (dy+1)

    Poly2(int dx = 0, int dy = 0)
        : c(static_cast<std::size_t>(dx + 1), std::vector<double>(static_cast<std::size_t>(dy + 1), 0.0)) {}

    int degx() const { return static_cast<int>(c.size()) - 1; }
    int degy() const { return static_cast<int>(c[0].size()) - 1; }

    static Poly2 mul(const Poly2& a, const Poly2& b) {
        Poly2 r(a.degx() + b.degx(), a.degy() + b.degy());
        for (int i = 0; i <= a.degx(); ++i)
            for (int j = 0; j <= a.degy(); ++j)
                for (int p = 0; p <= b.degx(); ++p)
                    for (int q = 0; q <= b.degy(); ++q)
                        r.c[static_cast<std::size_t>(i + p)][static_cast<std::size_t>(j + q)] +=
                            a.c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
                            b.c[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)];
        return r;
    }
    Poly2 dx() const {
        Poly2 r(std::max(0, degx() - 1), degy());
        for (int i = 1; i <= degx(); ++i)
            for (int j = 0; j <= degy(); ++j)
                r.c[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)] =
                    i * c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        return r;
    }
    Poly2 dy() const {
        Poly2 r(degx(), std::max(0, degy() - 1));
        for (int i = 0; i <= degx(); ++i)
            for (int j = 1; j <= degy(); ++j)
                r.c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)] =
                    j * c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        return r;
    }
    static Poly2 sum(const Poly2& a, const Poly2& b) {
        Poly2 r(std::max(a.degx(), b.degx()), std::max(a.degy(), b.degy()));
        for (int i = 0; i <= r.degx(); ++i)
            for (int j = 0; j <= r.degy(); ++j) {
                double v = 0.0;
                if (i <= a.degx() && j <= a.degy())
                    v += a.c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                if (i <= b.degx() && j <= b.degy())
                    v += b.c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                r.c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v;
            }
        return r;
    }
    double eval(const Vec2& p) const {
        // Horner in x of Horner-in-y rows
        double acc = 0.0;
        for (int i = degx(); i >= 0; --i) {
            double row = 0.0;
            for (int j = degy(); j >= 0; --j)
                row = row * p.y() + c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            acc = acc * p.x() + row;
        }
        return acc;
    }
};

Poly2 random_quadratic(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Poly2 q(2, 2);
    q.c[0][0] = u(rng);
    q.c[1][0] = u(rng);
    q.c[0][1] = u(rng);
    q.c[1][1] = u(rng);
    q.c[2][0] = u(rng);
    q.c[0][2] = u(rng);
    return q;
}

}  // namespace

std::vector<CarlemanField> random_carleman_fields(std::uint64_t seed, int count, double radius) {
    require(count > 0 && radius > 0.0, "carleman fields: count and radius must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> kax(-2, 2);
    std::vector<CarlemanField> out;
    out.reserve(static_cast<std::size_t>(count));

    const double R = radius;
    for (int i = 0; i < count; ++i) {
        CarlemanField f;
        f.k_ax = kax(rng);
        Poly2 q = random_quadratic(rng);
        if (i % 2 == 0) {
            // rim-touching: (R^2 - |x'|^2) q, zero trace, nonzero normal derivative
            Poly2 bowl(2, 2);
            bowl.c[0][0] = R * R;
            bowl.c[2][0] = -1.0;
            bowl.c[0][2] = -1.0;
            Poly2 phi = Poly2::mul(bowl, q);
            Poly2 lap = Poly2::sum(phi.dx().dx(), phi.dy().dy());
            Poly2 gx = phi.dx(), gy = phi.dy();
            f.value = [phi](const Vec2& p) { return phi.eval(p); };
            f.lap = [lap](const Vec2& p) { return lap.eval(p); };
            f.dnu = [gx, gy, R](const Vec2& p) {
                return (gx.eval(p) * p.x() + gy.eval(p) * p.y()) / R;
            };
            f.boundary_touching = true;
        } else {
            // interior bump: (rho^2 - |x'-c|^2)^3 q inside its disk, zero outside
            double rho = R * (0.2 + 0.2 * u01(rng));
            double rc = u01(rng) * (0.9 * R - rho);
            double ang = 2.0 * pi * u01(rng);
            Vec2 c(rc * std::cos(ang), rc * std::sin(ang));
            Poly2 shell(2, 2);
            shell.c[0][0] = rho * rho - c.squaredNorm();
            shell.c[1][0] = 2.0 * c.x();
            shell.c[0][1] = 2.0 * c.y();
            shell.c[2][0] = -1.0;
            shell.c[0][2] = -1.0;
            Poly2 phi = Poly2::mul(Poly2::mul(shell, shell), Poly2::mul(shell, q));
            Poly2 lap = Poly2::sum(phi.dx().dx(), phi.dy().dy());
            f.value = [phi, c, rho](const Vec2& p) {
                return (p - c).squaredNorm() <= rho * rho ? phi.eval(p) : 0.0;
            };
            f.lap = [lap, c, rho](const Vec2& p) {
                return (p - c).squaredNorm() <= rho * rho ? lap.eval(p) : 0.0;
            };
            f.dnu = [](const Vec2&) { return 0.0; };
            f.boundary_touching = false;
        }
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<CarlemanRow> carleman_empirical(const PotentialField& V, const Mesh& mesh,
                                            const Vec2& xi, double theta,
                                            const std::vector<double>& taus,
                                            const std::vector<CarlemanField>& fields) {
    require(mesh.spec.kind == geometry::SectionKind::disk,
            "carleman check: disk cross sections only");
    require(static_cast<bool>(V.analytic),
            "carleman check: needs a closed-form potential evaluator");
    require(std::abs(xi.norm() - 1.0) <= 1e-12, "carleman check: xi must be a unit vector");
    require(!taus.empty() && !fields.empty(), "carleman check: empty tau ladder or test set");

    const double R = mesh.spec.radius;
    const Vec2 xp(-xi.y(), xi.x());

    // interior rule: s = -R + u^2 grading along xi (resolves the weight's rim
    // layer), Gauss across the chord
    struct Node {
        Vec2 x;
        double w, s;
    };
    std::vector<Node> interior;
    {
        const Rule gu = gauss(12), gt = gauss(24);
        const double umax = std::sqrt(2.0 * R);
        const int panels = 40;
        for (int pnl = 0; pnl < panels; ++pnl) {
            double ua = umax * pnl / panels, ub = umax * (pnl + 1) / panels;
            for (std::size_t a = 0; a < gu.x.size(); ++a) {
                double u = 0.5 * (ua + ub) + 0.5 * (ub - ua) * gu.x[a];
                double wu = 0.5 * (ub - ua) * gu.w[a] * 2.0 * u;
                double s = -R + u * u;
                double half = std::sqrt(std::max(0.0, R * R - s * s));
                if (half <= 0.0) continue;
                for (std::size_t b = 0; b < gt.x.size(); ++b) {
                    double t = half * gt.x[b];
                    interior.push_back({s * xi + t * xp, wu * half * gt.w[b], s});
                }
            }
        }
    }
    // rim rule: composite Gauss in the angle
    struct BNode {
        Vec2 x, nu;
        double w;
    };
    std::vector<BNode> rim;
    {
        const Rule ga = gauss(8);
        const int panels = 64;
        for (int pnl = 0; pnl < panels; ++pnl) {
            double aa = 2.0 * pi * pnl / panels, ab = 2.0 * pi * (pnl + 1) / panels;
            for (std::size_t a = 0; a < ga.x.size(); ++a) {
                double ang = 0.5 * (aa + ab) + 0.5 * (ab - aa) * ga.x[a];
                Vec2 nu(std::cos(ang), std::sin(ang));
                rim.push_back({R * nu, nu, 0.5 * (ab - aa) * ga.w[a] * R});
            }
        }
    }
    const int n_ax = 8;  // periodic trapezoid in x1

    // reject fields with a nonzero Dirichlet trace
    for (const auto& f : fields) {
        double interior_scale = 0.0, rim_scale = 0.0;
        for (const auto& nd : interior) interior_scale = std::max(interior_scale, std::abs(f.value(nd.x)));
        for (const auto& nd : rim) rim_scale = std::max(rim_scale, std::abs(f.value(nd.x)));
        require(rim_scale <= 1e-9 * std::max(interior_scale, 1e-300),
                "carleman check: test field has a nonzero boundary trace");
    }

    std::vector<CarlemanRow> rows;
    rows.reserve(taus.size());
    for (double tau : taus) {
        require(tau > 0.0, "carleman check: tau must be positive");
        CarlemanRow row;
        row.tau = tau;
        row.ratios.resize(fields.size());
        for (std::size_t fi = 0; fi < fields.size(); ++fi) {
            const auto& f = fields[fi];
            double beta = theta + 2.0 * pi * f.k_ax;
            double num_int = 0.0, den_int = 0.0;
            for (const auto& nd : interior) {
                double weight = nd.w * std::exp(-2.0 * tau * nd.s);
                double phi = f.value(nd.x), lap = f.lap(nd.x);
                double base = beta * beta * phi - lap;
                double acc = 0.0;
                for (int j = 0; j < n_ax; ++j) {
                    double e = base + V.analytic(static_cast<double>(j) / n_ax, nd.x) * phi;
                    acc += e * e;
                }
                num_int += weight * acc / n_ax;
                den_int += weight * phi * phi;
            }
            double num_bd = 0.0, den_bd = 0.0;
            if (f.boundary_touching) {
                for (const auto& nd : rim) {
                    double sn = xi.dot(nd.nu);
                    double d = f.dnu(nd.x);
                    double weight = nd.w * std::exp(-2.0 * tau * xi.dot(nd.x)) * std::abs(sn) * d * d;
                    if (sn < 0.0)
                        num_bd += weight;
                    else
                        den_bd += weight;
                }
            }
            row.ratios[fi] = (num_int + tau * num_bd) / (den_int + tau * den_bd);
        }
        row.min_ratio = *std::min_element(row.ratios.begin(), row.ratios.end());
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace cwg::cgo
