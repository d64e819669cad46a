#include "cwg/cgo.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <fftw3.h>

#include "cwg/fem.hpp"

namespace cwg::cgo {

// --- parameter algebra -------------------------------------------------------

namespace {

void check_params(const CGOParams& p) {
    double en = p.eta.norm();
    double scale = std::max(1.0, p.tau);
    auto hold = [](bool ok, const char* what) {
        if (!ok) throw InvariantError(std::string("cgo params: ") + what);
    };
    // null vectors: zeta.zeta = 0 componentwise algebra, checked numerically
    for (const Vec3c* z : {&p.zeta1, &p.zeta2}) {
        cplx sq = (*z)(0) * (*z)(0) + (*z)(1) * (*z)(1) + (*z)(2) * (*z)(2);
        hold(std::abs(sq) <= 1e-12 * scale * scale, "zeta is not a null vector");
        Vec3 re = z->real(), im = z->imag();
        hold(std::abs(re.norm() - im.norm()) <= 1e-12 * scale, "|Re zeta| != |Im zeta|");
        hold(std::abs(re.dot(im)) <= 1e-12 * scale * scale, "Re zeta not orthogonal to Im zeta");
    }
    // axial compatibility: first components in i(theta + 2 pi Z)
    for (const Vec3c* z : {&p.zeta1, &p.zeta2}) {
        hold(std::abs((*z)(0).real()) <= 1e-12 * scale, "axial component not purely imaginary");
        double m = ((*z)(0).imag() - p.theta) / (2.0 * pi);
        hold(std::abs(m - std::round(m)) <= 1e-9, "axial component incompatible with theta");
    }
    hold(std::abs(2.0 * pi * p.k * p.ell(0) + p.ell(1) * p.eta.x() + p.ell(2) * p.eta.y()) <=
             1e-12 * scale * scale,
         "ell not orthogonal to (2 pi k, eta)");
    hold(std::abs(p.ell(1) * p.xi.x() + p.ell(2) * p.xi.y()) <= 1e-12 * scale,
         "transverse part of ell not orthogonal to xi");
    Vec3c sum = p.zeta1 + p.zeta2.conjugate();
    Vec3c target(cplx(0.0, 2.0 * pi * p.k), cplx(0.0, p.eta.x()), cplx(0.0, p.eta.y()));
    hold((sum - target).norm() <= 1e-12 * std::max(1.0, target.norm()),
         "frequency identity zeta1 + conj(zeta2) = i(2 pi k, eta) violated");
    // tau window
    if (!(2.0 * pi * p.r < p.tau)) throw InvariantError("cgo params: tau <= 2 pi r");
    double hi = std::hypot(2.0 * pi * p.k, en) / 2.0 +
                4.0 * pi * (p.r + 1.0) * (1.0 + std::abs(2.0 * pi * p.k) / en);
    if (!(p.tau <= hi * (1.0 + 1e-12))) throw InvariantError("cgo params: tau above the admissible bound");
}

CGOParams build_params(int k, const Vec2& eta, double r, double theta, const Vec2& xi) {
    CGOParams p;
    p.k = k;
    p.eta = eta;
    p.xi = xi;
    p.r = r;
    p.theta = theta;

    double en2 = eta.squaredNorm();
    double par = (k % 2 == 0) ? std::floor(r) + 1.0 : std::floor(r) + 1.5;
    double s = theta + 2.0 * pi * par;
    Vec2 ellp = -(s * 2.0 * pi * k / en2) * eta;
    p.ell << s, ellp.x(), ellp.y();
    p.tau = std::sqrt(en2 / 4.0 + pi * pi * k * k + p.ell.squaredNorm());

    Vec2 a1 = eta / 2.0 + ellp;   // transverse imaginary part of zeta1
    Vec2 a2 = ellp - eta / 2.0;   // transverse imaginary part of zeta2
    p.zeta1 << cplx(0.0, pi * k + s), cplx(-p.tau * xi.x(), a1.x()), cplx(-p.tau * xi.y(), a1.y());
    p.zeta2 << cplx(0.0, s - pi * k), cplx(p.tau * xi.x(), a2.x()), cplx(p.tau * xi.y(), a2.y());
    p.mode1 = static_cast<int>(std::llround((pi * k + s - theta) / (2.0 * pi)));
    p.mode2 = static_cast<int>(std::llround((s - pi * k - theta) / (2.0 * pi)));
    check_params(p);
    return p;
}

void validate_inputs(const Vec2& eta, double r, double theta) {
    if (eta.norm() == 0.0) throw ValidationError("cgo params: eta must be nonzero");
    if (!(r > 0.0)) throw ValidationError("cgo params: r must be positive");
    if (!(theta >= 0.0 && theta < 2.0 * pi)) throw ValidationError("cgo params: theta outside [0, 2 pi)");
}

}  // namespace

CGOParams make_cgo_params(int k, const Vec2& eta, double r, double theta) {
    validate_inputs(eta, r, theta);
    Vec2 u = eta / eta.norm();
    return build_params(k, eta, r, theta, Vec2(-u.y(), u.x()));
}

CGOParams make_cgo_params(int k, const Vec2& eta, double r, double theta, const Vec2& probe) {
    validate_inputs(eta, r, theta);
    Vec2 u = eta / eta.norm();
    Vec2 xi(-u.y(), u.x());
    if ((xi - probe).norm() > (-xi - probe).norm()) xi = -xi;
    return build_params(k, eta, r, theta, xi);
}

CGOParams make_cgo_params_xi(int k, const Vec2& eta, double r, double theta, const Vec2& xi) {
    validate_inputs(eta, r, theta);
    require(std::abs(xi.norm() - 1.0) <= 1e-12, "cgo params: xi must be a unit vector");
    require(std::abs(xi.dot(eta)) <= 1e-12 * eta.norm(), "cgo params: xi must be orthogonal to eta");
    return build_params(k, eta, r, theta, xi);
}

CGOParams params_for_tau(int k, const Vec2& eta, double theta, double tau_target, const Vec2& probe) {
    validate_inputs(eta, 1.0, theta);
    double en2 = eta.squaredNorm();
    double base = en2 / 4.0 + pi * pi * k * k;
    if (!(tau_target * tau_target > base))
        throw ValidationError("params_for_tau: target below the frequency floor sqrt(|eta|^2/4 + pi^2 k^2)");
    double slope = 1.0 + 4.0 * pi * pi * k * k / en2;  // |ell|^2 = s^2 * slope
    double s_star = std::sqrt((tau_target * tau_target - base) / slope);
    double par_star = (s_star - theta) / (2.0 * pi);
    double off = (k % 2 == 0) ? 1.0 : 1.5;
    long fl = std::lround(par_star - off);
    if (fl < 0) fl = 0;
    return make_cgo_params(k, eta, static_cast<double>(fl) + 0.5, theta, probe);
}

// --- periodic remainder on the transverse torus ------------------------------

namespace {

std::mutex& fftw_guard() {
    static std::mutex m;
    return m;
}

struct Fft3 {
    int n0, n1, n2;
    std::vector<cplx> buf;
    fftw_plan fwd = nullptr, bwd = nullptr;

    Fft3(int a, int b, int c) : n0(a), n1(b), n2(c), buf(static_cast<std::size_t>(a) * b * c) {
        std::lock_guard<std::mutex> lock(fftw_guard());
        auto* d = reinterpret_cast<fftw_complex*>(buf.data());
        fwd = fftw_plan_dft_3d(n0, n1, n2, d, d, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_3d(n0, n1, n2, d, d, FFTW_BACKWARD, FFTW_ESTIMATE);
        if (!fwd || !bwd) throw SolverError("cgo smooth: FFT plan creation failed");
    }
    ~Fft3() {
        std::lock_guard<std::mutex> lock(fftw_guard());
        if (fwd) fftw_destroy_plan(fwd);
        if (bwd) fftw_destroy_plan(bwd);
    }
    Fft3(const Fft3&) = delete;
    Fft3& operator=(const Fft3&) = delete;

    void forward() { fftw_execute(fwd); }
    void backward() { fftw_execute(bwd); }
};

inline int fft_freq(int q, int n) { return q < (n + 1) / 2 ? q : q - n; }

}  // namespace

CGOSolution solve_cgo_smooth(const Mesh& mesh, const PotentialField& V, const CGOParams& p,
                             const SmoothOptions& opt) {
    forward::check_reality(V);
    const Vec3c zeta = p.zeta1;
    const double tau = p.tau;
    const double Rmax = mesh.max_radius();
    require(tau * Rmax <= 600.0, "cgo smooth: tau too large for double-precision phases");

    const Vec2 xi = p.xi, xp(-p.xi.y(), p.xi.x());
    const double L = 2.0 * Rmax * opt.box_scale;
    const int n1 = opt.n_axial, N = opt.n_transverse;
    require(n1 >= 4 * V.M + 4 && N >= 16, "cgo smooth: grid too coarse");

    const double contraction = V.bound_plus * L / (2.0 * pi * tau);
    if (contraction >= 0.95)
        throw SolverError("cgo smooth: contraction bound " + format_g17(contraction) +
                          " >= 0.95; raise tau or shrink the box");

    // V on the torus grid, zero outside omega
    fem::Locator loc(mesh);
    const std::size_t nt = static_cast<std::size_t>(N) * N;
    std::vector<signed char> inside(nt, 0);
    MatXc vmodes(static_cast<Eigen::Index>(2 * V.M + 1), static_cast<Eigen::Index>(nt));
    std::vector<Vec2> xydir(nt);
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            double s = -L / 2.0 + a * L / N, t = -L / 2.0 + b * L / N;
            Vec2 x = s * xi + t * xp;
            std::size_t id = static_cast<std::size_t>(a) * N + b;
            xydir[id] = x;
            if (loc.locate(x) >= 0) {
                inside[id] = 1;
                for (int m = -V.M; m <= V.M; ++m)
                    vmodes(m + V.M, static_cast<Eigen::Index>(id)) =
                        loc.eval(V.mode_row(m), x, cplx(0.0, 0.0));
            }
        }

    const std::size_t ntot = static_cast<std::size_t>(n1) * nt;
    std::vector<cplx> vgrid(ntot);  // V(x1, x')
    for (int j = 0; j < n1; ++j) {
        double x1 = static_cast<double>(j) / n1;
        for (std::size_t id = 0; id < nt; ++id) {
            cplx val = 0.0;
            if (inside[id]) {
                if (V.analytic)
                    val = V.analytic(x1, xydir[id]);
                else
                    for (int m = -V.M; m <= V.M; ++m)
                        val += vmodes(m + V.M, static_cast<Eigen::Index>(id)) *
                               std::exp(cplx(0.0, 2.0 * pi * m * x1));
            }
            vgrid[static_cast<std::size_t>(j) * nt + id] = val;
        }
    }

    // rotated-frame components of zeta
    const Vec3 zre(zeta(0).real(), xi.x() * zeta(1).real() + xi.y() * zeta(2).real(),
                   xp.x() * zeta(1).real() + xp.y() * zeta(2).real());
    const Vec3 zim(zeta(0).imag(), xi.x() * zeta(1).imag() + xi.y() * zeta(2).imag(),
                   xp.x() * zeta(1).imag() + xp.y() * zeta(2).imag());

    // Green multiplier on the half-shifted lattice: the xi-direction
    // wavenumbers are (2 pi / L)(m + 1/2), so |Im p| >= 2 pi tau / L.
    std::vector<cplx> pinv(ntot);
    for (int j = 0; j < n1; ++j) {
        double k1 = 2.0 * pi * fft_freq(j, n1);
        for (int a = 0; a < N; ++a) {
            double ks = (2.0 * pi / L) * (fft_freq(a, N) + 0.5);
            for (int b = 0; b < N; ++b) {
                double kt = (2.0 * pi / L) * fft_freq(b, N);
                double re = (k1 + zim(0)) * (k1 + zim(0)) + (ks + zim(1)) * (ks + zim(1)) +
                            (kt + zim(2)) * (kt + zim(2)) - tau * tau;
                double im = -2.0 * (zre(0) * k1 + zre(1) * ks + zre(2) * kt);
                pinv[(static_cast<std::size_t>(j) * N + a) * N + b] = 1.0 / cplx(re, im);
            }
        }
    }

    std::vector<cplx> shift(static_cast<std::size_t>(N));  // e^{-i pi s / L}
    for (int a = 0; a < N; ++a) {
        double s = -L / 2.0 + a * L / N;
        shift[static_cast<std::size_t>(a)] = std::exp(cplx(0.0, -pi * s / L));
    }

    Fft3 fft(n1, N, N);
    auto apply_green = [&](const std::vector<cplx>& f, std::vector<cplx>& out) {
        for (std::size_t i = 0; i < ntot; ++i) {
            std::size_t a = (i / N) % N;
            fft.buf[i] = f[i] * shift[a];
        }
        fft.forward();
        for (std::size_t i = 0; i < ntot; ++i) fft.buf[i] *= pinv[i];
        fft.backward();
        double scale = 1.0 / static_cast<double>(ntot);
        out.resize(ntot);
        for (std::size_t i = 0; i < ntot; ++i) {
            std::size_t a = (i / N) % N;
            out[i] = fft.buf[i] * scale * std::conj(shift[a]);
        }
    };

    std::vector<cplx> v(ntot, cplx(0.0, 0.0)), rhs(ntot), vnew;
    int iters = 0;
    double change = 0.0;
    for (; iters < opt.max_iter; ++iters) {
        for (std::size_t i = 0; i < ntot; ++i) rhs[i] = -vgrid[i] * (1.0 + v[i]);
        apply_green(rhs, vnew);
        double dn = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < ntot; ++i) {
            dn += std::norm(vnew[i] - v[i]);
            nn += std::norm(vnew[i]);
        }
        v.swap(vnew);
        change = std::sqrt(dn) / std::max(std::sqrt(nn), 1e-300);
        if (change < opt.tol) break;
    }
    if (change >= std::sqrt(opt.tol))
        throw SolverError("cgo smooth: fixed point did not converge (change " + format_g17(change) + ")");

    // spectral residual of (-Lap - 2 zeta.grad) v + V(1+v) = -V  <=>  p vhat + rhshat = 0
    double res_num = 0.0, res_den = 0.0;
    {
        for (std::size_t i = 0; i < ntot; ++i) {
            std::size_t a = (i / N) % N;
            fft.buf[i] = -(-vgrid[i] * (1.0 + v[i])) * shift[a];  // -rhs, phase-stripped
        }
        fft.forward();
        std::vector<cplx> hr(fft.buf);
        for (std::size_t i = 0; i < ntot; ++i) {
            std::size_t a = (i / N) % N;
            fft.buf[i] = v[i] * shift[a];
        }
        fft.forward();
        for (std::size_t i = 0; i < ntot; ++i) {
            res_num += std::norm(fft.buf[i] / pinv[i] + hr[i]);
            res_den += std::norm(hr[i]);
        }
    }

    // axial modes of v at each transverse grid point (direct DFT, n1 is small)
    std::vector<cplx> vhat(ntot);
    for (int m = 0; m < n1; ++m) {
        for (std::size_t id = 0; id < nt; ++id) {
            cplx acc = 0.0;
            for (int j = 0; j < n1; ++j)
                acc += v[static_cast<std::size_t>(j) * nt + id] *
                       std::exp(cplx(0.0, -2.0 * pi * fft_freq(m, n1) * j / static_cast<double>(n1)));
            vhat[static_cast<std::size_t>(m) * nt + id] = acc / static_cast<double>(n1);
        }
    }

    // bilinear interpolation of each axial mode onto the mesh vertices
    const int nv = static_cast<int>(mesh.n_vertices());
    MatXc vm(n1, nv);
    for (int vv = 0; vv < nv; ++vv) {
        const Vec2& x = mesh.vertices[static_cast<std::size_t>(vv)];
        double fs = (xi.dot(x) + L / 2.0) * N / L, ft = (xp.dot(x) + L / 2.0) * N / L;
        int a0 = static_cast<int>(std::floor(fs)), b0 = static_cast<int>(std::floor(ft));
        double wa = fs - a0, wb = ft - b0;
        a0 = std::clamp(a0, 0, N - 2);
        b0 = std::clamp(b0, 0, N - 2);
        for (int m = 0; m < n1; ++m) {
            const cplx* base = &vhat[static_cast<std::size_t>(m) * nt];
            cplx c00 = base[static_cast<std::size_t>(a0) * N + b0];
            cplx c10 = base[static_cast<std::size_t>(a0 + 1) * N + b0];
            cplx c01 = base[static_cast<std::size_t>(a0) * N + b0 + 1];
            cplx c11 = base[static_cast<std::size_t>(a0 + 1) * N + b0 + 1];
            vm(m, vv) = (1 - wa) * ((1 - wb) * c00 + wb * c01) + wa * ((1 - wb) * c10 + wb * c11);
        }
    }

    int K = opt.window_K > 0 ? opt.window_K : std::abs(p.k) + V.M + 3;
    FiberContext ctx(p.theta, K, p.mode1);
    CGOSolution sol(p, CGOSolution::Kind::smooth, ctx);
    sol.iterations = iters + 1;
    sol.residual = std::sqrt(res_num / std::max(res_den, 1e-300));

    // remainder on the cell grid and its L2 norm (mode Parseval, exact in x1)
    sol.remainder = CellField::zero(ctx, mesh);
    for (int j = 0; j <= ctx.n_axial; ++j) {
        double x1 = ctx.x1(j);
        for (int m = 0; m < n1; ++m)
            sol.remainder.values.row(j) +=
                std::exp(cplx(0.0, 2.0 * pi * fft_freq(m, n1) * x1)) * vm.row(m);
    }
    SpMat M = fem::mass(mesh);
    double l2sq = 0.0;
    for (int m = 0; m < n1; ++m) {
        VecXc col = vm.row(m).transpose();
        l2sq += (col.adjoint() * (M.cast<cplx>() * col)).real()(0, 0);
    }
    sol.remainder_l2 = std::sqrt(std::max(0.0, l2sq));
    sol.weighted_l2 = sol.remainder_l2;

    // u modes: mode row of e^{zeta.x} is mode1; v shifts it by its periodic modes
    sol.u_modes = MatXc::Zero(ctx.n_modes(), nv);
    cplx z1(zeta(1)), z2(zeta(2));
    for (int vv = 0; vv < nv; ++vv) {
        const Vec2& x = mesh.vertices[static_cast<std::size_t>(vv)];
        cplx phase = std::exp(z1 * x.x() + z2 * x.y());
        for (int rr = 0; rr < ctx.n_modes(); ++rr) {
            int m = ctx.mode(rr) - p.mode1;
            cplx val = (m == 0) ? cplx(1.0, 0.0) : cplx(0.0, 0.0);
            if (2 * std::abs(m) < n1) {
                int slot = m >= 0 ? m : m + n1;
                val += vm(slot, vv);
            }
            sol.u_modes(rr, vv) = phase * val;
        }
    }
    return sol;
}

// --- boundary-vanishing remainder --------------------------------------------

namespace {

// entrywise conjugation B_ij -> B_ij * exp(dir . (x_j - x_i))
template <class Mat>
Mat scale_conjugate(const Mat& B, const Mesh& mesh, const Vec2& dir) {
    Mat out = B;
    for (int col = 0; col < out.outerSize(); ++col)
        for (typename Mat::InnerIterator it(out, col); it; ++it) {
            const Vec2& xr = mesh.vertices[static_cast<std::size_t>(it.row())];
            const Vec2& xc = mesh.vertices[static_cast<std::size_t>(col)];
            it.valueRef() *= std::exp(dir.dot(xc - xr));
        }
    return out;
}

}  // namespace

CGOSolution solve_cgo_vanishing(const Mesh& mesh, const PotentialField& V, const CGOParams& p,
                                double eps, const VanishingOptions& opt) {
    forward::check_reality(V);
    require(eps > 0.0 && eps < 2.0, "cgo vanishing: eps must lie in (0, 2)");
    const double tau = p.tau;
    const Vec2 xi = p.xi;
    require(tau * mesh.max_radius() <= 600.0, "cgo vanishing: tau too large for double-precision phases");

    int K = opt.window_K > 0 ? opt.window_K : std::abs(p.k) + V.M + 3;
    FiberContext ctx(p.theta, K, p.mode2);
    const int W = ctx.n_modes();
    const int nv = static_cast<int>(mesh.n_vertices());
    const int nb = static_cast<int>(mesh.boundary_vertices.size());

    // transverse pure phase of e^{zeta2 . x} relative to the weight e^{tau xi . x'}
    const Vec2 q2(p.ell(1) - p.eta.x() / 2.0, p.ell(2) - p.eta.y() / 2.0);
    VecXc phase2(nv);
    VecX expw(nv);  // e^{tau xi . x'}
    for (int vv = 0; vv < nv; ++vv) {
        const Vec2& x = mesh.vertices[static_cast<std::size_t>(vv)];
        phase2[vv] = std::exp(cplx(0.0, q2.dot(x)));
        expw[vv] = std::exp(tau * xi.dot(x));
    }

    // scaled operator blocks
    SpMat Ks = scale_conjugate(fem::stiffness(mesh), mesh, tau * xi);
    SpMat Ms = scale_conjugate(fem::mass(mesh), mesh, tau * xi);
    std::vector<SpMatc> MVs(static_cast<std::size_t>(2 * V.M + 1));
    for (int m = -V.M; m <= V.M; ++m)
        MVs[static_cast<std::size_t>(m + V.M)] =
            scale_conjugate(fem::weighted_mass(mesh, V.mode_row(m)), mesh, tau * xi);

    fem::IndexSplit split(mesh);
    const int ni = static_cast<int>(split.interior.size());

    // boundary node classification against the cutoff coordinate (-xi).nu
    std::vector<int> constrained;          // boundary vertex ids
    std::vector<double> psi_of(static_cast<std::size_t>(nv), 0.0);
    for (std::size_t i = 0; i < mesh.boundary_vertices.size(); ++i) {
        std::size_t prev = (i + mesh.boundary.size() - 1) % mesh.boundary.size();
        Vec2 nu = (mesh.boundary[prev].normal + mesh.boundary[i].normal).normalized();
        double s = -xi.dot(nu);
        int b = mesh.boundary_vertices[i];
        if (opt.full_dirichlet || s > eps / 3.0) {
            constrained.push_back(b);
            psi_of[static_cast<std::size_t>(b)] = smoothstep5((s - eps / 3.0) / (eps / 2.0 - eps / 3.0));
        }
    }
    require(static_cast<int>(constrained.size()) < nb || opt.full_dirichlet,
            "cgo vanishing: constraint covers the whole boundary; eps too large");

    const int n_rows = W * ni + W * static_cast<int>(constrained.size());
    const int n_cols = W * nv;
    std::vector<Tripletc> ct;
    VecXc b = VecXc::Zero(n_rows);

    // interior equation rows in the scaled variable
    auto add_block = [&](int r, int c, const SpMatc& B) {
        for (int col = 0; col < B.outerSize(); ++col)
            for (SpMatc::InnerIterator it(B, col); it; ++it) {
                int ri = split.interior_of[static_cast<std::size_t>(it.row())];
                if (ri >= 0) ct.emplace_back(r * ni + ri, c * nv + col, it.value());
            }
    };
    SpMatc Ksc = Ks.cast<cplx>();
    for (int r = 0; r < W; ++r) {
        double beta = ctx.beta(ctx.mode(r));
        SpMatc diag = Ksc + cplx(beta * beta, 0.0) * Ms.cast<cplx>();
        add_block(r, r, diag);
        for (int c = 0; c < W; ++c) {
            int m = ctx.mode(r) - ctx.mode(c);
            if (std::abs(m) <= V.M) add_block(r, c, MVs[static_cast<std::size_t>(m + V.M)]);
        }
        // scaled right-hand side: -(mass) * [Vhat_{r - mode2} . phase2]
        int mrhs = ctx.mode(r) - p.mode2;
        if (std::abs(mrhs) <= V.M) {
            VecXc src = (-V.mode_row(mrhs).array() * phase2.array()).matrix();
            VecXc rhs = Ms.cast<cplx>() * src;
            for (int i = 0; i < ni; ++i) b[r * ni + i] = rhs[split.interior[static_cast<std::size_t>(i)]];
        }
    }

    // Dirichlet rows: scaled trace values are O(1) by the phase identity
    int drow = W * ni;
    for (int bidx : constrained) {
        for (int r = 0; r < W; ++r) {
            ct.emplace_back(drow, r * nv + bidx, cplx(1.0, 0.0));
            if (ctx.mode(r) == p.mode2)
                b[drow] = -psi_of[static_cast<std::size_t>(bidx)] * phase2[bidx];
            ++drow;
        }
    }
    SpMatc C(n_rows, n_cols);
    C.setFromTriplets(ct.begin(), ct.end());

    // diagonal objective: lumped mass per vertex, every mode
    VecX lm = fem::lumped_mass(mesh);
    VecX dinv(n_cols);
    for (int r = 0; r < W; ++r)
        for (int vv = 0; vv < nv; ++vv) dinv[r * nv + vv] = 1.0 / lm[vv];

    // normal equations (C Minv C^H) mu = b, then v = Minv C^H mu
    SpMatc S = C;  // S = C * diag(1/sqrt(m))
    for (int col = 0; col < S.outerSize(); ++col) {
        double f = std::sqrt(dinv[col]);
        for (SpMatc::InnerIterator it(S, col); it; ++it) it.valueRef() *= f;
    }
    SpMatc H = (S * SpMatc(S.adjoint())).pruned();
    VecXc vtil;
    double feas = 1.0;
    bool solved = false;
    {
        Eigen::SimplicialLDLT<SpMatc> ldlt(H);
        if (ldlt.info() == Eigen::Success) {
            VecXc mu = ldlt.solve(b);
            vtil = dinv.cast<cplx>().asDiagonal() * (C.adjoint() * mu);
            feas = (C * vtil - b).norm() / std::max(b.norm(), 1e-300);
            solved = feas <= opt.feas_tol;
        }
    }
    if (!solved) {
        // saddle-point fallback
        std::vector<Tripletc> kt;
        for (int i = 0; i < n_cols; ++i) kt.emplace_back(i, i, cplx(1.0 / dinv[i], 0.0));
        for (int col = 0; col < C.outerSize(); ++col)
            for (SpMatc::InnerIterator it(C, col); it; ++it) {
                kt.emplace_back(n_cols + static_cast<int>(it.row()), col, it.value());
                kt.emplace_back(col, n_cols + static_cast<int>(it.row()), std::conj(it.value()));
            }
        SpMatc Kkt(n_cols + n_rows, n_cols + n_rows);
        Kkt.setFromTriplets(kt.begin(), kt.end());
        Eigen::SparseLU<SpMatc> lu(Kkt);
        if (lu.info() != Eigen::Success)
            throw SolverError("cgo vanishing: saddle-point factorization failed; refine the mesh or widen the window");
        VecXc rhs = VecXc::Zero(n_cols + n_rows);
        rhs.tail(n_rows) = b;
        VecXc sol = lu.solve(rhs);
        vtil = sol.head(n_cols);
        feas = (C * vtil - b).norm() / std::max(b.norm(), 1e-300);
        if (feas > std::sqrt(opt.feas_tol))
            throw SolverError("cgo vanishing: constraints infeasible at the discrete level (defect " +
                              format_g17(feas) + "); refine the mesh or widen the window");
    }

    CGOSolution sol(p, CGOSolution::Kind::vanishing, ctx);
    sol.residual = feas;
    sol.iterations = 1;

    double obj = 0.0;
    for (int i = 0; i < n_cols; ++i) obj += std::norm(vtil[i]) / dinv[i];
    sol.weighted_l2 = std::sqrt(obj);

    // remainder v_zeta = e^{-zeta2 . x} v: pure phases times the scaled variable
    sol.remainder = CellField::zero(ctx, mesh);
    for (int j = 0; j <= ctx.n_axial; ++j) {
        double x1 = ctx.x1(j);
        for (int r = 0; r < W; ++r) {
            cplx ax = std::exp(cplx(0.0, 2.0 * pi * (ctx.mode(r) - p.mode2) * x1));
            for (int vv = 0; vv < nv; ++vv)
                sol.remainder.values(j, vv) += ax * std::conj(phase2[vv]) * vtil[r * nv + vv];
        }
    }
    SpMat M = fem::mass(mesh);
    double l2sq = 0.0;
    for (int r = 0; r < W; ++r) {
        VecXc col = vtil.segment(r * nv, nv);
        l2sq += (col.adjoint() * (M.cast<cplx>() * col)).real()(0, 0);
    }
    sol.remainder_l2 = std::sqrt(std::max(0.0, l2sq));

    // u = e^{zeta2 . x} + v
    sol.u_modes = MatXc::Zero(W, nv);
    for (int r = 0; r < W; ++r)
        for (int vv = 0; vv < nv; ++vv) {
            cplx val = expw[vv] * vtil[r * nv + vv];
            if (ctx.mode(r) == p.mode2) val += expw[vv] * phase2[vv];
            sol.u_modes(r, vv) = val;
        }

    double scale = 0.0, defect = 0.0;
    for (int bidx : mesh.boundary_vertices)
        for (int r = 0; r < W; ++r) scale = std::max(scale, std::abs(sol.u_modes(r, bidx)));
    for (int bidx : constrained)
        if (psi_of[static_cast<std::size_t>(bidx)] >= 1.0 - 1e-14)
            for (int r = 0; r < W; ++r) defect = std::max(defect, std::abs(sol.u_modes(r, bidx)));
    sol.trace_defect = scale > 0.0 ? defect / scale : 0.0;
    return sol;
}

// --- decay ladders -----------------------------------------------------------

DecayLadder decay_ladder(const Mesh& mesh, const PotentialField& V, int k, const Vec2& eta,
                         double theta, const std::vector<double>& taus, bool vanishing,
                         double eps, unsigned workers) {
    require(!taus.empty(), "decay_ladder: empty tau ladder");
    DecayLadder lad;
    lad.tau.resize(taus.size());
    lad.norm.resize(taus.size());
    lad.weighted.resize(taus.size());
    lad.residual.resize(taus.size());
    Vec2 u = eta / eta.norm();
    Vec2 probe(-u.y(), u.x());
    parallel_for(
        taus.size(),
        [&](std::size_t i) {
            CGOParams p = params_for_tau(k, eta, theta, taus[i], probe);
            CGOSolution s = vanishing ? solve_cgo_vanishing(mesh, V, p, eps)
                                      : solve_cgo_smooth(mesh, V, p);
            lad.tau[i] = p.tau;
            lad.norm[i] = s.remainder_l2;
            lad.weighted[i] = s.weighted_l2;
            lad.residual[i] = s.residual;
        },
        workers);
    std::vector<double> lx(taus.size()), ly(taus.size());
    for (std::size_t i = 0; i < taus.size(); ++i) {
        lx[i] = std::log(lad.tau[i]);
        ly[i] = std::log(std::max(lad.norm[i], 1e-300));
    }
    lad.slope = fit_slope(lx, ly);
    return lad;
}

}  // namespace cwg::cgo
