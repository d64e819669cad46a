// Shared aliases, error types and small utilities used across the toolkit.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <atomic>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cwg {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using VecX = Eigen::VectorXd;
using VecXc = Eigen::VectorXcd;
using MatX = Eigen::MatrixXd;
using MatXc = Eigen::MatrixXcd;
using SpMat = Eigen::SparseMatrix<double>;
using SpMatc = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<double>;
using Tripletc = Eigen::Triplet<cplx>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx iu{0.0, 1.0};

// Input that violates a documented precondition.  CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Iterative or direct solver failure (non-convergence, singular factorization).
// CLI maps this to exit code 4.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A numerical invariant checked at runtime failed.  CLI maps this to exit code 3.
struct InvariantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

// C2 quintic ramp: 0 for t<=0, 1 for t>=1.
inline double smoothstep5(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

// FNV-1a, used to fingerprint meshes and configs in file headers.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

// Deterministic worker pool over [0,n).  Tasks must be independent; results are
// written into preallocated slots so the output order never depends on timing.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned workers = 0) {
    if (workers == 0) {
        unsigned hc = std::thread::hardware_concurrency();
        workers = hc == 0 ? 1u : (hc > 8u ? 8u : hc);
    }
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    pool.reserve(spawn);
    for (unsigned t = 0; t < spawn; ++t) pool.emplace_back(run);
    for (auto& th : pool) th.join();
}

// Least-squares slope of y against x; used for the decay-law fits.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("fit_slope: need >=2 samples");
    double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double den = n * sxx - sx * sx;
    if (den == 0.0) throw ValidationError("fit_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / den;
}

std::string format_g17(double v);

}  // namespace cwg
