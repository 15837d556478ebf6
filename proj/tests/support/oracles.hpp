// Independent reference computations used only by the tests
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

using Complex = std::complex<double>;

/// Fine-step RK4 of d sigma/dt = (i hbar/m)(1 - m^2 w^2 s^2/hbar^2) - k s^2.
inline Complex sigma_rk4(double hbar, double m, double omega, double k, Complex s0,
                         double t, int n) {
    const Complex I(0.0, 1.0);
    auto rate = [&](Complex s) {
        return I * hbar / m * (1.0 - m * m * omega * omega * s * s / (hbar * hbar)) -
               k * s * s;
    };
    const double h = t / n;
    Complex s = s0;
    for (int i = 0; i < n; ++i) {
        const Complex k1 = rate(s);
        const Complex k2 = rate(s + 0.5 * h * k1);
        const Complex k3 = rate(s + 0.5 * h * k2);
        const Complex k4 = rate(s + h * k3);
        s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return s;
}

/// Fine-step RK4 of dP/dt = AP + PA^T - 2k P C^T C P + 2k B B^T, with
/// A = [[0,1/m,0],[-m w^2,0,f],[0,0,0]], B = (0, hbar/2, 0), C = (1,0,0).
inline Eigen::Matrix3d riccati_rk4(const Eigen::Matrix3d &P0, double m, double omega,
                                   double hbar, double f, double k, double t, int n) {
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    A(0, 1) = 1.0 / m;
    A(1, 0) = -m * omega * omega;
    A(1, 2) = f;
    Eigen::Matrix3d Q = Eigen::Matrix3d::Zero();
    Q(1, 1) = 2.0 * k * (hbar / 2.0) * (hbar / 2.0);
    auto rate = [&](const Eigen::Matrix3d &P) -> Eigen::Matrix3d {
        Eigen::Matrix3d PC = Eigen::Matrix3d::Zero();
        PC.col(0) = P.col(0);
        return A * P + P * A.transpose() - 2.0 * k * PC * PC.transpose() + Q;
    };
    const double h = t / n;
    Eigen::Matrix3d P = P0;
    for (int i = 0; i < n; ++i) {
        const Eigen::Matrix3d k1 = rate(P);
        const Eigen::Matrix3d k2 = rate(P + 0.5 * h * k1);
        const Eigen::Matrix3d k3 = rate(P + 0.5 * h * k2);
        const Eigen::Matrix3d k4 = rate(P + h * k3);
        P += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return P;
}

/// Closed-loop poles of the steadily monitored rescaled oscillator, from the
/// eigenvalues of A - 2k P C^T C with the steady (x, p) covariance.
inline std::pair<double, double> closed_loop_poles(double omega_tau, double k) {
    // Steady rescaled covariance from the algebraic Riccati equation
    // (m = 1, hbar = 2): 2P12 = 2k P11^2, P22 - w^2 P11 = 2k P11 P12, 2w^2 P12 = 2k - 2k P12^2
    const double w2 = omega_tau * omega_tau;
    const double P12 = (-w2 + std::sqrt(w2 * w2 + 4.0 * k * k)) / (2.0 * k);
    const double P11 = std::sqrt(P12 / k);
    Eigen::Matrix2d M;
    M << -2.0 * k * P11, 1.0, -w2 - 2.0 * k * P12, 0.0;
    const Eigen::EigenSolver<Eigen::Matrix2d> es(M);
    const auto ev = es.eigenvalues();
    return {-ev(0).real(), std::abs(ev(0).imag())};
}

/// O(n^2) double trapezoid of 1/sigma = 2k int_0^1 (int_0^t g(t-t') f(t') dt')^2 dt.
inline double blasa_naive(double k, const std::function<double(double)> &f, double a,
                          double b, int n) {
    const double h = 1.0 / n;
    std::vector<double> fv(n + 1), gv(n + 1);
    for (int i = 0; i <= n; ++i) {
        fv[i] = f(i * h);
        gv[i] = std::exp(-a * i * h) * std::sin(b * i * h) / b;
    }
    std::vector<double> inner(n + 1, 0.0);
    for (int i = 1; i <= n; ++i) {
        double s = 0.5 * (gv[i] * fv[0] + gv[0] * fv[i]);
        for (int j = 1; j < i; ++j)
            s += gv[i - j] * fv[j];
        inner[i] = s * h;
    }
    double outer = 0.5 * (inner[0] * inner[0] + inner[n] * inner[n]);
    for (int i = 1; i < n; ++i)
        outer += inner[i] * inner[i];
    outer *= h;
    const double inv = 2.0 * k * outer;
    return inv > 0.0 ? 1.0 / inv : std::numeric_limits<double>::infinity();
}

/// Dense scan (log-spaced if requested) then successive local refinement.
inline std::pair<double, double> scan_min(const std::function<double(double)> &fn,
                                          double lo, double hi, int n = 2000,
                                          bool log_spaced = false) {
    auto at = [&](double u) {
        return log_spaced ? std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)))
                          : lo + u * (hi - lo);
    };
    double best_u = 0.0, best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        const double u = static_cast<double>(i) / n;
        const double v = fn(at(u));
        if (std::isfinite(v) && v < best) {
            best = v;
            best_u = u;
        }
    }
    double width = 1.0 / n;
    for (int round = 0; round < 40; ++round) {
        const double a = std::max(0.0, best_u - width), b = std::min(1.0, best_u + width);
        for (int i = 0; i <= 20; ++i) {
            const double u = a + (b - a) * i / 20.0;
            const double v = fn(at(u));
            if (std::isfinite(v) && v < best) {
                best = v;
                best_u = u;
            }
        }
        width /= 10.0;
        if (width < 1e-15)
            break;
    }
    return {at(best_u), best};
}

/// Coarse-to-fine grid search of a 2D function over a box.
inline std::pair<std::pair<double, double>, double>
grid_min_2d(const std::function<double(double, double)> &fn, double x0, double x1,
            double y0, double y1, int n = 200, int rounds = 30) {
    double bx = x0, by = y0, best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < rounds; ++r) {
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n; ++j) {
                const double x = x0 + (x1 - x0) * i / n, y = y0 + (y1 - y0) * j / n;
                const double v = fn(x, y);
                if (v < best) {
                    best = v;
                    bx = x;
                    by = y;
                }
            }
        const double wx = 4.0 * (x1 - x0) / n, wy = 4.0 * (y1 - y0) / n;
        const double lx = x0, ly = y0;
        x0 = std::max(lx, bx - wx);
        x1 = bx + wx;
        y0 = std::max(ly, by - wy);
        y1 = by + wy;
    }
    return {{bx, by}, best};
}

struct SampleStats {
    double mean;
    double variance; ///< unbiased
};

inline SampleStats sample_stats(const std::vector<double> &v) {
    double m = 0.0;
    for (double x : v)
        m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return {m, s / static_cast<double>(v.size() - 1)};
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace oracle
