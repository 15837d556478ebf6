#include <qforce/error.hpp>
#include <qforce/scalar_min.hpp>

#include <cmath>
#include <limits>

namespace qforce {

ScalarMinimum minimize_scalar(const std::function<double(double)> &fn, double lo,
                              double hi, double rel_tol) {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
        fail(ErrorKind::InvalidArgument, "minimize_scalar needs a finite interval lo < hi");
    auto f = [&](double x) {
        const double v = fn(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    const double a0 = lo, b0 = hi;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    int evals = 2;
    const double abs_floor = 1e-300;
    while (b - a > rel_tol * std::max(std::abs(0.5 * (a + b)), abs_floor)) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        ++evals;
        if (evals > 10000)
            break;
    }
    const double x = 0.5 * (a + b);
    const double fx = f(x);
    ++evals;
    // The search collapses onto an end point when the function is monotone.
    const double edge_tol = 10.0 * rel_tol * std::max(std::abs(x), abs_floor) + 1e-12 * (b0 - a0);
    if (x - a0 <= edge_tol || b0 - x <= edge_tol)
        fail(ErrorKind::NoBracket, "minimum lies on the bracket boundary");
    if (!std::isfinite(fx))
        fail(ErrorKind::NoBracket, "function is not finite anywhere near the minimum");
    return ScalarMinimum{x, fx, evals};
}

} // namespace qforce
