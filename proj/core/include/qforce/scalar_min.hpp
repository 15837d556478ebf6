// Golden-section minimization of a unimodal scalar function
#pragma once

#include <functional>

namespace qforce {

struct ScalarMinimum {
    double argmin;
    double value;
    int evaluations;
};

/**
 * @brief Golden-section search on [lo, hi] to rel_tol relative on the argument.
 *
 * Non-finite values are treated as +infinity. Throws Error(NoBracket) if the
 * minimum sits on an end of the interval (the function is not bracketed).
 */
ScalarMinimum minimize_scalar(const std::function<double(double)> &fn, double lo,
                              double hi, double rel_tol = 1e-8);

} // namespace qforce
