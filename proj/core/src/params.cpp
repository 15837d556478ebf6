#include <qforce/error.hpp>
#include <qforce/params.hpp>

#include <cmath>
#include <string>

namespace qforce {

void PhysicalParams::validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(mass))
        fail(ErrorKind::InvalidArgument, "mass must be positive and finite");
    if (!positive(hbar))
        fail(ErrorKind::InvalidArgument, "hbar must be positive and finite");
    if (!positive(tau))
        fail(ErrorKind::InvalidArgument, "tau must be positive and finite");
    if (!std::isfinite(omega) || omega < 0.0)
        fail(ErrorKind::InvalidArgument, "omega must be finite and >= 0");
}

PhysicalParams PhysicalParams::dimensionless(double omega_tau) {
    return PhysicalParams{.mass = 1.0, .omega = omega_tau, .hbar = 2.0, .tau = 1.0};
}

} // namespace qforce
