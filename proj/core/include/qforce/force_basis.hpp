// Time shape f(s) of the unknown force, s = t / tau in [0, 1]
#pragma once

#include <string>
#include <vector>

namespace qforce {

/**
 * @brief Dimensionless time shape multiplying the unknown weight theta.
 *
 * Shapes are evaluated on normalized time s = t/tau so one basis serves both
 * the physical and the rescaled model. A kick is delta(t - t1)*tau realized as
 * a rectangular pulse of width w (default 1e-3) and height 1/w in s.
 */
class ForceBasis {
  public:
    enum class Kind { Zero, Constant, Kick, Step, Sinusoid, Table };

    ForceBasis();

    static ForceBasis zero();
    static ForceBasis constant();
    static ForceBasis kick(double center, double width = 1e-3);
    /// Heaviside step u(s - onset).
    static ForceBasis step(double onset);
    /// sin(frequency * s + phase), frequency in radians per unit s.
    static ForceBasis sinusoid(double frequency, double phase = 0.0);
    /// Piecewise-linear interpolation, held constant outside the samples.
    static ForceBasis table(std::vector<double> s, std::vector<double> values);

    double operator()(double s) const;

    Kind kind() const { return kind_; }
    std::string name() const;
    /// True when f does not depend on time (Zero, Constant).
    bool time_invariant() const;

    double center() const { return a_; }
    double width() const { return b_; }
    double onset() const { return a_; }
    double frequency() const { return a_; }
    double phase() const { return b_; }
    const std::vector<double> &table_s() const { return s_; }
    const std::vector<double> &table_values() const { return v_; }

  private:
    Kind kind_;
    double a_ = 0.0;
    double b_ = 0.0;
    std::vector<double> s_;
    std::vector<double> v_;
};

} // namespace qforce
