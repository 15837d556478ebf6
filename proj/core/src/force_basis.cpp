#include <qforce/error.hpp>
#include <qforce/force_basis.hpp>

#include <algorithm>
#include <cmath>

namespace qforce {

ForceBasis::ForceBasis() : kind_(Kind::Constant) {}

ForceBasis ForceBasis::zero() {
    ForceBasis f;
    f.kind_ = Kind::Zero;
    return f;
}

ForceBasis ForceBasis::constant() { return ForceBasis(); }

ForceBasis ForceBasis::kick(double center, double width) {
    if (!(width > 0.0) || !std::isfinite(width))
        fail(ErrorKind::InvalidArgument, "kick width must be positive");
    if (!(center >= 0.0 && center <= 1.0))
        fail(ErrorKind::InvalidArgument, "kick center must lie in [0, 1]");
    ForceBasis f;
    f.kind_ = Kind::Kick;
    f.a_ = center;
    f.b_ = width;
    return f;
}

ForceBasis ForceBasis::step(double onset) {
    if (!std::isfinite(onset))
        fail(ErrorKind::InvalidArgument, "step onset must be finite");
    ForceBasis f;
    f.kind_ = Kind::Step;
    f.a_ = onset;
    return f;
}

ForceBasis ForceBasis::sinusoid(double frequency, double phase) {
    if (!std::isfinite(frequency) || !std::isfinite(phase))
        fail(ErrorKind::InvalidArgument, "sinusoid parameters must be finite");
    ForceBasis f;
    f.kind_ = Kind::Sinusoid;
    f.a_ = frequency;
    f.b_ = phase;
    return f;
}

ForceBasis ForceBasis::table(std::vector<double> s, std::vector<double> values) {
    if (s.size() < 2 || s.size() != values.size())
        fail(ErrorKind::InvalidArgument,
             "table basis needs >= 2 samples of equal length");
    for (std::size_t i = 1; i < s.size(); ++i)
        if (!(s[i] > s[i - 1]))
            fail(ErrorKind::InvalidArgument,
                 "table abscissae must be strictly increasing");
    for (double v : values)
        if (!std::isfinite(v))
            fail(ErrorKind::InvalidArgument, "table values must be finite");
    ForceBasis f;
    f.kind_ = Kind::Table;
    f.s_ = std::move(s);
    f.v_ = std::move(values);
    return f;
}

double ForceBasis::operator()(double s) const {
    switch (kind_) {
    case Kind::Zero:
        return 0.0;
    case Kind::Constant:
        return 1.0;
    case Kind::Kick:
        return (s >= a_ - 0.5 * b_ && s < a_ + 0.5 * b_) ? 1.0 / b_ : 0.0;
    case Kind::Step:
        return s >= a_ ? 1.0 : 0.0;
    case Kind::Sinusoid:
        return std::sin(a_ * s + b_);
    case Kind::Table: {
        if (s <= s_.front())
            return v_.front();
        if (s >= s_.back())
            return v_.back();
        auto it = std::upper_bound(s_.begin(), s_.end(), s);
        std::size_t i = static_cast<std::size_t>(it - s_.begin());
        double w = (s - s_[i - 1]) / (s_[i] - s_[i - 1]);
        return (1.0 - w) * v_[i - 1] + w * v_[i];
    }
    }
    return 0.0;
}

std::string ForceBasis::name() const {
    switch (kind_) {
    case Kind::Zero:
        return "zero";
    case Kind::Constant:
        return "constant";
    case Kind::Kick:
        return "kick";
    case Kind::Step:
        return "step";
    case Kind::Sinusoid:
        return "sinusoid";
    case Kind::Table:
        return "table";
    }
    return "unknown";
}

bool ForceBasis::time_invariant() const {
    return kind_ == Kind::Zero || kind_ == Kind::Constant;
}

} // namespace qforce
