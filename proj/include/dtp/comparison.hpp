#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include "dtp/errors.hpp"

namespace dtp {

/// Piecewise-linear class K_infinity function through (r_0=0, v_0=0), ...,
/// (r_J, v_J), extended beyond r_J with the slope of the last segment.
class ComparisonFunction {
  public:
    ComparisonFunction() = default;

    ComparisonFunction(std::vector<double> r, std::vector<double> v) : r_(std::move(r)), v_(std::move(v)) {
        if (r_.size() != v_.size() || r_.size() < 2) throw DomainError("comparison function: need >= 2 breakpoints");
        if (r_.front() != 0.0 || v_.front() != 0.0) throw DomainError("comparison function must pass through (0,0)");
        for (std::size_t i = 1; i < r_.size(); ++i) {
            if (!(r_[i] > r_[i - 1]) || !(v_[i] > v_[i - 1]))
                throw DomainError("comparison function breakpoints must be strictly increasing");
        }
    }

    [[nodiscard]] bool empty() const { return r_.empty(); }
    [[nodiscard]] const std::vector<double>& radii() const { return r_; }
    [[nodiscard]] const std::vector<double>& values() const { return v_; }

    [[nodiscard]] double operator()(double r) const {
        if (empty()) throw DomainError("comparison function is empty");
        if (r <= 0.0) return 0.0;
        const std::size_t J = r_.size() - 1;
        if (r >= r_[J]) return v_[J] + slope(J) * (r - r_[J]);
        const std::size_t i =
            static_cast<std::size_t>(std::upper_bound(r_.begin(), r_.end(), r) - r_.begin()) - 1;
        const double t = (r - r_[i]) / (r_[i + 1] - r_[i]);
        return v_[i] + t * (v_[i + 1] - v_[i]);
    }

    /// gamma^{-1}(target) by bisection on the monotone function.
    [[nodiscard]] double inverse(double target) const {
        if (empty()) throw DomainError("comparison function is empty");
        if (!std::isfinite(target) || target < 0.0) throw RangeError("comparison inverse: target outside [0, inf)");
        if (target == 0.0) return 0.0;
        double lo = 0.0;
        double hi = r_.back();
        int guard = 0;
        while ((*this)(hi) < target) {
            hi *= 2.0;
            if (++guard > 2000) throw RangeError("comparison inverse: target above the function's range");
        }
        for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++k) {
            const double mid = 0.5 * (lo + hi);
            if ((*this)(mid) < target) lo = mid;
            else hi = mid;
        }
        return 0.5 * (lo + hi);
    }

  private:
    [[nodiscard]] double slope(std::size_t J) const { return (v_[J] - v_[J - 1]) / (r_[J] - r_[J - 1]); }

    std::vector<double> r_;
    std::vector<double> v_;
};

struct ComparisonSample {
    double r = 0.0;
    double v = 0.0;
};

namespace detail {

/// Radii > 0 grouped within 1e-9 of the largest radius, with the per-group
/// min (lower) or max (upper) value. A lower fit represents a group by its
/// largest radius and an upper fit by its smallest, so monotonicity keeps the
/// bound valid for every member.
inline std::pair<std::vector<double>, std::vector<double>> group_samples(std::vector<ComparisonSample> samples,
                                                                         bool lower) {
    std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.r < b.r; });
    std::vector<double> r;
    std::vector<double> v;
    const double merge = samples.empty() ? 0.0 : 1e-9 * samples.back().r;
    double group_start = -1.0;
    for (const auto& s : samples) {
        if (!(s.r > 0.0)) continue;
        if (!r.empty() && s.r - group_start <= merge) {
            v.back() = lower ? std::min(v.back(), s.v) : std::max(v.back(), s.v);
            if (lower) r.back() = s.r;
        } else {
            group_start = s.r;
            r.push_back(s.r);
            v.push_back(s.v);
        }
    }
    return {std::move(r), std::move(v)};
}

}  // namespace detail

/// Largest-ish strictly increasing comparison function below every sample.
///
/// The envelope E(r) = min{ v_i : r_i >= r } is nondecreasing; flat stretches
/// are made strictly increasing by lowering values from the right with slope
/// eps = 1e-3 * (smallest envelope value) / (largest radius). Strictly
/// increasing envelopes with gaps above that slope are returned unchanged.
inline ComparisonFunction fit_comparison_lower(const std::vector<ComparisonSample>& samples) {
    for (const auto& s : samples) {
        if (!std::isfinite(s.v) || s.v < 0.0) {
            std::ostringstream os;
            os << "sample (" << s.r << ", " << s.v << ") is negative: not positive definite";
            throw NotPositiveDefinite(os.str());
        }
        if (s.r > 0.0 && s.v == 0.0) {
            std::ostringstream os;
            os << "sample vanishes at deviation " << s.r << ": not positive definite";
            throw NotPositiveDefinite(os.str());
        }
    }
    auto [r, v] = detail::group_samples(samples, true);
    if (r.empty()) throw DomainError("fit_comparison_lower: no samples with positive deviation");
    const std::size_t J = r.size();
    std::vector<double> env(J);
    env[J - 1] = v[J - 1];
    for (std::size_t i = J - 1; i-- > 0;) env[i] = std::min(v[i], env[i + 1]);
    const double eps = 1e-3 * env.front() / r.back();
    std::vector<double> a(J);
    a[J - 1] = env[J - 1];
    for (std::size_t i = J - 1; i-- > 0;) {
        a[i] = std::min({env[i], a[i + 1] - eps * (r[i + 1] - r[i]), std::nextafter(a[i + 1], 0.0)});
    }
    std::vector<double> rr{0.0};
    std::vector<double> vv{0.0};
    rr.insert(rr.end(), r.begin(), r.end());
    vv.insert(vv.end(), a.begin(), a.end());
    return {std::move(rr), std::move(vv)};
}

/// Smallest-ish strictly increasing comparison function above every sample
/// (mirror image of fit_comparison_lower).
inline ComparisonFunction fit_comparison_upper(const std::vector<ComparisonSample>& samples) {
    for (const auto& s : samples) {
        if (!std::isfinite(s.v) || s.v < 0.0) throw NotPositiveDefinite("fit_comparison_upper: negative sample");
        if (s.r <= 0.0 && s.v > 0.0) throw NotPositiveDefinite("fit_comparison_upper: positive value at zero deviation");
    }
    auto [r, v] = detail::group_samples(samples, false);
    if (r.empty()) throw DomainError("fit_comparison_upper: no samples with positive deviation");
    const std::size_t J = r.size();
    std::vector<double> env(J);
    env[0] = v[0];
    for (std::size_t i = 1; i < J; ++i) env[i] = std::max(v[i], env[i - 1]);
    double scale = env.back() > 0.0 ? env.back() : 1.0;
    for (double e : env) {
        if (e > 0.0) {
            scale = std::min(scale, e);
            break;
        }
    }
    const double eps = 1e-3 * scale / r.back();
    std::vector<double> g(J);
    g[0] = std::max(env[0], eps * r[0]);
    for (std::size_t i = 1; i < J; ++i) {
        g[i] = std::max({env[i], g[i - 1] + eps * (r[i] - r[i - 1]), std::nextafter(g[i - 1], std::numeric_limits<double>::infinity())});
    }
    std::vector<double> rr{0.0};
    std::vector<double> vv{0.0};
    rr.insert(rr.end(), r.begin(), r.end());
    vv.insert(vv.end(), g.begin(), g.end());
    return {std::move(rr), std::move(vv)};
}

}  // namespace dtp
