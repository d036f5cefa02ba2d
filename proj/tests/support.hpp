#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dtp/model.hpp"
#include "dtp/model_spec.hpp"

namespace dtp::test {

/// Seeded source of random test cases.
class Gen {
  public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

    Vec point(const Box& box) {
        Vec x(box.dim());
        for (std::size_t i = 0; i < box.dim(); ++i) x[i] = uniform(box[i].lo, box[i].hi);
        return x;
    }

    std::vector<double> table(std::size_t n, double lo, double hi) {
        std::vector<double> v(n);
        for (auto& e : v) e = uniform(lo, hi);
        return v;
    }

  private:
    std::mt19937_64 rng_;
};

inline ControlSystem scalar_system(DynamicsFn f, StageCostFn l, Interval X, Interval U) {
    ControlSystem s;
    s.dynamics = std::move(f);
    s.stage_cost = std::move(l);
    s.state_box = Box{X};
    s.control_box = Box{U};
    return s;
}

inline ControlSystem example(int id, double gamma = 0.0) { return expand_model_spec(ModelSpec::builtin(id, gamma)); }

/// Closed-form stationary points of x^4 - x^3/4 - 7x^2/4.
inline double x_local() { return (3.0 - std::sqrt(905.0)) / 32.0; }
inline double x_global() { return (3.0 + std::sqrt(905.0)) / 32.0; }

inline double ell1(double x) { return x * x * x * x - 0.25 * x * x * x - 1.75 * x * x; }

}  // namespace dtp::test
