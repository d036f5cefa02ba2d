#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <type_traits>
#include <sstream>
#include <string>
#include <utility>
#include <variant>

#include "dtp/errors.hpp"
#include "dtp/grid.hpp"
#include "dtp/vec.hpp"

namespace dtp {

using DynamicsFn = std::function<Vec(const Vec&, const Vec&)>;
using StageCostFn = std::function<double(const Vec&, const Vec&)>;
using JointConstraintFn = std::function<bool(const Vec&, const Vec&)>;

/// Images f(x,u) are accepted as elements of X up to this absolute slack,
/// scaled by the box magnitude. Rounding in f must not exclude pairs that map
/// exactly onto the boundary.
inline constexpr double kImageSlack = 1e-12;

/// Discrete-time control system x+ = f(x,u) with stage cost and constraints.
struct ControlSystem {
    DynamicsFn dynamics;
    StageCostFn stage_cost;
    Box state_box;
    Box control_box;
    /// Extra restriction of X x U; empty means the product box.
    JointConstraintFn joint_constraint;
    /// Weight of a gamma * sum_j |u_j| term contained in stage_cost.
    double abs_control_weight = 0.0;

    [[nodiscard]] std::size_t state_dim() const { return state_box.dim(); }
    [[nodiscard]] std::size_t control_dim() const { return control_box.dim(); }

    [[nodiscard]] Vec f(const Vec& x, const Vec& u) const { return dynamics(x, u); }
    [[nodiscard]] double cost(const Vec& x, const Vec& u) const { return stage_cost(x, u); }

    [[nodiscard]] bool in_state_box(const Vec& x) const {
        double scale = 1.0;
        for (std::size_t i = 0; i < state_box.dim(); ++i)
            scale = std::max({scale, std::abs(state_box[i].lo), std::abs(state_box[i].hi)});
        return state_box.contains(x, kImageSlack * scale);
    }

    /// (x,u) in Y.
    [[nodiscard]] bool in_joint(const Vec& x, const Vec& u) const {
        if (!state_box.contains(x) || !control_box.contains(u)) return false;
        return !joint_constraint || joint_constraint(x, u);
    }
};

/// True iff (x,u) in Y and f(x,u) in X.
inline bool check_admissible(const ControlSystem& system, const Vec& x, const Vec& u) {
    return system.in_joint(x, u) && system.in_state_box(system.f(x, u));
}

struct DiscountedProblem {
    ControlSystem system;
    double beta = 0.5;

    DiscountedProblem() = default;
    DiscountedProblem(ControlSystem sys, double discount) : system(std::move(sys)), beta(discount) {
        if (!(beta > 0.0 && beta < 1.0)) throw DomainError("discount factor must lie in (0,1)");
    }
};

inline constexpr double kDefaultEquilibriumTol = 1e-8;

/// Equilibrium (x, u) with f(x,u) = x up to `residual`.
struct Equilibrium {
    Vec x;
    Vec u;
    double beta = 0.0;
    double stage_cost_value = 0.0;
    double residual = 0.0;
    /// False when the Newton refinement did not converge.
    bool refined = true;
};

/// Builds an Equilibrium, checking the fixed-point residual and admissibility.
inline Equilibrium make_equilibrium(const ControlSystem& system, double beta, const Vec& x, const Vec& u,
                                    double tol = kDefaultEquilibriumTol) {
    if (!system.in_joint(x, u)) throw ConstraintViolation("equilibrium pair is not in Y");
    Equilibrium eq{x, u, beta, system.cost(x, u), distance(system.f(x, u), x), true};
    if (!(eq.residual <= tol)) {
        std::ostringstream os;
        os << "not an equilibrium: |f(x,u) - x| = " << eq.residual << " exceeds " << tol;
        throw DomainError(os.str());
    }
    return eq;
}

/// Storage function lambda: X -> R with lambda(anchor) = 0.
class StorageFunction {
  public:
    struct Linear {
        Vec nu;
        Vec anchor;
    };
    struct QuadraticDiagonal {
        Vec coefficients;
        Vec anchor;
    };
    struct Tabulated {
        GriddedValueFunction table;
        Vec anchor;
        double offset = 0.0;
    };
    using Form = std::variant<Linear, QuadraticDiagonal, Tabulated>;

    /// lambda(x) = nu . (x - anchor)
    static StorageFunction linear(Vec nu, Vec anchor, const Box& domain) {
        if (nu.size() != anchor.size()) throw std::invalid_argument("storage: nu/anchor dimension mismatch");
        double lb = 0.0;
        for (std::size_t i = 0; i < nu.size(); ++i) {
            lb += std::min(nu[i] * (domain[i].lo - anchor[i]), nu[i] * (domain[i].hi - anchor[i]));
        }
        return StorageFunction(Linear{std::move(nu), std::move(anchor)}, lb);
    }

    /// lambda(x) = sum_i c_i (x_i - anchor_i)^2
    static StorageFunction quadratic_diagonal(Vec coefficients, Vec anchor, const Box& domain) {
        if (coefficients.size() != anchor.size()) throw std::invalid_argument("storage: coefficient/anchor dimension mismatch");
        double lb = 0.0;
        for (std::size_t i = 0; i < coefficients.size(); ++i) {
            const double c = coefficients[i];
            const double dlo = domain[i].lo - anchor[i];
            const double dhi = domain[i].hi - anchor[i];
            if (c >= 0.0) {
                const double d = (dlo <= 0.0 && dhi >= 0.0) ? 0.0 : std::min(std::abs(dlo), std::abs(dhi));
                lb += c * d * d;
            } else {
                const double d = std::max(std::abs(dlo), std::abs(dhi));
                lb += c * d * d;
            }
        }
        return StorageFunction(QuadraticDiagonal{std::move(coefficients), std::move(anchor)}, lb);
    }

    /// Interpolated table shifted so that the value at `anchor` is exactly 0.
    static StorageFunction tabulated(GriddedValueFunction table, Vec anchor) {
        const double offset = table(anchor);
        double lb = std::numeric_limits<double>::infinity();
        for (double v : table.values) lb = std::min(lb, v - offset);
        return StorageFunction(Tabulated{std::move(table), std::move(anchor), offset}, lb);
    }

    static StorageFunction zero(const Vec& anchor) {
        return StorageFunction(Linear{Vec(anchor.size(), 0.0), anchor}, 0.0);
    }

    [[nodiscard]] double operator()(const Vec& x) const {
        return std::visit(
            [&](const auto& form) -> double {
                using T = std::decay_t<decltype(form)>;
                if constexpr (std::is_same_v<T, Linear>) {
                    return form.nu.dot(x - form.anchor);
                } else if constexpr (std::is_same_v<T, QuadraticDiagonal>) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        const double d = x[i] - form.anchor[i];
                        s += form.coefficients[i] * d * d;
                    }
                    return s;
                } else {
                    return form.table(x) - form.offset;
                }
            },
            form_);
    }

    [[nodiscard]] const Form& form() const { return form_; }
    [[nodiscard]] double lower_bound() const { return lower_bound_; }

    [[nodiscard]] const Vec& anchor() const {
        return std::visit([](const auto& f) -> const Vec& { return f.anchor; }, form_);
    }

    /// nu for linear storage, empty otherwise.
    [[nodiscard]] Vec linear_coefficients() const {
        if (const auto* l = std::get_if<Linear>(&form_)) return l->nu;
        return {};
    }

    [[nodiscard]] std::string describe() const {
        std::ostringstream os;
        std::visit(
            [&](const auto& f) {
                using T = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<T, Linear>) os << "linear nu=" << f.nu << " anchor=" << f.anchor;
                else if constexpr (std::is_same_v<T, QuadraticDiagonal>) os << "quadratic c=" << f.coefficients << " anchor=" << f.anchor;
                else os << "tabulated anchor=" << f.anchor;
            },
            form_);
        return os.str();
    }

  private:
    StorageFunction(Form form, double lb) : form_(std::move(form)), lower_bound_(lb) {}

    Form form_;
    double lower_bound_ = 0.0;
};

/// Equilibrium and storage defining the rotated stage cost.
struct Rotation {
    Equilibrium eq;
    StorageFunction storage;
};

/// l(x,u) - l(x^b,u^b) + lambda(x) - beta*lambda(f(x,u)) without admissibility checks.
inline double rotated_cost_unchecked(const DiscountedProblem& problem, const Rotation& rot, const Vec& x,
                                     const Vec& u) {
    const Vec next = problem.system.f(x, u);
    return problem.system.cost(x, u) - rot.eq.stage_cost_value + rot.storage(x) - problem.beta * rot.storage(next);
}

/// Rotated stage cost; throws if (x,u) is not admissible.
inline double evaluate_rotated_cost(const DiscountedProblem& problem, const Equilibrium& eq,
                                    const StorageFunction& storage, const Vec& x, const Vec& u) {
    const auto& sys = problem.system;
    if (!sys.in_joint(x, u)) throw ConstraintViolation("rotated cost: (x,u) is not in Y");
    const Vec next = sys.f(x, u);
    if (!sys.in_state_box(next)) throw ImageOutOfDomain("rotated cost: f(x,u) leaves the state box");
    return sys.cost(x, u) - eq.stage_cost_value + storage(x) - problem.beta * storage(next);
}

/// Stage cost seen by the optimizer: original l, or the rotated cost when a rotation is set.
struct CostSelector {
    std::optional<Rotation> rotation;

    [[nodiscard]] CostKind kind() const { return rotation ? CostKind::rotated : CostKind::original; }

    [[nodiscard]] double operator()(const DiscountedProblem& problem, const Vec& x, const Vec& u) const {
        return rotation ? rotated_cost_unchecked(problem, *rotation, x, u) : problem.system.cost(x, u);
    }
};

}  // namespace dtp
