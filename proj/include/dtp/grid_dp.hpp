#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dtp/errors.hpp"
#include "dtp/grid.hpp"
#include "dtp/model.hpp"
#include "dtp/parallel.hpp"

namespace dtp {

inline constexpr std::size_t kNoControl = static_cast<std::size_t>(-1);

struct NodeArgmin {
    std::size_t control = kNoControl;
    double value = kInf;
    /// Second smallest value over the control grid (kInf if unique control).
    double runner_up = kInf;
};

/// Discrete Bellman operator
///   (T V)(x_i) = min_{u_j admissible} cost(x_i,u_j) + beta * Interp(V)(f(x_i,u_j))
/// on a fixed pair of grids. Costs and successor locations of every
/// (node, control) pair are computed once at construction.
class BellmanOperator {
  public:
    /// Upper bound on the number of cached (state node, control node) pairs.
    static constexpr std::size_t kDefaultPairBudget = 60'000'000;

    BellmanOperator(DiscountedProblem problem, Grid state_grid, Grid control_grid, CostSelector cost = {},
                    std::size_t pair_budget = kDefaultPairBudget)
        : problem_(std::move(problem)),
          states_(std::move(state_grid)),
          controls_(std::move(control_grid)),
          cost_(std::move(cost)) {
        const auto& sys = problem_.system;
        if (states_.dim() != sys.state_dim()) throw std::invalid_argument("state grid dimension mismatch");
        if (controls_.dim() != sys.control_dim()) throw std::invalid_argument("control grid dimension mismatch");
        if (!sys.state_box.contains_box(states_.box()) || !states_.box().contains_box(sys.state_box))
            throw std::invalid_argument("state grid must span the state box");
        if (!sys.control_box.contains_box(controls_.box()))
            throw std::invalid_argument("control grid nodes must lie in the control box");

        const double pairs = static_cast<double>(states_.size()) * static_cast<double>(controls_.size());
        if (pairs > static_cast<double>(pair_budget)) {
            std::ostringstream os;
            os << "transition table needs " << pairs << " pairs, budget is " << pair_budget;
            throw GuardExceeded(os.str(), pairs);
        }
        const std::size_t nu = controls_.size();
        const std::size_t n = states_.dim();
        pair_cost_.assign(states_.size() * nu, kInf);
        pair_base_.assign(states_.size() * nu, 0);
        pair_t_.assign(states_.size() * nu * n, 0.0);

        std::vector<Vec> control_nodes(nu);
        for (std::size_t j = 0; j < nu; ++j) control_nodes[j] = controls_.node(j);

        parallel_for(states_.size(), [&](std::size_t i) {
            const Vec x = states_.node(i);
            for (std::size_t j = 0; j < nu; ++j) {
                const Vec& u = control_nodes[j];
                if (!sys.in_joint(x, u)) continue;
                const Vec next = sys.f(x, u);
                if (!sys.in_state_box(next)) continue;
                const std::size_t p = i * nu + j;
                pair_cost_[p] = cost_(problem_, x, u);
                const CellLocation loc = locate(states_, next);
                pair_base_[p] = loc.base;
                for (std::size_t a = 0; a < n; ++a) pair_t_[p * n + a] = loc.t[a];
            }
        }, 64);

        for (std::size_t i = 0; i < states_.size(); ++i) {
            const auto first = pair_cost_.begin() + static_cast<std::ptrdiff_t>(i * nu);
            if (std::none_of(first, first + static_cast<std::ptrdiff_t>(nu), [](double c) { return c < kInf; })) {
                std::ostringstream os;
                os << "state node " << i << " at " << states_.node(i) << " has no admissible control on the control grid";
                throw InfeasibleNode(os.str(), i);
            }
        }
    }

    [[nodiscard]] const DiscountedProblem& problem() const { return problem_; }
    [[nodiscard]] const Grid& state_grid() const { return states_; }
    [[nodiscard]] const Grid& control_grid() const { return controls_; }
    [[nodiscard]] const CostSelector& cost() const { return cost_; }
    [[nodiscard]] double beta() const { return problem_.beta; }

    /// Cached cost of the pair (node, control); kInf if inadmissible.
    [[nodiscard]] double pair_cost(std::size_t node, std::size_t control) const {
        return pair_cost_[node * controls_.size() + control];
    }

    [[nodiscard]] double q_value(std::span<const double> V, std::size_t node, std::size_t control) const {
        const std::size_t p = node * controls_.size() + control;
        const double c = pair_cost_[p];
        if (c == kInf) return kInf;
        CellLocation loc;
        loc.base = pair_base_[p];
        const std::size_t n = states_.dim();
        for (std::size_t a = 0; a < n; ++a) loc.t[a] = pair_t_[p * n + a];
        return c + problem_.beta * interpolate(states_, V, loc);
    }

    /// Minimizing control index at a node; ties go to the smallest index.
    [[nodiscard]] NodeArgmin argmin(std::span<const double> V, std::size_t node) const {
        NodeArgmin best;
        for (std::size_t j = 0; j < controls_.size(); ++j) {
            const double q = q_value(V, node, j);
            if (q < best.value) {
                best.runner_up = best.value;
                best.value = q;
                best.control = j;
            } else if (q < best.runner_up) {
                best.runner_up = q;
            }
        }
        return best;
    }

    /// out = T V (Jacobi sweep: reads only V).
    void apply(std::span<const double> V, std::span<double> out) const {
        if (V.size() != states_.size() || out.size() != states_.size())
            throw std::invalid_argument("Bellman operator: table size mismatch");
        parallel_for(states_.size(), [&](std::size_t i) {
            double best = kInf;
            for (std::size_t j = 0; j < controls_.size(); ++j) best = std::min(best, q_value(V, i, j));
            out[i] = best;
        });
    }

    [[nodiscard]] std::vector<double> apply(std::span<const double> V) const {
        std::vector<double> out(states_.size());
        apply(V, out);
        return out;
    }

  private:
    DiscountedProblem problem_;
    Grid states_;
    Grid controls_;
    CostSelector cost_;
    std::vector<double> pair_cost_;
    std::vector<std::uint32_t> pair_base_;
    std::vector<double> pair_t_;
};

struct SolveOptions {
    /// Target sup-norm distance to the discrete fixed point.
    double tol = 1e-6;
    std::size_t max_iter = 200'000;
};

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

/// Value iteration from V0 = 0. Stops once the sweep change is at most
/// tol*(1-beta)/beta, which bounds the distance to the fixed point by tol.
inline GriddedValueFunction value_iteration(const BellmanOperator& T, const SolveOptions& opts = {}) {
    if (!(opts.tol > 0.0)) throw DomainError("value iteration: tol must be positive");
    const double beta = T.beta();
    const double stop = opts.tol * (1.0 - beta) / beta;
    std::vector<double> V(T.state_grid().size(), 0.0);
    std::vector<double> next(V.size());
    double change = kInf;
    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        T.apply(V, next);
        change = sup_distance(V, next);
        V.swap(next);
        if (change <= stop) {
            GriddedValueFunction out;
            out.grid = T.state_grid();
            out.values = std::move(V);
            out.beta = beta;
            out.kind = T.cost().kind();
            out.last_update = change;
            out.bellman_residual = change * beta / (1.0 - beta);
            out.iterations = it;
            return out;
        }
    }
    std::ostringstream os;
    os << "value iteration did not converge in " << opts.max_iter << " sweeps (last change " << change << ")";
    throw NonConvergence(os.str(), change * beta / (1.0 - beta));
}

inline GriddedValueFunction value_iteration(const DiscountedProblem& problem, const Grid& state_grid,
                                            const Grid& control_grid, const CostSelector& cost = {},
                                            const SolveOptions& opts = {}) {
    return value_iteration(BellmanOperator(problem, state_grid, control_grid, cost), opts);
}

// ---------------------------------------------------------------------------
// Policies and trajectories
// ---------------------------------------------------------------------------

/// Feedback law tabulated on the state grid, together with the data needed to
/// re-evaluate the minimization at off-grid states.
struct Policy {
    Grid grid;
    std::vector<std::size_t> control_index;
    std::vector<Vec> controls;
    GriddedValueFunction value;
    Grid control_grid;
    CostSelector cost;

    [[nodiscard]] const Vec& at_node(std::size_t i) const { return controls[i]; }
};

inline Policy extract_policy(const BellmanOperator& T, const GriddedValueFunction& V) {
    Policy p;
    p.grid = T.state_grid();
    p.control_grid = T.control_grid();
    p.cost = T.cost();
    p.value = V;
    p.control_index.resize(p.grid.size());
    p.controls.resize(p.grid.size());
    for (std::size_t i = 0; i < p.grid.size(); ++i) {
        const NodeArgmin a = T.argmin(V.values, i);
        if (a.control == kNoControl) {
            std::ostringstream os;
            os << "state node " << i << " has no admissible control";
            throw InfeasibleNode(os.str(), i);
        }
        p.control_index[i] = a.control;
        p.controls[i] = T.control_grid().node(a.control);
    }
    return p;
}

inline Policy extract_policy(const GriddedValueFunction& V, const DiscountedProblem& problem, const Grid& control_grid,
                             const CostSelector& cost = {}) {
    return extract_policy(BellmanOperator(problem, V.grid, control_grid, cost), V);
}

struct ContinuousArgmin {
    Vec u;
    double value = kInf;
    bool found = false;
};

/// argmin over the control grid of cost(x,u) + beta*V(f(x,u)) at an arbitrary
/// state, excluding pairs whose image leaves X. With `refine` and a scalar
/// control, one golden-section pass on the bracket around the grid minimizer
/// may improve the result.
inline ContinuousArgmin argmin_at_state(const DiscountedProblem& problem, const CostSelector& cost,
                                        const GriddedValueFunction& V, const Grid& control_grid, const Vec& x,
                                        bool refine = false) {
    const auto& sys = problem.system;
    auto q = [&](const Vec& u) {
        if (!sys.in_joint(x, u)) return kInf;
        const Vec next = sys.f(x, u);
        if (!sys.in_state_box(next)) return kInf;
        return cost(problem, x, u) + problem.beta * V(next);
    };
    ContinuousArgmin best;
    std::size_t best_j = kNoControl;
    for (std::size_t j = 0; j < control_grid.size(); ++j) {
        const Vec u = control_grid.node(j);
        const double v = q(u);
        if (v < best.value) {
            best.value = v;
            best.u = u;
            best_j = j;
            best.found = true;
        }
    }
    if (refine && best.found && control_grid.dim() == 1 && control_grid.size() >= 3) {
        const auto& ax = control_grid.axis(0);
        double a = ax[best_j == 0 ? 0 : best_j - 1];
        double b = ax[std::min(best_j + 1, ax.size() - 1)];
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        double c = b - g * (b - a);
        double d = a + g * (b - a);
        double fc = q(Vec{c});
        double fd = q(Vec{d});
        for (int k = 0; k < 60 && (b - a) > 1e-12 * (1.0 + std::abs(a)); ++k) {
            if (fc <= fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = q(Vec{c});
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = q(Vec{d});
            }
        }
        const double um = 0.5 * (a + b);
        const double fm = q(Vec{um});
        if (fm < best.value) {
            best.value = fm;
            best.u = Vec{um};
        }
    }
    return best;
}

struct Trajectory {
    double beta = 0.0;
    std::vector<Vec> states;
    std::vector<Vec> controls;
    /// Original stage costs l(x(k),u(k)).
    std::vector<double> stage_costs;
    /// discounted_sums[k] = sum_{j<k} beta^j l(x(j),u(j)); size steps()+1.
    std::vector<double> discounted_sums;
    /// Rotated stage costs and partial sums, when a rotation was supplied.
    std::vector<double> rotated_costs;
    std::vector<double> rotated_sums;
    bool exited = false;
    std::size_t exit_index = 0;

    [[nodiscard]] std::size_t steps() const { return controls.size(); }
    [[nodiscard]] bool has_rotated() const { return !rotated_sums.empty(); }
    [[nodiscard]] double total() const { return discounted_sums.back(); }
};

namespace detail {

struct TrajectoryBuilder {
    const DiscountedProblem& problem;
    const Rotation* rotation;
    Trajectory traj;
    double weight = 1.0;

    TrajectoryBuilder(const DiscountedProblem& p, const Rotation* rot, const Vec& x0) : problem(p), rotation(rot) {
        traj.beta = p.beta;
        traj.states.push_back(x0);
        traj.discounted_sums.push_back(0.0);
        if (rotation) traj.rotated_sums.push_back(0.0);
    }

    void step(const Vec& u, const Vec& next) {
        const Vec& x = traj.states.back();
        const double l = problem.system.cost(x, u);
        traj.controls.push_back(u);
        traj.stage_costs.push_back(l);
        traj.discounted_sums.push_back(traj.discounted_sums.back() + weight * l);
        if (rotation) {
            const double lt = rotated_cost_unchecked(problem, *rotation, x, u);
            traj.rotated_costs.push_back(lt);
            traj.rotated_sums.push_back(traj.rotated_sums.back() + weight * lt);
        }
        traj.states.push_back(next);
        weight *= problem.beta;
    }
};

}  // namespace detail

enum class ControlLookup { argmin, nearest_node, interpolated };

struct RolloutOptions {
    ControlLookup lookup = ControlLookup::argmin;
    /// Golden-section refinement of scalar controls in argmin mode.
    bool refine = false;
    /// Rotation used to record rotated costs; defaults to the policy's own.
    std::optional<Rotation> record_rotation;
};

/// Closed-loop simulation x(k+1) = f(x(k), mu(x(k))) with exact dynamics.
inline Trajectory rollout(const Policy& policy, const DiscountedProblem& problem, const Vec& x0, std::size_t N,
                          const RolloutOptions& opts = {}) {
    const auto& sys = problem.system;
    if (!sys.state_box.contains(x0)) throw DomainError("rollout: x0 outside the state box");
    const Rotation* rot = opts.record_rotation ? &*opts.record_rotation
                          : policy.cost.rotation ? &*policy.cost.rotation
                                                 : nullptr;
    detail::TrajectoryBuilder b(problem, rot, x0);
    for (std::size_t k = 0; k < N; ++k) {
        const Vec x = b.traj.states.back();
        Vec u;
        switch (opts.lookup) {
            case ControlLookup::argmin: {
                const auto a = argmin_at_state(problem, policy.cost, policy.value, policy.control_grid, x, opts.refine);
                if (!a.found) {
                    b.traj.exited = true;
                    b.traj.exit_index = k;
                    return b.traj;
                }
                u = a.u;
                break;
            }
            case ControlLookup::nearest_node:
                u = policy.controls[policy.grid.nearest(x)];
                break;
            case ControlLookup::interpolated: {
                const CellLocation loc = locate(policy.grid, x);
                u = Vec(sys.control_dim());
                std::vector<double> comp(policy.grid.size());
                for (std::size_t c = 0; c < u.size(); ++c) {
                    for (std::size_t i = 0; i < comp.size(); ++i) comp[i] = policy.controls[i][c];
                    u[c] = interpolate(policy.grid, comp, loc);
                }
                break;
            }
        }
        if (!sys.in_joint(x, u)) {
            b.traj.exited = true;
            b.traj.exit_index = k;
            return b.traj;
        }
        const Vec next = sys.f(x, u);
        if (!sys.in_state_box(next)) {
            b.traj.exited = true;
            b.traj.exit_index = k;
            return b.traj;
        }
        b.step(u, next);
    }
    return b.traj;
}

/// Trajectory of a given control sequence; throws InadmissibleStep on the
/// first step whose pair is not in Y or whose image leaves X.
inline Trajectory evaluate_open_loop(const DiscountedProblem& problem, const Vec& x0, std::span<const Vec> controls,
                                     const CostSelector& cost = {}) {
    const auto& sys = problem.system;
    if (!sys.state_box.contains(x0)) throw InadmissibleStep("open loop: x0 outside the state box", 0);
    const Rotation* rot = cost.rotation ? &*cost.rotation : nullptr;
    detail::TrajectoryBuilder b(problem, rot, x0);
    for (std::size_t k = 0; k < controls.size(); ++k) {
        const Vec& x = b.traj.states.back();
        if (!sys.in_joint(x, controls[k]))
            throw InadmissibleStep("open loop: (x,u) not in Y at step " + std::to_string(k), k);
        const Vec next = sys.f(x, controls[k]);
        if (!sys.in_state_box(next))
            throw InadmissibleStep("open loop: state leaves X after step " + std::to_string(k), k);
        b.step(controls[k], next);
    }
    return b.traj;
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

struct BruteForceResult {
    double truncated_min = kInf;
    double tailbound = 0.0;
    Interval interval;
    std::vector<Vec> best_controls;
};

inline constexpr double kBruteForceBudget = 1e7;

/// sup |cost| over admissible pairs of a state grid x control grid.
inline double estimate_cost_sup(const DiscountedProblem& problem, const CostSelector& cost, const Grid& control_grid,
                                std::size_t state_nodes = 201) {
    const Grid xs = Grid::uniform(problem.system.state_box, state_nodes);
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Vec x = xs.node(i);
        for (std::size_t j = 0; j < control_grid.size(); ++j) {
            const Vec u = control_grid.node(j);
            if (!check_admissible(problem.system, x, u)) continue;
            s = std::max(s, std::abs(cost(problem, x, u)));
        }
    }
    return s;
}

/// Exhaustive minimization of the K-step truncated discounted cost over all
/// admissible control-grid sequences; the infinite-horizon value lies within
/// the returned interval when |cost| <= cost_sup on Y.
inline BruteForceResult brute_force_value(const DiscountedProblem& problem, const Vec& x0, const Grid& control_grid,
                                          std::size_t K, const CostSelector& cost = {},
                                          std::optional<double> cost_sup = std::nullopt) {
    const double required = std::pow(static_cast<double>(control_grid.size()), static_cast<double>(K));
    if (required > kBruteForceBudget) {
        std::ostringstream os;
        os << "brute force needs " << required << " sequences, budget is " << kBruteForceBudget;
        throw GuardExceeded(os.str(), required);
    }
    const auto& sys = problem.system;
    std::vector<Vec> us(control_grid.size());
    for (std::size_t j = 0; j < us.size(); ++j) us[j] = control_grid.node(j);

    BruteForceResult res;
    std::vector<Vec> current;
    current.reserve(K);
    auto dfs = [&](auto&& self, const Vec& x, std::size_t depth, double acc, double weight) -> void {
        if (depth == K) {
            if (acc < res.truncated_min) {
                res.truncated_min = acc;
                res.best_controls = current;
            }
            return;
        }
        for (const Vec& u : us) {
            if (!sys.in_joint(x, u)) continue;
            const Vec next = sys.f(x, u);
            if (!sys.in_state_box(next)) continue;
            current.push_back(u);
            self(self, next, depth + 1, acc + weight * cost(problem, x, u), weight * problem.beta);
            current.pop_back();
        }
    };
    dfs(dfs, x0, 0, 0.0, 1.0);
    if (res.truncated_min == kInf) throw InfeasibleNode("brute force: no admissible control sequence", 0);

    const double sup = cost_sup ? *cost_sup : estimate_cost_sup(problem, cost, control_grid);
    res.tailbound = std::pow(problem.beta, static_cast<double>(K)) * sup / (1.0 - problem.beta);
    res.interval = {res.truncated_min - res.tailbound, res.truncated_min + res.tailbound};
    return res;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {
inline std::ostream& full_precision(std::ostream& os) { return os << std::setprecision(17); }
}  // namespace detail

/// Header `k,x0..,u0..,stage_cost,discounted_partial_sum`. Row k holds x(k),
/// u(k), l(x(k),u(k)) and sum_{j<=k} beta^j l; the final row has only x(N).
inline void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
    const std::size_t n = t.states.front().size();
    const std::size_t m = t.controls.empty() ? 0 : t.controls.front().size();
    detail::full_precision(os);
    os << "k";
    for (std::size_t i = 0; i < n; ++i) os << ",x" << i;
    for (std::size_t j = 0; j < m; ++j) os << ",u" << j;
    os << ",stage_cost,discounted_partial_sum\n";
    for (std::size_t k = 0; k < t.states.size(); ++k) {
        os << k;
        for (std::size_t i = 0; i < n; ++i) os << ',' << t.states[k][i];
        if (k < t.steps()) {
            for (std::size_t j = 0; j < m; ++j) os << ',' << t.controls[k][j];
            os << ',' << t.stage_costs[k] << ',' << t.discounted_sums[k + 1] << '\n';
        } else {
            for (std::size_t j = 0; j < m; ++j) os << ',';
            os << ",," << t.discounted_sums[k] << '\n';
        }
    }
}

/// Header `x0..,value`, one row per node in flat order.
inline void write_value_csv(std::ostream& os, const GriddedValueFunction& V) {
    const std::size_t n = V.grid.dim();
    detail::full_precision(os);
    for (std::size_t a = 0; a < n; ++a) os << 'x' << a << ',';
    os << "value\n";
    for (std::size_t i = 0; i < V.grid.size(); ++i) {
        const Vec x = V.grid.node(i);
        for (std::size_t a = 0; a < n; ++a) os << x[a] << ',';
        os << V.values[i] << '\n';
    }
}

/// Header `x0..,u0..` with the tabulated policy.
inline void write_policy_csv(std::ostream& os, const Policy& p) {
    const std::size_t n = p.grid.dim();
    const std::size_t m = p.controls.front().size();
    detail::full_precision(os);
    for (std::size_t a = 0; a < n; ++a) os << 'x' << a << ',';
    for (std::size_t j = 0; j < m; ++j) os << 'u' << j << (j + 1 < m ? "," : "\n");
    for (std::size_t i = 0; i < p.grid.size(); ++i) {
        const Vec x = p.grid.node(i);
        for (std::size_t a = 0; a < n; ++a) os << x[a] << ',';
        for (std::size_t j = 0; j < m; ++j) os << p.controls[i][j] << (j + 1 < m ? "," : "\n");
    }
}

/// Reads a value-function CSV written by write_value_csv.
inline GriddedValueFunction read_value_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw SpecError("value csv: empty input");
    const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (cols < 2 || cols - 1 > Vec::kMaxDim) throw SpecError("value csv: bad header");
    const std::size_t n = cols - 1;
    std::vector<std::vector<double>> coords(n);
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> fields;
        while (std::getline(row, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw SpecError("value csv: bad number '" + cell + "'");
            }
            if (used != cell.size()) throw SpecError("value csv: bad number '" + cell + "'");
            fields.push_back(v);
        }
        if (fields.size() != cols) throw SpecError("value csv: wrong number of columns");
        for (std::size_t a = 0; a < n; ++a) coords[a].push_back(fields[a]);
        values.push_back(fields[n]);
    }
    std::vector<std::vector<double>> axes(n);
    for (std::size_t a = 0; a < n; ++a) {
        axes[a] = coords[a];
        std::sort(axes[a].begin(), axes[a].end());
        axes[a].erase(std::unique(axes[a].begin(), axes[a].end()), axes[a].end());
    }
    GriddedValueFunction V;
    V.grid = Grid::from_axes(std::move(axes));
    if (V.grid.size() != values.size()) throw SpecError("value csv: rows do not form a full tensor grid");
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Vec x = V.grid.node(i);
        for (std::size_t a = 0; a < n; ++a) {
            if (x[a] != coords[a][i]) throw SpecError("value csv: rows are not in grid order");
        }
    }
    V.values = std::move(values);
    return V;
}

}  // namespace dtp
