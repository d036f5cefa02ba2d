#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtp/comparison.hpp"
#include "dtp/dissipativity.hpp"
#include "dtp/errors.hpp"
#include "dtp/grid.hpp"
#include "dtp/grid_dp.hpp"
#include "dtp/model.hpp"
#include "dtp/model_spec.hpp"

namespace dtp {

// ---------------------------------------------------------------------------
// Q-sets
// ---------------------------------------------------------------------------

struct QSetResult {
    double epsilon = 0.0;
    std::size_t M = 0;
    std::vector<std::size_t> indices;

    [[nodiscard]] std::size_t cardinality() const { return indices.size(); }
};

/// {k <= M : |x(k) - x_ref| >= epsilon}
inline QSetResult q_set(const Trajectory& traj, const Vec& x_ref, double epsilon, std::size_t M) {
    if (!(epsilon > 0.0)) throw DomainError("q_set: epsilon must be positive");
    if (traj.states.size() < M + 1) {
        std::ostringstream os;
        os << "q_set: trajectory has " << traj.states.size() << " states, need " << M + 1;
        throw LengthError(os.str());
    }
    QSetResult q{epsilon, M, {}};
    for (std::size_t k = 0; k <= M; ++k) {
        if (distance(traj.states[k], x_ref) >= epsilon) q.indices.push_back(k);
    }
    return q;
}

// ---------------------------------------------------------------------------
// C-bound
// ---------------------------------------------------------------------------

struct CBoundReport {
    double C = 1.0;
    double beta = 0.0;
    double bound = 0.0;
    double kappa = 0.0;
    bool satisfied = false;
    double inner = 0.0;
    double outer = 0.0;
    std::size_t nodes_used = 0;
    /// Annulus nodes where inf_u of the rotated cost is <= 1e-12.
    std::vector<Vec> excluded;
    Vec argmax;
};

/// inf over the control grid of the rotated cost at x (admissible pairs only).
inline double min_rotated_cost(const DiscountedProblem& problem, const Rotation& rot, const Grid& control_grid,
                               const Vec& x) {
    double best = kInf;
    for (std::size_t j = 0; j < control_grid.size(); ++j) {
        const Vec u = control_grid.node(j);
        if (!check_admissible(problem.system, x, u)) continue;
        best = std::min(best, rotated_cost_unchecked(problem, rot, x, u));
    }
    return best;
}

/// C = max over nodes with inner <= |x - x^b| <= outer of V(x) / inf_u l~(x,u),
/// floored at 1.
inline CBoundReport estimate_C(const GriddedValueFunction& V_rot, const DiscountedProblem& problem,
                               const Equilibrium& eq, const StorageFunction& storage, double inner, double outer,
                               const Grid& control_grid) {
    if (!(inner >= 0.0) || !(outer > 0.0) || inner > outer) throw RegionError("estimate_C: need 0 <= inner <= outer, outer > 0");
    const Rotation rot{eq, storage};
    CBoundReport rep;
    rep.beta = problem.beta;
    rep.bound = 1.0 / (1.0 - problem.beta);
    rep.inner = inner;
    rep.outer = outer;
    double ratio_max = -kInf;
    std::size_t in_annulus = 0;
    for (std::size_t i = 0; i < V_rot.grid.size(); ++i) {
        const Vec x = V_rot.grid.node(i);
        const double r = distance(x, eq.x);
        if (r < inner || r > outer) continue;
        ++in_annulus;
        const double denom = min_rotated_cost(problem, rot, control_grid, x);
        if (!(denom > 1e-12) || denom == kInf) {
            rep.excluded.push_back(x);
            continue;
        }
        const double ratio = V_rot.values[i] / denom;
        ++rep.nodes_used;
        if (ratio > ratio_max) {
            ratio_max = ratio;
            rep.argmax = x;
        }
    }
    if (in_annulus == 0) throw RegionError("estimate_C: no grid node in the annulus");
    if (rep.nodes_used == 0) throw RegionError("estimate_C: every annulus node has a vanishing denominator");
    rep.C = std::max(1.0, ratio_max);
    rep.kappa = (1.0 - problem.beta) - 1.0 / rep.C;
    rep.satisfied = rep.C < rep.bound;
    return rep;
}

// ---------------------------------------------------------------------------
// Threshold quantities
// ---------------------------------------------------------------------------

/// Largest eps in {rho, rho/2, ..., rho/2^10} such that every probe pair with
/// |x - x_l| < eps, |u - u_l| < eps maps to |f(x,u) - x_l| < rho; returns min(eps, rho).
inline double eta_from_continuity(const ControlSystem& sys, const Equilibrium& eq, double rho,
                                  std::size_t probe_nodes = 21) {
    if (!(rho > 0.0)) throw DomainError("eta: rho must be positive");
    if (probe_nodes < 2) throw DomainError("eta: need at least 2 probe nodes per axis");
    const std::size_t n = eq.x.size();
    const std::size_t m = eq.u.size();
    Box unit;
    for (std::size_t a = 0; a < n + m; ++a) unit.push({-1.0, 1.0});
    const Grid probe = Grid::uniform(unit, probe_nodes);
    const double shrink = 1.0 - 1e-9;
    double eps = rho;
    for (int level = 0; level <= 10; ++level, eps *= 0.5) {
        bool ok = true;
        for (std::size_t p = 0; p < probe.size() && ok; ++p) {
            const Vec s = probe.node(p);
            Vec dx(n), du(m);
            for (std::size_t a = 0; a < n; ++a) dx[a] = s[a] * eps * shrink;
            for (std::size_t b = 0; b < m; ++b) du[b] = s[n + b] * eps * shrink;
            if (!(dx.norm() < eps) || !(du.norm() < eps)) continue;
            const Vec x = eq.x + dx;
            const Vec u = eq.u + du;
            if (!sys.in_joint(x, u)) continue;
            if (!(distance(sys.f(x, u), eq.x) < rho)) ok = false;
        }
        if (ok) return std::min(eps, rho);
    }
    std::ostringstream os;
    os << "no continuity radius down to rho/1024 keeps f within rho = " << rho << " of x_l; decrease rho";
    throw ContinuityProbeFailed(os.str());
}

/// (k/(k+1)) * delta / (delta - l~_min)
inline double beta_star(double delta, double ell_tilde_min, double k_fraction = 1.0) {
    if (!(delta > 0.0)) throw DomainError("beta_star: delta must be positive");
    if (!(ell_tilde_min <= 0.0)) throw DomainError("beta_star: ell_tilde_min must be <= 0");
    if (!(k_fraction >= 1.0)) throw DomainError("beta_star: k must be >= 1");
    return k_fraction / (k_fraction + 1.0) * delta / (delta - ell_tilde_min);
}

/// Limit of beta_star as k -> infinity.
inline double beta_star_limit(double delta, double ell_tilde_min) {
    if (!(delta > 0.0)) throw DomainError("beta_star: delta must be positive");
    if (!(ell_tilde_min <= 0.0)) throw DomainError("beta_star: ell_tilde_min must be <= 0");
    return delta / (delta - ell_tilde_min);
}

struct StayBounds {
    double sigma = 0.0;
    double eps_stay = 0.0;
    double theta_stay = 0.0;
};

/// sigma = beta^K delta / (2(1-beta)), theta = sigma/2, eps = gamma^{-1}(sigma/2).
inline StayBounds sigma_eps_theta(double beta, std::size_t K, double delta, const ComparisonFunction& gamma) {
    if (!(beta > 0.0 && beta < 1.0)) throw DomainError("sigma: beta must lie in (0,1)");
    if (K < 1) throw DomainError("sigma: K must be >= 1");
    if (!(delta > 0.0)) throw DomainError("sigma: delta must be positive");
    StayBounds s;
    s.sigma = std::pow(beta, static_cast<double>(K)) * delta / (2.0 * (1.0 - beta));
    s.theta_stay = s.sigma / 2.0;
    s.eps_stay = gamma.inverse(s.sigma / 2.0);
    return s;
}

// ---------------------------------------------------------------------------
// Lyapunov decrease
// ---------------------------------------------------------------------------

struct LyapunovReport {
    double kappa = 0.0;
    double C = 1.0;
    double delta = 0.0;
    /// r(k) = V(x(k+1)) - V(x(k)) - (kappa/beta) V(x(k)) - delta/beta^{k+1}
    std::vector<double> residuals;
    /// (max(d_k,0) + c_k)/beta with d_k the Bellman defect of the step and c_k
    /// the violation of V(x) <= C inf_u l~(x,u) at the off-grid state x(k).
    std::vector<double> slack;
    double max_residual = -kInf;
    double max_excess = -kInf;

    [[nodiscard]] bool passed(double tol = 1e-12) const { return max_excess <= tol; }
};

inline LyapunovReport lyapunov_decrease_check(const GriddedValueFunction& V_rot, const DiscountedProblem& problem,
                                              const Equilibrium& eq, const StorageFunction& storage,
                                              const Trajectory& traj, double C, const Grid& control_grid,
                                              double delta = 0.0) {
    if (!(C >= 1.0)) throw DomainError("lyapunov check: C must be >= 1");
    const Rotation rot{eq, storage};
    const double beta = problem.beta;
    LyapunovReport rep;
    rep.C = C;
    rep.delta = delta;
    rep.kappa = (1.0 - beta) - 1.0 / C;
    for (const auto& x : traj.states) {
        if (!V_rot.grid.box().contains(x)) throw DomainError("lyapunov check: trajectory leaves the value grid");
    }
    double weight = beta;
    for (std::size_t k = 0; k < traj.steps(); ++k) {
        const Vec& x = traj.states[k];
        const Vec& u = traj.controls[k];
        const double v0 = V_rot(x);
        const double v1 = V_rot(traj.states[k + 1]);
        const double lt = rotated_cost_unchecked(problem, rot, x, u);
        const double r = v1 - v0 - (rep.kappa / beta) * v0 - delta / weight;
        const double defect = lt + beta * v1 - v0;
        const double inf_lt = std::min(lt, min_rotated_cost(problem, rot, control_grid, x));
        const double c_viol = std::max(0.0, v0 / C - inf_lt);
        const double s = (std::max(defect, 0.0) + c_viol) / beta;
        rep.residuals.push_back(r);
        rep.slack.push_back(s);
        rep.max_residual = std::max(rep.max_residual, r);
        rep.max_excess = std::max(rep.max_excess, r - s);
        weight *= beta;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Sublevel invariance
// ---------------------------------------------------------------------------

struct SublevelResult {
    bool holds = true;
    std::size_t nodes_checked = 0;
    std::optional<std::size_t> witness;
    Vec witness_x;
    Vec witness_successor;
};

/// For every node in region with V(x) < level: f(x, policy(x)) stays in region
/// with V < level.
inline SublevelResult sublevel_invariance_check(const GriddedValueFunction& V_rot, const DiscountedProblem& problem,
                                                const Policy& policy, const Box& region, double level) {
    if (!(V_rot.grid == policy.grid)) throw DomainError("sublevel check: policy and value grids differ");
    SublevelResult res;
    for (std::size_t i = 0; i < V_rot.grid.size(); ++i) {
        const Vec x = V_rot.grid.node(i);
        if (!region.contains(x) || !(V_rot.values[i] < level)) continue;
        ++res.nodes_checked;
        const Vec next = problem.system.f(x, policy.controls[i]);
        if (!region.contains(next) || !(V_rot(next) < level)) {
            res.holds = false;
            res.witness = i;
            res.witness_x = x;
            res.witness_successor = next;
            return res;
        }
    }
    return res;
}

/// Largest level such that {x in region : V(x) < level} stays off the boundary
/// layer of the region on the grid, i.e. the min of V over region nodes that
/// have a grid neighbour outside the region (or lie on the region's faces).
inline double largest_contained_level(const GriddedValueFunction& V_rot, const Box& region) {
    const Grid& g = V_rot.grid;
    double level = kInf;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec x = g.node(i);
        if (!region.contains(x)) continue;
        bool boundary = false;
        for (std::size_t a = 0; a < g.dim() && !boundary; ++a) {
            const std::size_t idx = g.axis_index(i, a);
            const auto& ax = g.axis(a);
            const bool lo_out = idx == 0 || ax[idx - 1] < region[a].lo;
            const bool hi_out = idx + 1 == ax.size() || ax[idx + 1] > region[a].hi;
            boundary = lo_out || hi_out;
        }
        if (boundary) level = std::min(level, V_rot.values[i]);
    }
    if (level == kInf) throw RegionError("largest_contained_level: region contains no grid node");
    return level;
}

/// Largest level c <= largest_contained_level(V_rot, region) for which
/// sublevel_invariance_check holds; candidates are the node values below the cap.
inline double largest_invariant_level(const GriddedValueFunction& V_rot, const DiscountedProblem& problem,
                                      const Policy& policy, const Box& region) {
    const double cap = largest_contained_level(V_rot, region);
    std::vector<double> candidates{cap};
    for (std::size_t i = 0; i < V_rot.grid.size(); ++i) {
        if (region.contains(V_rot.grid.node(i)) && V_rot.values[i] < cap) candidates.push_back(V_rot.values[i]);
    }
    std::sort(candidates.begin(), candidates.end(), std::greater<>());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (double c : candidates) {
        if (sublevel_invariance_check(V_rot, problem, policy, region, c).holds) return c;
    }
    return candidates.back();
}

// ---------------------------------------------------------------------------
// Classification and scans
// ---------------------------------------------------------------------------

enum class Behavior { local, global, boundary, none };

inline const char* to_string(Behavior b) {
    switch (b) {
        case Behavior::local: return "local";
        case Behavior::global: return "global";
        case Behavior::boundary: return "boundary";
        case Behavior::none: return "none";
    }
    return "?";
}

struct ClassifyOptions {
    double tol = 0.05;
    /// A trajectory converges to an equilibrium only if it ends within tol and
    /// within max(d_0/2, settle_tol) of it, so that sitting still near an
    /// equilibrium does not count as convergence.
    double settle_tol = 0.01;
};

/// Terminal behaviour against a cost-sorted equilibrium list: the first
/// equilibrium reached is `global` if it is the cheapest, `local` otherwise;
/// then `boundary` within tol of the box boundary; else `none`.
inline Behavior classify(const Trajectory& traj, const std::vector<Equilibrium>& equilibria, const Box& box,
                         const ClassifyOptions& opts = {}) {
    const Vec& x0 = traj.states.front();
    const Vec& xN = traj.states.back();
    for (std::size_t e = 0; e < equilibria.size(); ++e) {
        const double d0 = distance(x0, equilibria[e].x);
        const double dN = distance(xN, equilibria[e].x);
        if (dN <= opts.tol && dN <= std::max(0.5 * d0, opts.settle_tol))
            return e == 0 ? Behavior::global : Behavior::local;
    }
    if (box.distance_to_boundary(xN) <= opts.tol) return Behavior::boundary;
    return Behavior::none;
}

struct ScanOptions {
    std::size_t grid = 801;
    std::size_t ugrid = 601;
    double tol = 1e-6;
    std::size_t max_iter = 200000;
    bool refine = true;
    ClassifyOptions classify;
    std::size_t equilibrium_grid = 201;
};

struct ScanCell {
    double beta = 0.0;
    Vec x0;
    Behavior behavior = Behavior::none;
    Vec terminal;
    std::size_t iterations = 0;
    Trajectory trajectory;
};

struct ScanResult {
    std::vector<ScanCell> cells;
    /// Per x0 (index into the x0 list): largest beta classified `local`.
    std::map<std::size_t, double> beta_hat2;
    std::vector<std::vector<Equilibrium>> equilibria;
};

/// Solves, rolls out and classifies every (beta, x0) pair. Cells are ordered
/// beta-major.
inline ScanResult beta_scan(const ModelSpec& spec, const std::vector<Vec>& x0_list, const std::vector<double>& beta_grid,
                            std::size_t N, const ScanOptions& opts = {}) {
    const ControlSystem sys = expand_model_spec(spec);
    const Grid xs = Grid::uniform(sys.state_box, opts.grid);
    const Grid us = Grid::uniform(sys.control_box, opts.ugrid);
    const Grid eq_xs = Grid::uniform(sys.state_box, opts.equilibrium_grid);
    const Grid eq_us = Grid::uniform(sys.control_box, std::min(opts.ugrid, opts.equilibrium_grid));
    ScanResult res;
    for (double beta : beta_grid) {
        const DiscountedProblem problem(sys, beta);
        const auto eqs = find_equilibria(sys, beta, eq_xs, eq_us);
        res.equilibria.push_back(eqs);
        const BellmanOperator T(problem, xs, us);
        const auto V = value_iteration(T, SolveOptions{opts.tol, opts.max_iter});
        const Policy policy = extract_policy(T, V);
        for (std::size_t i = 0; i < x0_list.size(); ++i) {
            ScanCell cell;
            cell.beta = beta;
            cell.x0 = x0_list[i];
            RolloutOptions ro;
            ro.refine = opts.refine;
            cell.trajectory = rollout(policy, problem, x0_list[i], N, ro);
            cell.terminal = cell.trajectory.states.back();
            cell.behavior = classify(cell.trajectory, eqs, sys.state_box, opts.classify);
            cell.iterations = V.iterations;
            if (cell.behavior == Behavior::local) {
                auto it = res.beta_hat2.find(i);
                if (it == res.beta_hat2.end() || beta > it->second) res.beta_hat2[i] = beta;
            }
            res.cells.push_back(std::move(cell));
        }
    }
    return res;
}

/// Parses A:B:STEP into an inclusive list of values (rounded to the step).
inline std::vector<double> parse_range(const std::string& text) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw SpecError("range '" + text + "': expected A:B:STEP");
        }
    }
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
        throw SpecError("range '" + text + "': expected A:B:STEP with A <= B and STEP > 0");
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (std::size_t i = 0; i <= count; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
    return out;
}

// ---------------------------------------------------------------------------
// Threshold pipeline
// ---------------------------------------------------------------------------

struct StorageChoice {
    enum class Kind { automatic, zero, linear, quadratic };
    Kind kind = Kind::automatic;
    Vec coefficients;

    [[nodiscard]] std::string describe() const {
        std::ostringstream os;
        switch (kind) {
            case Kind::automatic: os << "auto"; break;
            case Kind::zero: os << "zero"; break;
            case Kind::linear: os << "linear:" << coefficients; break;
            case Kind::quadratic: os << "quadratic:" << coefficients; break;
        }
        return os.str();
    }
};

/// "auto", "zero", "linear:a[,b..]" or "quadratic:c[,d..]".
inline StorageChoice parse_storage_choice(const std::string& text) {
    StorageChoice c;
    if (text == "auto") return c;
    if (text == "zero") {
        c.kind = StorageChoice::Kind::zero;
        return c;
    }
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw SpecError("storage '" + text + "': expected auto, zero, linear:.. or quadratic:..");
    const std::string head = text.substr(0, colon);
    if (head == "linear") c.kind = StorageChoice::Kind::linear;
    else if (head == "quadratic") c.kind = StorageChoice::Kind::quadratic;
    else throw SpecError("storage '" + text + "': unknown form '" + head + "'");
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    std::vector<double> vals;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            vals.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw SpecError("storage '" + text + "': bad coefficient '" + item + "'");
        }
    }
    if (vals.empty() || vals.size() > Vec::kMaxDim) throw SpecError("storage '" + text + "': bad coefficient count");
    c.coefficients = Vec::from_span(vals);
    return c;
}

inline StorageFunction make_storage(const StorageChoice& choice, const ControlSystem& sys, const Equilibrium& eq,
                                    double beta) {
    auto check_dim = [&] {
        if (choice.coefficients.size() != eq.x.size())
            throw SpecError("storage coefficients must have one entry per state component");
    };
    switch (choice.kind) {
        case StorageChoice::Kind::automatic: return synthesize_linear_storage(sys, eq, beta).storage;
        case StorageChoice::Kind::zero: return StorageFunction::zero(eq.x);
        case StorageChoice::Kind::linear: check_dim(); return StorageFunction::linear(choice.coefficients, eq.x, sys.state_box);
        case StorageChoice::Kind::quadratic:
            check_dim();
            return StorageFunction::quadratic_diagonal(choice.coefficients, eq.x, sys.state_box);
    }
    throw SpecError("unknown storage choice");
}

struct ThresholdOptions {
    double rho = 0.3;
    double k_fraction = 1.0;
    std::size_t K = 1;
    StorageChoice storage;
    /// Index into the cost-sorted equilibrium list; default: 1 if there are
    /// several equilibria (the cheapest is the global one), else 0.
    std::optional<std::size_t> equilibrium_index;
    /// Dissipativity region X_N; default: the 2*rho box around x_l within X.
    std::optional<Box> region;
    std::size_t grid = 801;
    std::size_t ugrid = 601;
    double tol = 1e-6;
    VerificationOptions verification;
};

struct ThresholdReport {
    double beta = 0.0;
    Equilibrium equilibrium;
    std::size_t equilibrium_index = 0;
    std::vector<Equilibrium> equilibria;
    std::string storage;
    Vec nu;
    double storage_residual = 0.0;
    DissipativityReport dissipativity_xu;
    DissipativityReport dissipativity_x;
    double rho = 0.0;
    double eta = 0.0;
    /// Certificate behind delta: "xu", or "x" when the (x,u) certificate is
    /// rejected and the x-only one is accepted.
    std::string certificate = "xu";
    /// alpha_fit(eta) from the certificate named above.
    double delta = 0.0;
    /// alpha_fit(eta) from the x-only certificate (0 if rejected).
    double delta_state_only = 0.0;
    double ell_tilde_min = 0.0;
    double k_fraction = 1.0;
    double beta_star = 0.0;
    double beta_star_k1 = 0.0;
    double beta_star_limit = 0.0;
    std::optional<double> beta_star_state_only;
    std::optional<double> beta_star_state_only_limit;
    std::size_t K = 1;
    ComparisonFunction gamma;
    double sigma = 0.0;
    double eps_stay = 0.0;
    double theta_stay = 0.0;
    std::size_t value_iterations = 0;
    double bellman_residual = 0.0;
};

namespace detail {

template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StorageSynthesisFailed& e) {
        throw StorageSynthesisFailed(std::string(name) + ": " + e.what(), e.residual());
    } catch (const NonConvergence& e) {
        throw NonConvergence(std::string(name) + ": " + e.what(), e.last_residual());
    } catch (const SpecError& e) {
        throw SpecError(std::string(name) + ": " + e.what());
    } catch (const Error& e) {
        throw Error(std::string(name) + ": " + e.what());
    }
}

}  // namespace detail

/// equilibria -> storage -> dissipativity (l~_min, alpha) -> eta -> delta ->
/// beta* -> rotated value function (gamma) -> sigma, eps, theta.
inline ThresholdReport compute_thresholds(const ControlSystem& sys, double beta, const ThresholdOptions& opts = {}) {
    const DiscountedProblem problem(sys, beta);
    ThresholdReport rep;
    rep.beta = beta;
    rep.rho = opts.rho;
    rep.k_fraction = opts.k_fraction;
    rep.K = opts.K;

    rep.equilibria = detail::stage("equilibria", [&] {
        const Grid xs = Grid::uniform(sys.state_box, 201);
        const Grid us = Grid::uniform(sys.control_box, 201);
        auto eqs = find_equilibria(sys, beta, xs, us);
        if (eqs.empty()) throw DomainError("no equilibrium found");
        return eqs;
    });
    rep.equilibrium_index = opts.equilibrium_index.value_or(rep.equilibria.size() > 1 ? 1 : 0);
    if (rep.equilibrium_index >= rep.equilibria.size())
        throw SpecError("equilibrium index " + std::to_string(rep.equilibrium_index) + " out of range");
    rep.equilibrium = rep.equilibria[rep.equilibrium_index];
    const Equilibrium& eq = rep.equilibrium;

    const StorageFunction storage = detail::stage("storage", [&] {
        if (opts.storage.kind == StorageChoice::Kind::automatic) {
            auto syn = synthesize_linear_storage(sys, eq, beta);
            rep.storage_residual = syn.residual;
            return syn.storage;
        }
        return make_storage(opts.storage, sys, eq, beta);
    });
    rep.storage = storage.describe();
    rep.nu = storage.linear_coefficients();

    Box region;
    if (opts.region) {
        region = *opts.region;
    } else {
        for (std::size_t a = 0; a < eq.x.size(); ++a)
            region.push({std::max(sys.state_box[a].lo, eq.x[a] - 2.0 * opts.rho),
                         std::min(sys.state_box[a].hi, eq.x[a] + 2.0 * opts.rho)});
    }
    detail::stage("dissipativity", [&] {
        rep.dissipativity_xu = verify_dissipativity(problem, eq, storage, region, DissipativityVariant::state_control,
                                                    opts.verification);
        rep.dissipativity_x =
            verify_dissipativity(problem, eq, storage, region, DissipativityVariant::state_only, opts.verification);
        if (!rep.dissipativity_xu.accepted && !rep.dissipativity_x.accepted)
            throw DomainError("dissipativity certificate rejected on the region in both variants");
        return 0;
    });
    rep.certificate = rep.dissipativity_xu.accepted ? "xu" : "x";
    const DissipativityReport& cert = rep.dissipativity_xu.accepted ? rep.dissipativity_xu : rep.dissipativity_x;
    rep.ell_tilde_min = std::min(0.0, cert.ell_tilde_min);

    rep.eta = detail::stage("eta", [&] { return eta_from_continuity(sys, eq, opts.rho); });
    rep.delta = cert.alpha_fit(rep.eta);
    if (rep.dissipativity_x.accepted) rep.delta_state_only = rep.dissipativity_x.alpha_fit(rep.eta);

    detail::stage("beta_star", [&] {
        rep.beta_star = beta_star(rep.delta, rep.ell_tilde_min, opts.k_fraction);
        rep.beta_star_k1 = beta_star(rep.delta, rep.ell_tilde_min, 1.0);
        rep.beta_star_limit = beta_star_limit(rep.delta, rep.ell_tilde_min);
        if (rep.delta_state_only > 0.0) {
            rep.beta_star_state_only = beta_star(rep.delta_state_only, rep.ell_tilde_min, opts.k_fraction);
            rep.beta_star_state_only_limit = beta_star_limit(rep.delta_state_only, rep.ell_tilde_min);
        }
        return 0;
    });

    detail::stage("gamma", [&] {
        const Grid xs = Grid::uniform(sys.state_box, opts.grid);
        const Grid us = Grid::uniform(sys.control_box, opts.ugrid);
        CostSelector cost{Rotation{eq, storage}};
        const auto V = value_iteration(problem, xs, us, cost, SolveOptions{opts.tol});
        rep.value_iterations = V.iterations;
        rep.bellman_residual = V.bellman_residual;
        std::vector<ComparisonSample> samples;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const Vec x = xs.node(i);
            if (!region.contains(x)) continue;
            const double r = distance(x, eq.x);
            if (r > 0.0) samples.push_back({r, std::abs(V.values[i])});
        }
        rep.gamma = fit_comparison_upper(samples);
        return 0;
    });

    const StayBounds sb = detail::stage("sigma", [&] { return sigma_eps_theta(beta, opts.K, rep.delta, rep.gamma); });
    rep.sigma = sb.sigma;
    rep.eps_stay = sb.eps_stay;
    rep.theta_stay = sb.theta_stay;
    return rep;
}

inline nlohmann::json to_json(const Equilibrium& e) {
    return {{"x", vec_to_json(e.x)},         {"u", vec_to_json(e.u)},     {"beta", e.beta},
            {"stage_cost", e.stage_cost_value}, {"residual", e.residual}, {"refined", e.refined}};
}

inline nlohmann::json comparison_to_json(const ComparisonFunction& g) {
    nlohmann::json bp = nlohmann::json::array();
    for (std::size_t i = 0; i < g.radii().size(); ++i) bp.push_back({g.radii()[i], g.values()[i]});
    return bp;
}

inline nlohmann::json to_json(const ThresholdReport& r) {
    nlohmann::json j;
    j["beta"] = r.beta;
    nlohmann::json eqs = nlohmann::json::array();
    for (const auto& e : r.equilibria) eqs.push_back(to_json(e));
    j["equilibria"] = eqs;
    j["equilibrium_index"] = r.equilibrium_index;
    j["equilibrium"] = to_json(r.equilibrium);
    j["storage"] = {{"form", r.storage}, {"nu", vec_to_json(r.nu)}, {"residual", r.storage_residual}};
    j["dissipativity"] = {{"xu", to_json(r.dissipativity_xu)}, {"x", to_json(r.dissipativity_x)}};
    j["rho"] = r.rho;
    j["eta"] = r.eta;
    j["certificate"] = r.certificate;
    j["delta"] = r.delta;
    j["delta_state_only"] = r.delta_state_only;
    j["ell_tilde_min"] = r.ell_tilde_min;
    j["k_fraction"] = r.k_fraction;
    j["beta_star"] = r.beta_star;
    j["beta_star_candidates"] = {
        {"k1", r.beta_star_k1},
        {"k_limit", r.beta_star_limit},
        {"state_only", r.beta_star_state_only ? nlohmann::json(*r.beta_star_state_only) : nlohmann::json(nullptr)},
        {"state_only_k_limit",
         r.beta_star_state_only_limit ? nlohmann::json(*r.beta_star_state_only_limit) : nlohmann::json(nullptr)}};
    j["K"] = r.K;
    j["gamma_breakpoints"] = comparison_to_json(r.gamma);
    j["sigma"] = r.sigma;
    j["eps_stay"] = r.eps_stay;
    j["theta_stay"] = r.theta_stay;
    j["value_iterations"] = r.value_iterations;
    j["bellman_residual"] = r.bellman_residual;
    j["provenance"] = {
        {"equilibria", "find_equilibria on 201x201 joint grid, damped Newton refinement"},
        {"storage", "synthesize_linear_storage (auto) or user-supplied"},
        {"ell_tilde_min", "grid scan of all admissible pairs plus compass search"},
        {"eta", "continuity ladder rho/2^j, 21 probe nodes per axis"},
        {"delta", "alpha_fit(eta) from the (x,u) certificate, else the x-only one"},
        {"beta_star", "(k/(k+1)) delta/(delta - ell_tilde_min)"},
        {"gamma", "upper envelope of |V~| on the region"},
        {"sigma", "beta^K delta/(2(1-beta)); theta = sigma/2; eps = gamma^-1(sigma/2)"}};
    return j;
}

inline nlohmann::json to_json(const CBoundReport& c) {
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& x : c.excluded) ex.push_back(vec_to_json(x));
    return {{"C", c.C},         {"beta", c.beta},          {"bound", c.bound},   {"kappa", c.kappa},
            {"satisfied", c.satisfied}, {"inner", c.inner}, {"outer", c.outer}, {"nodes_used", c.nodes_used},
            {"excluded", ex},   {"argmax", vec_to_json(c.argmax)}};
}

inline nlohmann::json to_json(const QSetResult& q) {
    return {{"epsilon", q.epsilon}, {"M", q.M}, {"indices", q.indices}, {"cardinality", q.cardinality()}};
}

}  // namespace dtp
