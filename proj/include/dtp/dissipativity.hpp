#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dtp/comparison.hpp"
#include "dtp/errors.hpp"
#include "dtp/grid.hpp"
#include "dtp/model.hpp"
#include "dtp/model_spec.hpp"

namespace dtp {

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

inline double fd_step(double coordinate) { return 1e-6 * (1.0 + std::abs(coordinate)); }

/// Central-difference gradients of the stage cost in x and u.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> cost_gradients(const ControlSystem& sys, const Vec& x,
                                                                  const Vec& u) {
    Eigen::VectorXd gx(x.size());
    Eigen::VectorXd gu(u.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = fd_step(x[i]);
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        gx(static_cast<Eigen::Index>(i)) = (sys.cost(xp, u) - sys.cost(xm, u)) / (2.0 * h);
    }
    for (std::size_t j = 0; j < u.size(); ++j) {
        const double h = fd_step(u[j]);
        Vec up = u, um = u;
        up[j] += h;
        um[j] -= h;
        gu(static_cast<Eigen::Index>(j)) = (sys.cost(x, up) - sys.cost(x, um)) / (2.0 * h);
    }
    return {gx, gu};
}

/// Central-difference Jacobians df/dx (n x n) and df/du (n x m).
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> dynamics_jacobians(const ControlSystem& sys, const Vec& x,
                                                                      const Vec& u) {
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto m = static_cast<Eigen::Index>(u.size());
    Eigen::MatrixXd fx(n, n);
    Eigen::MatrixXd fu(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = fd_step(x[static_cast<std::size_t>(i)]);
        Vec xp = x, xm = x;
        xp[static_cast<std::size_t>(i)] += h;
        xm[static_cast<std::size_t>(i)] -= h;
        const Vec d = (sys.f(xp, u) - sys.f(xm, u)) * (1.0 / (2.0 * h));
        for (Eigen::Index r = 0; r < n; ++r) fx(r, i) = d[static_cast<std::size_t>(r)];
    }
    for (Eigen::Index j = 0; j < m; ++j) {
        const double h = fd_step(u[static_cast<std::size_t>(j)]);
        Vec up = u, um = u;
        up[static_cast<std::size_t>(j)] += h;
        um[static_cast<std::size_t>(j)] -= h;
        const Vec d = (sys.f(x, up) - sys.f(x, um)) * (1.0 / (2.0 * h));
        for (Eigen::Index r = 0; r < n; ++r) fu(r, j) = d[static_cast<std::size_t>(r)];
    }
    return {fx, fu};
}

namespace detail {

/// Stationarity system for the multiplier nu of a linear storage at (x,u):
///   (I - beta f_x)^T nu = -grad_x l,   -beta f_u^T nu = -grad_u l.
struct StorageSystem {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
};

inline StorageSystem storage_system(const ControlSystem& sys, double beta, const Vec& x, const Vec& u) {
    const auto [gx, gu] = cost_gradients(sys, x, u);
    const auto [fx, fu] = dynamics_jacobians(sys, x, u);
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto m = static_cast<Eigen::Index>(u.size());
    StorageSystem s{Eigen::MatrixXd(n + m, n), Eigen::VectorXd(n + m)};
    s.A.topRows(n) = (Eigen::MatrixXd::Identity(n, n) - beta * fx).transpose();
    s.A.bottomRows(m) = -beta * fu.transpose();
    s.b.head(n) = -gx;
    s.b.tail(m) = -gu;
    return s;
}

inline Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    return A.completeOrthogonalDecomposition().solve(b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Equilibria
// ---------------------------------------------------------------------------

struct EquilibriumSearchOptions {
    /// Fixed-point tolerance of returned equilibria.
    double tol = kDefaultEquilibriumTol;
    /// Tolerance on the finite-difference stationarity residual.
    double stationarity_tol = 1e-7;
    /// Seeds are joint-grid pairs with |f(x,u) - x| below this; default: one state cell.
    std::optional<double> coarse_tol;
    std::size_t max_seeds = 2000;
    std::size_t max_iter = 200;
};

namespace detail {

/// The gamma*|u| part of the cost enters only through its subdifferential:
/// zero while |u_j| <= kink_tol, gamma*sign(u_j) otherwise. Finite differences
/// and the Jacobian see the smooth remainder.
struct KktProblem {
    ControlSystem smooth;
    double gamma;
    double kink_tol;
    double beta;
    std::size_t n;
    std::size_t m;

    KktProblem(const ControlSystem& sys, double discount, double tol)
        : smooth(sys), gamma(sys.abs_control_weight), kink_tol(tol), beta(discount), n(sys.state_dim()),
          m(sys.control_dim()) {
        if (gamma != 0.0) {
            smooth.stage_cost = [cost = sys.stage_cost, w = gamma](const Vec& x, const Vec& u) {
                double c = cost(x, u);
                for (std::size_t j = 0; j < u.size(); ++j) c -= w * std::abs(u[j]);
                return c;
            };
            smooth.abs_control_weight = 0.0;
        }
    }

    [[nodiscard]] Vec x_of(const Eigen::VectorXd& z) const {
        Vec x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = z(static_cast<Eigen::Index>(i));
        return x;
    }
    [[nodiscard]] Vec u_of(const Eigen::VectorXd& z) const {
        Vec u(m);
        for (std::size_t j = 0; j < m; ++j) u[j] = z(static_cast<Eigen::Index>(n + j));
        return u;
    }

    /// [f(x,u) - x; (I - beta f_x)^T nu + grad_x l; -beta f_u^T nu + grad_u l]
    [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& z) const {
        Eigen::VectorXd F = smooth_residual(z);
        if (gamma != 0.0) {
            for (std::size_t j = 0; j < m; ++j) {
                const double uj = z(static_cast<Eigen::Index>(n + j));
                if (std::abs(uj) > kink_tol) F(static_cast<Eigen::Index>(2 * n + j)) += gamma * (uj > 0 ? 1.0 : -1.0);
            }
        }
        return F;
    }

    [[nodiscard]] Eigen::VectorXd smooth_residual(const Eigen::VectorXd& z) const {
        const Vec x = x_of(z);
        const Vec u = u_of(z);
        const auto nn = static_cast<Eigen::Index>(n);
        const auto mm = static_cast<Eigen::Index>(m);
        const Eigen::VectorXd nu = z.tail(nn);
        const StorageSystem s = storage_system(smooth, beta, x, u);
        Eigen::VectorXd F(2 * nn + mm);
        const Vec d = smooth.f(x, u) - x;
        for (Eigen::Index i = 0; i < nn; ++i) F(i) = d[static_cast<std::size_t>(i)];
        F.tail(nn + mm) = s.A * nu - s.b;
        return F;
    }

    [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const {
        const Eigen::Index dim = z.size();
        Eigen::MatrixXd J(dim, dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
            const double h = 1e-5 * (1.0 + std::abs(z(k)));
            Eigen::VectorXd zp = z, zm = z;
            zp(k) += h;
            zm(k) -= h;
            J.col(k) = (smooth_residual(zp) - smooth_residual(zm)) / (2.0 * h);
        }
        return J;
    }
};

struct LmResult {
    Eigen::VectorXd z;
    bool converged = false;
};

/// Levenberg-Marquardt on the equilibrium/stationarity system. Once within
/// tolerance, steps continue while each one at least halves the residual.
inline LmResult solve_kkt(const KktProblem& p, Eigen::VectorXd z, const EquilibriumSearchOptions& opts) {
    const auto nn = static_cast<Eigen::Index>(p.n);
    const auto mm = static_cast<Eigen::Index>(p.m);
    auto done = [&](const Eigen::VectorXd& F) {
        return F.head(nn).norm() <= opts.tol && F.tail(nn + mm).norm() <= opts.stationarity_tol;
    };
    Eigen::VectorXd F = p.residual(z);
    double mu = 1e-3;
    std::size_t polish = 0;
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        if (done(F)) {
            if (++polish > 10) return {z, true};
            const Eigen::MatrixXd J = p.jacobian(z);
            const Eigen::VectorXd dz = J.colPivHouseholderQr().solve(-F);
            const Eigen::VectorXd Fn = p.residual(z + dz);
            if (!Fn.allFinite() || !(Fn.squaredNorm() <= 0.25 * F.squaredNorm())) return {z, true};
            z += dz;
            F = Fn;
            continue;
        }
        const Eigen::MatrixXd J = p.jacobian(z);
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * F;
        const Eigen::VectorXd scale = JtJ.diagonal().cwiseMax(1e-12);
        bool accepted = false;
        for (int tries = 0; tries < 40; ++tries) {
            Eigen::MatrixXd H = JtJ;
            H.diagonal() += mu * scale;
            const Eigen::VectorXd dz = H.ldlt().solve(-g);
            const Eigen::VectorXd zn = z + dz;
            const Eigen::VectorXd Fn = p.residual(zn);
            if (Fn.allFinite() && Fn.squaredNorm() < F.squaredNorm()) {
                z = zn;
                F = Fn;
                mu = std::max(mu / 3.0, 1e-15);
                accepted = true;
                break;
            }
            mu *= 4.0;
        }
        if (!accepted) break;
    }
    return {z, done(F)};
}

}  // namespace detail

/// Equilibria of f satisfying the stationarity conditions of an optimal
/// equilibrium for discount beta, sorted by stage cost (ties: lexicographic x).
inline std::vector<Equilibrium> find_equilibria(const ControlSystem& sys, double beta, const Grid& state_grid,
                                                const Grid& control_grid, const EquilibriumSearchOptions& opts = {}) {
    const std::size_t n = sys.state_dim();
    const std::size_t m = sys.control_dim();
    const double coarse = opts.coarse_tol.value_or(state_grid.cell_diameter());

    struct Seed {
        Vec x, u;
        double res;
    };
    std::vector<Seed> seeds;
    for (std::size_t i = 0; i < state_grid.size(); ++i) {
        const Vec x = state_grid.node(i);
        for (std::size_t j = 0; j < control_grid.size(); ++j) {
            const Vec u = control_grid.node(j);
            if (!sys.in_joint(x, u)) continue;
            const double r = distance(sys.f(x, u), x);
            if (r <= coarse) seeds.push_back({x, u, r});
        }
    }
    if (seeds.empty()) return {};
    if (seeds.size() > opts.max_seeds) {
        std::vector<Seed> thinned;
        const double stride = static_cast<double>(seeds.size()) / static_cast<double>(opts.max_seeds);
        for (std::size_t k = 0; k < opts.max_seeds; ++k)
            thinned.push_back(seeds[static_cast<std::size_t>(static_cast<double>(k) * stride)]);
        seeds = std::move(thinned);
    }

    const detail::KktProblem kkt(sys, beta, opts.tol);
    // Converged points closer than half a seed cell are one equilibrium; the
    // one with the smallest KKT residual represents it.
    std::vector<Equilibrium> found;
    std::vector<double> found_norm;
    const double merge = 0.5 * state_grid.cell_diameter();
    auto duplicate_of = [&](const Vec& x, const Vec& u) -> std::optional<std::size_t> {
        for (std::size_t k = 0; k < found.size(); ++k) {
            if (distance(found[k].x, x) + distance(found[k].u, u) <= std::max(merge, 1e-6 * (1.0 + x.norm()))) return k;
        }
        return std::nullopt;
    };
    const auto dim = static_cast<Eigen::Index>(2 * n + m);
    const Seed* best_failed = nullptr;
    double best_failed_norm = kInf;
    for (const auto& s : seeds) {
        Eigen::VectorXd z(dim);
        for (std::size_t i = 0; i < n; ++i) z(static_cast<Eigen::Index>(i)) = s.x[i];
        for (std::size_t j = 0; j < m; ++j) z(static_cast<Eigen::Index>(n + j)) = s.u[j];
        const auto st = detail::storage_system(sys, beta, s.x, s.u);
        z.tail(static_cast<Eigen::Index>(n)) = detail::solve_least_squares(st.A, st.b);
        const auto lm = detail::solve_kkt(kkt, z, opts);
        if (!lm.converged) {
            const double norm = kkt.residual(lm.z).norm();
            if (norm < best_failed_norm) {
                best_failed_norm = norm;
                best_failed = &s;
            }
            continue;
        }
        const Vec x = kkt.x_of(lm.z);
        const Vec u = kkt.u_of(lm.z);
        if (!sys.in_joint(x, u)) continue;
        const double norm = kkt.residual(lm.z).norm();
        const Equilibrium e{x, u, beta, sys.cost(x, u), distance(sys.f(x, u), x), true};
        if (const auto k = duplicate_of(x, u)) {
            if (norm < found_norm[*k]) {
                found[*k] = e;
                found_norm[*k] = norm;
            }
            continue;
        }
        found.push_back(e);
        found_norm.push_back(norm);
    }
    if (found.empty() && best_failed) {
        const auto& s = *best_failed;
        found.push_back({s.x, s.u, beta, sys.cost(s.x, s.u), s.res, false});
    }
    std::sort(found.begin(), found.end(), [](const Equilibrium& a, const Equilibrium& b) {
        if (a.stage_cost_value != b.stage_cost_value) return a.stage_cost_value < b.stage_cost_value;
        return a.x.lex_less(b.x);
    });
    return found;
}

// ---------------------------------------------------------------------------
// Storage synthesis
// ---------------------------------------------------------------------------

struct StorageSynthesis {
    StorageFunction storage;
    Vec nu;
    /// Residual of the overdetermined least-squares system.
    double residual = 0.0;
};

/// Linear storage lambda(x) = nu.(x - x^b) from the stationarity conditions
/// at the equilibrium. Throws StorageSynthesisFailed if no nu fits.
inline StorageSynthesis synthesize_linear_storage(const ControlSystem& sys, const Equilibrium& eq, double beta,
                                                  double tol = 1e-6) {
    const auto st = detail::storage_system(sys, beta, eq.x, eq.u);
    const Eigen::VectorXd nu = detail::solve_least_squares(st.A, st.b);
    const double residual = (st.A * nu - st.b).norm();
    if (!(residual <= tol)) {
        std::ostringstream os;
        os << "no linear storage satisfies the stationarity conditions at x=" << eq.x << " (residual " << residual
           << "); supply a storage function explicitly";
        throw StorageSynthesisFailed(os.str(), residual);
    }
    Vec nu_vec(eq.x.size());
    for (std::size_t i = 0; i < nu_vec.size(); ++i) nu_vec[i] = nu(static_cast<Eigen::Index>(i));
    return {StorageFunction::linear(nu_vec, eq.x, sys.state_box), nu_vec, residual};
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

enum class DissipativityVariant { state_only, state_control };

inline const char* to_string(DissipativityVariant v) {
    return v == DissipativityVariant::state_only ? "x" : "xu";
}

struct DissipativityViolation {
    Vec x;
    Vec u;
    double value = 0.0;
};

struct DissipativityReport {
    DissipativityVariant variant = DissipativityVariant::state_control;
    Box region;
    bool accepted = false;
    /// min over the verification grid of rotated cost - alpha_fit(deviation);
    /// for accepted reports only pairs with rotated cost above the roundoff
    /// floor enter.
    double margin = 0.0;
    ComparisonFunction alpha_fit;
    std::vector<DissipativityViolation> violations;
    std::size_t violation_count = 0;
    /// Pairs with rotated cost within the roundoff floor of 0 and farther than
    /// one cell from the zero-deviation set.
    std::size_t zero_breaches = 0;
    std::size_t pairs_checked = 0;
    /// inf of the rotated cost over all admissible pairs of Y.
    double ell_tilde_min = 0.0;
    Vec ell_tilde_argmin_x;
    Vec ell_tilde_argmin_u;
};

/// Rotated costs within this multiple of the magnitude of their terms count as zero.
inline constexpr double kRoundoffFloor = 1e-12;

struct VerificationOptions {
    std::size_t state_nodes = 201;
    std::size_t control_nodes = 201;
    /// Resolution of the scan of Y for ell_tilde_min.
    std::size_t global_state_nodes = 201;
    std::size_t max_listed_violations = 50;
};

inline double deviation(DissipativityVariant variant, const Equilibrium& eq, const Vec& x, const Vec& u) {
    const double dx = distance(x, eq.x);
    return variant == DissipativityVariant::state_only ? dx : dx + distance(u, eq.u);
}

namespace detail {

/// Grid scan of the rotated cost over admissible pairs, followed by a compass
/// search from the best node.
inline std::tuple<double, Vec, Vec> minimize_rotated_cost(const DiscountedProblem& problem, const Rotation& rot,
                                                          const Grid& xs, const Grid& us) {
    const auto& sys = problem.system;
    double best = kInf;
    Vec bx, bu;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Vec x = xs.node(i);
        for (std::size_t j = 0; j < us.size(); ++j) {
            const Vec u = us.node(j);
            if (!check_admissible(sys, x, u)) continue;
            const double v = rotated_cost_unchecked(problem, rot, x, u);
            if (v < best) {
                best = v;
                bx = x;
                bu = u;
            }
        }
    }
    if (best == kInf) return {best, bx, bu};
    const std::size_t n = bx.size();
    const std::size_t m = bu.size();
    std::vector<double> step(n + m);
    for (std::size_t a = 0; a < n; ++a) step[a] = xs.max_spacing(a);
    for (std::size_t b = 0; b < m; ++b) step[n + b] = us.max_spacing(b);
    for (int round = 0; round < 200; ++round) {
        bool improved = false;
        for (std::size_t k = 0; k < n + m; ++k) {
            for (double sgn : {-1.0, 1.0}) {
                Vec x = bx, u = bu;
                if (k < n) x[k] += sgn * step[k];
                else u[k - n] += sgn * step[k];
                if (!check_admissible(sys, x, u)) continue;
                const double v = rotated_cost_unchecked(problem, rot, x, u);
                if (v < best) {
                    best = v;
                    bx = x;
                    bu = u;
                    improved = true;
                }
            }
        }
        if (!improved) {
            for (double& s : step) s *= 0.5;
            if (*std::max_element(step.begin(), step.end()) < 1e-10) break;
        }
    }
    return {best, bx, bu};
}

}  // namespace detail

/// Checks the discounted strict dissipation inequality with supply rate
/// l(x,u) - l(x^b,u^b) on region x control box. Only pairs with f(x,u) in X
/// are considered.
inline DissipativityReport verify_dissipativity(const DiscountedProblem& problem, const Equilibrium& eq,
                                                const StorageFunction& storage, const Box& region,
                                                DissipativityVariant variant, const VerificationOptions& opts = {}) {
    const auto& sys = problem.system;
    if (!sys.state_box.contains_box(region)) throw RegionError("verification region must lie inside the state box");
    const Rotation rot{eq, storage};
    const Grid xs = Grid::uniform(region, opts.state_nodes);
    const Grid us = Grid::uniform(sys.control_box, opts.control_nodes);
    const double cell = variant == DissipativityVariant::state_only ? xs.cell_diameter()
                                                                   : xs.cell_diameter() + us.cell_diameter();
    DissipativityReport rep;
    rep.variant = variant;
    rep.region = region;

    struct Pair {
        double r, v, floor;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Vec x = xs.node(i);
        for (std::size_t j = 0; j < us.size(); ++j) {
            const Vec u = us.node(j);
            if (!check_admissible(sys, x, u)) continue;
            const Vec next = sys.f(x, u);
            const double v = rotated_cost_unchecked(problem, rot, x, u);
            const double floor = kRoundoffFloor * (1.0 + std::abs(sys.cost(x, u)) + std::abs(eq.stage_cost_value) +
                                                   std::abs(storage(x)) + problem.beta * std::abs(storage(next)));
            const double r = deviation(variant, eq, x, u);
            ++rep.pairs_checked;
            pairs.push_back({r, v, floor});
            if (v < -floor) {
                ++rep.violation_count;
                if (rep.violations.size() < opts.max_listed_violations) rep.violations.push_back({x, u, v});
            } else if (v <= floor && r > cell) {
                ++rep.zero_breaches;
            }
        }
    }
    rep.accepted = rep.pairs_checked > 0 && rep.violation_count == 0 && rep.zero_breaches == 0;

    if (rep.accepted) {
        std::vector<ComparisonSample> samples;
        samples.reserve(pairs.size());
        for (const auto& p : pairs) {
            if (p.v > p.floor) samples.push_back({p.r, p.v});
        }
        if (samples.empty()) {
            rep.accepted = false;
        } else {
            rep.alpha_fit = fit_comparison_lower(samples);
        }
    }
    rep.margin = kInf;
    for (const auto& p : pairs) {
        if (rep.accepted && p.v <= p.floor) continue;
        const double a = rep.alpha_fit.empty() ? 0.0 : rep.alpha_fit(p.r);
        rep.margin = std::min(rep.margin, p.v - a);
    }
    if (rep.margin == kInf) rep.margin = 0.0;

    const Grid ys = Grid::uniform(sys.state_box, opts.global_state_nodes);
    auto [mn, mx, mu] = detail::minimize_rotated_cost(problem, rot, ys, us);
    rep.ell_tilde_min = mn;
    rep.ell_tilde_argmin_x = mx;
    rep.ell_tilde_argmin_u = mu;
    return rep;
}

inline nlohmann::json vec_to_json(const Vec& v) { return nlohmann::json(std::vector<double>(v.begin(), v.end())); }

inline nlohmann::json to_json(const DissipativityReport& r) {
    nlohmann::json j;
    j["variant"] = to_string(r.variant);
    j["region"] = box_to_json(r.region);
    j["accepted"] = r.accepted;
    j["margin"] = r.margin;
    j["ell_tilde_min"] = r.ell_tilde_min;
    j["ell_tilde_argmin"] = {{"x", vec_to_json(r.ell_tilde_argmin_x)}, {"u", vec_to_json(r.ell_tilde_argmin_u)}};
    nlohmann::json bp = nlohmann::json::array();
    for (std::size_t i = 0; i < r.alpha_fit.radii().size(); ++i)
        bp.push_back({r.alpha_fit.radii()[i], r.alpha_fit.values()[i]});
    j["alpha_breakpoints"] = bp;
    nlohmann::json viol = nlohmann::json::array();
    for (const auto& v : r.violations) viol.push_back({{"x", vec_to_json(v.x)}, {"u", vec_to_json(v.u)}, {"value", v.value}});
    j["violations"] = viol;
    j["violation_count"] = r.violation_count;
    j["zero_breaches"] = r.zero_breaches;
    j["pairs_checked"] = r.pairs_checked;
    return j;
}

}  // namespace dtp
