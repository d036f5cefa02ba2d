#include <gtest/gtest.h>

#include <cmath>

#include "dtp/dissipativity.hpp"
#include "dtp/grid_dp.hpp"
#include "support.hpp"

using namespace dtp;

namespace {

std::vector<Equilibrium> equilibria_of(const ControlSystem& s, double beta) {
    return find_equilibria(s, beta, Grid::uniform(s.state_box, 201), Grid::uniform(s.control_box, 201));
}

StorageFunction minus_x_squared(const ControlSystem& s) {
    return StorageFunction::quadratic_diagonal(Vec{-1.0}, Vec{0.0}, s.state_box);
}

DissipativityReport verify_example3(double beta, DissipativityVariant variant = DissipativityVariant::state_control) {
    const auto s = test::example(3);
    const DiscountedProblem p(s, beta);
    return verify_dissipativity(p, make_equilibrium(s, beta, Vec{0.0}, Vec{0.0}), minus_x_squared(s), s.state_box,
                                variant);
}

/// Dense scan of -x^2/2 + u^2 - x^2 + beta (2x+u)^2 over admissible pairs of example 3.
double example3_rotated_inf(double beta) {
    double best = kInf;
    for (int i = 0; i <= 2000; ++i) {
        const double x = -1.0 + i / 1000.0;
        for (int j = 0; j <= 6000; ++j) {
            const double u = -3.0 + j / 1000.0;
            const double y = 2.0 * x + u;
            if (std::abs(y) > 1.0) continue;
            best = std::min(best, -1.5 * x * x + u * u + beta * y * y);
        }
    }
    return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// find_equilibria
// ---------------------------------------------------------------------------

// The |u| term is not differentiable at u = 0; the search must still land on
// the stationary points of l(., 0) and report each once.
TEST(FindEquilibria, Example2KinkedControlCostKeepsExample1Equilibria) {
    for (double gamma : {1.0, 10.0}) {
        for (double beta : {0.7, 0.99}) {
            const auto eqs = equilibria_of(test::example(2, gamma), beta);
            ASSERT_EQ(eqs.size(), 3u) << gamma << " " << beta;
            EXPECT_NEAR(eqs[0].x[0], test::x_global(), 1e-6);
            EXPECT_NEAR(eqs[1].x[0], test::x_local(), 1e-6);
            EXPECT_NEAR(eqs[2].x[0], 0.0, 1e-6);
            for (const auto& e : eqs) EXPECT_NEAR(e.u[0], 0.0, 1e-12);
        }
    }
}

TEST(FindEquilibria, Example1HasThreeSortedByCost) {
    const auto eqs = equilibria_of(test::example(1), 0.6);
    ASSERT_EQ(eqs.size(), 3u);
    EXPECT_NEAR(eqs[0].x[0], test::x_global(), 1e-7);
    EXPECT_NEAR(eqs[1].x[0], test::x_local(), 1e-7);
    EXPECT_NEAR(eqs[2].x[0], 0.0, 1e-7);
    for (const auto& e : eqs) {
        EXPECT_NEAR(e.u[0], 0.0, 1e-7);
        EXPECT_TRUE(e.refined);
        EXPECT_LE(e.residual, 1e-8);
    }
    EXPECT_LT(eqs[0].stage_cost_value, eqs[1].stage_cost_value);
    EXPECT_LT(eqs[1].stage_cost_value, eqs[2].stage_cost_value);
}

TEST(FindEquilibria, Example3PicksTheCheapestPointOfTheManifold) {
    const auto eqs = equilibria_of(test::example(3), 0.7);
    ASSERT_FALSE(eqs.empty());
    EXPECT_NEAR(eqs[0].x[0], 0.0, 1e-6);
    EXPECT_NEAR(eqs[0].u[0], 0.0, 1e-6);
}

TEST(FindEquilibria, QuadraticIntegratorHasOnlyTheOrigin) {
    const auto s = test::scalar_system([](const Vec& x, const Vec& u) { return Vec{x[0] + u[0]}; },
                                       [](const Vec& x, const Vec& u) { return x[0] * x[0] + u[0] * u[0]; },
                                       {-1.0, 1.0}, {-1.0, 1.0});
    const auto eqs = equilibria_of(s, 0.5);
    ASSERT_EQ(eqs.size(), 1u);
    EXPECT_NEAR(eqs[0].x[0], 0.0, 1e-7);
    EXPECT_NEAR(eqs[0].u[0], 0.0, 1e-7);
}

TEST(FindEquilibria, NoFixedPointGivesEmptyList) {
    const auto s = test::scalar_system([](const Vec& x, const Vec& u) { return Vec{0.5 * x[0] + u[0] + 0.9}; },
                                       [](const Vec&, const Vec&) { return 0.0; }, {-1.0, 1.0}, {0.0, 0.05});
    EXPECT_TRUE(equilibria_of(s, 0.5).empty());
}

TEST(FindEquilibria, ResultsAreFixedPointsOnRecheck) {
    for (int ex : {1, 3}) {
        const auto s = test::example(ex);
        for (double beta : {0.3, 0.6, 0.9}) {
            for (const auto& e : equilibria_of(s, beta)) {
                EXPECT_LE(distance(s.f(e.x, e.u), e.x), 1e-8);
                EXPECT_TRUE(s.in_joint(e.x, e.u));
                EXPECT_EQ(e.stage_cost_value, s.cost(e.x, e.u));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// synthesize_linear_storage
// ---------------------------------------------------------------------------

TEST(LinearStorage, Example1MultiplierVanishesAtBothMinima) {
    const auto s = test::example(1);
    for (double beta : {0.3, 0.5, 0.7, 0.9}) {
        const auto eqs = equilibria_of(s, beta);
        ASSERT_GE(eqs.size(), 2u);
        for (std::size_t k = 0; k < 2; ++k) {
            const auto st = synthesize_linear_storage(s, eqs[k], beta);
            EXPECT_LE(std::abs(st.nu[0]), 1e-6) << beta;
            EXPECT_EQ(st.storage(eqs[k].x), 0.0);
        }
    }
}

TEST(LinearStorage, QuadraticIntegrator) {
    const auto s = test::scalar_system([](const Vec& x, const Vec& u) { return Vec{x[0] + u[0]}; },
                                       [](const Vec& x, const Vec& u) { return x[0] * x[0] + u[0] * u[0]; },
                                       {-1.0, 1.0}, {-1.0, 1.0});
    const auto st = synthesize_linear_storage(s, make_equilibrium(s, 0.5, Vec{0.0}, Vec{0.0}), 0.5);
    EXPECT_LE(std::abs(st.nu[0]), 1e-8);
    EXPECT_LE(st.residual, 1e-8);
}

// l = x + u with f = x: the conditions 1 + nu(1-beta) = 0 and 1 = 0 cannot both hold.
TEST(LinearStorage, InconsistentConditionsFail) {
    const auto s = test::scalar_system([](const Vec& x, const Vec&) { return x; },
                                       [](const Vec& x, const Vec& u) { return x[0] + u[0]; }, {-1.0, 1.0},
                                       {-1.0, 1.0});
    try {
        (void)synthesize_linear_storage(s, make_equilibrium(s, 0.5, Vec{0.0}, Vec{0.0}), 0.5);
        FAIL() << "expected StorageSynthesisFailed";
    } catch (const StorageSynthesisFailed& e) {
        EXPECT_NEAR(e.residual(), 1.0, 1e-6);
        EXPECT_NE(std::string(e.what()).find("supply a storage"), std::string::npos);
    }
}

TEST(LinearStorage, NonzeroMultiplierMatchesClosedForm) {
    // f = x + u, l = x + u^2 at (0,0): 1 + nu(1-beta) = 0 and 0 = -beta nu * 1 fails unless nu = 0,
    // so use f = x with l = x: nu = -1/(1-beta).
    const auto s = test::scalar_system([](const Vec& x, const Vec&) { return x; },
                                       [](const Vec& x, const Vec& u) { return x[0] + u[0] * u[0]; }, {-1.0, 1.0},
                                       {-1.0, 1.0});
    const double beta = 0.75;
    const auto st = synthesize_linear_storage(s, make_equilibrium(s, beta, Vec{0.2}, Vec{0.0}), beta);
    EXPECT_NEAR(st.nu[0], -1.0 / (1.0 - beta), 1e-6);
    EXPECT_NEAR(st.storage(Vec{0.7}), -0.5 / (1.0 - beta), 1e-6);
}

// ---------------------------------------------------------------------------
// verify_dissipativity
// ---------------------------------------------------------------------------

TEST(VerifyDissipativity, Example3AcceptedAboveThreshold) {
    const auto r = verify_example3(0.7);
    EXPECT_TRUE(r.accepted);
    EXPECT_EQ(r.violation_count, 0u);
    EXPECT_GE(r.margin, -1e-10);
    EXPECT_NEAR(r.ell_tilde_min, 0.0, 1e-12);
    EXPECT_GT(r.alpha_fit(1.0), 0.0);
    EXPECT_NEAR(r.alpha_fit(1.0), 0.04432, 1e-9);
}

TEST(VerifyDissipativity, Example3RejectedBelowThreshold) {
    const double beta = 0.55;
    const auto r = verify_example3(beta);
    EXPECT_FALSE(r.accepted);
    EXPECT_GT(r.violation_count, 0u);
    EXPECT_FALSE(r.violations.empty());
    for (const auto& v : r.violations) EXPECT_LT(v.value, 0.0);
    // Unconstrained in u the rotated cost is x^2 (5/2 - 4/(1+beta)) < 0 ...
    EXPECT_LT(2.5 - 4.0 / (1.0 + beta), 0.0);
    // ... and with |2x+u| <= 1 the infimum is 1 + beta - 8/5 at x = 4/5.
    const double inf = example3_rotated_inf(beta);
    EXPECT_NEAR(inf, 1.0 + beta - 1.6, 1e-6);
    EXPECT_NEAR(r.ell_tilde_min, inf, 1e-6);
}

TEST(VerifyDissipativity, Example1LocalCertificate) {
    const auto s = test::example(1);
    const double beta = 0.6;
    const DiscountedProblem p(s, beta);
    const auto eqs = equilibria_of(s, beta);
    const auto& el = eqs[1];
    const auto st = synthesize_linear_storage(s, el, beta);
    const auto r = verify_dissipativity(p, el, st.storage, Box{{-1.2, -0.5}}, DissipativityVariant::state_control);
    EXPECT_TRUE(r.accepted);
    EXPECT_NEAR(r.ell_tilde_min, -0.4154, 0.005);
    EXPECT_NEAR(r.ell_tilde_argmin_x[0], test::x_global(), 0.01);
    EXPECT_NEAR(r.ell_tilde_min, test::ell1(test::x_global()) - test::ell1(test::x_local()), 1e-6);
    const auto r_whole = verify_dissipativity(p, el, st.storage, s.state_box, DissipativityVariant::state_control);
    EXPECT_FALSE(r_whole.accepted);
}

// l does not depend on u, so with lambda = 0 the rotated cost vanishes on
// {x_l} x U and the (x,u) certificate fails once x_l is a grid node.
TEST(VerifyDissipativity, Example1ControlDeviationIsNotPenalized) {
    const auto s = test::example(1);
    const DiscountedProblem p(s, 0.6);
    const Equilibrium el{Vec{test::x_local()}, Vec{0.0}, 0.6, test::ell1(test::x_local()), 0.0, true};
    const Box centered{{test::x_local() - 0.2, test::x_local() + 0.2}};
    const auto xu = verify_dissipativity(p, el, StorageFunction::zero(el.x), centered, DissipativityVariant::state_control);
    EXPECT_FALSE(xu.accepted);
    EXPECT_GT(xu.zero_breaches, 0u);
    EXPECT_EQ(xu.violation_count, 0u);
    const auto x = verify_dissipativity(p, el, StorageFunction::zero(el.x), centered, DissipativityVariant::state_only);
    EXPECT_TRUE(x.accepted);
}

TEST(VerifyDissipativity, StateOnlyVariantOnExample1) {
    const auto s = test::example(1);
    const DiscountedProblem p(s, 0.6);
    const auto el = equilibria_of(s, 0.6)[1];
    const auto r = verify_dissipativity(p, el, StorageFunction::zero(el.x), Box{{-1.2, -0.5}},
                                        DissipativityVariant::state_only);
    EXPECT_TRUE(r.accepted);
    EXPECT_EQ(r.variant, DissipativityVariant::state_only);
    EXPECT_GE(r.margin, -1e-10);
}

TEST(VerifyDissipativity, RegionOutsideTheStateBoxIsAnError) {
    const auto s = test::example(3);
    const DiscountedProblem p(s, 0.7);
    EXPECT_THROW(verify_dissipativity(p, make_equilibrium(s, 0.7, Vec{0.0}, Vec{0.0}), minus_x_squared(s),
                                      Box{{-2.0, 0.0}}, DissipativityVariant::state_control),
                 RegionError);
}

TEST(VerifyDissipativity, ZeroCostAwayFromTheEquilibriumIsRejected) {
    // l = 0, f = x: every pair has zero rotated cost, so positive definiteness fails.
    const auto s = test::scalar_system([](const Vec& x, const Vec&) { return x; },
                                       [](const Vec&, const Vec&) { return 0.0; }, {-1.0, 1.0}, {-1.0, 1.0});
    const DiscountedProblem p(s, 0.5);
    const auto r = verify_dissipativity(p, make_equilibrium(s, 0.5, Vec{0.0}, Vec{0.0}), StorageFunction::zero(Vec{0.0}),
                                        s.state_box, DissipativityVariant::state_control);
    EXPECT_FALSE(r.accepted);
    EXPECT_EQ(r.violation_count, 0u);
    EXPECT_GT(r.zero_breaches, 0u);
}

TEST(VerifyDissipativity, JsonFields) {
    const auto j = to_json(verify_example3(0.7));
    for (const char* key : {"variant", "region", "margin", "ell_tilde_min", "alpha_breakpoints", "violations"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["variant"], "xu");
    EXPECT_TRUE(j["accepted"].get<bool>());
}

TEST(UpperFit, Example3RotatedValueNearTheOrigin) {
    const auto s = test::example(3);
    const double beta = 0.7;
    const DiscountedProblem p(s, beta);
    const Rotation rot{make_equilibrium(s, beta, Vec{0.0}, Vec{0.0}), minus_x_squared(s)};
    const auto V = value_iteration(p, Grid::uniform(s.state_box, 401), Grid::uniform(s.control_box, 601),
                                   CostSelector{rot});
    std::vector<ComparisonSample> samples;
    for (std::size_t i = 0; i < V.grid.size(); ++i) {
        const double x = V.grid.node(i)[0];
        if (std::abs(x) <= 0.5 + 1e-12) samples.push_back({std::abs(x), std::abs(V.values[i])});
    }
    const auto g = fit_comparison_upper(samples);
    EXPECT_GE(g(0.5), std::abs(V(Vec{0.5})));
    EXPECT_GE(g(0.5), std::abs(V(Vec{-0.5})));
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

TEST(DissipativityProperties, Example3AcceptanceFlipsOnceNearThreeFifths) {
    std::vector<bool> acc;
    std::vector<double> betas;
    for (int k = 0; k <= 40; ++k) {
        betas.push_back(0.5 + 0.005 * k);
        acc.push_back(verify_example3(betas.back()).accepted);
    }
    int flips = 0;
    double at = 0.0;
    for (std::size_t k = 1; k < acc.size(); ++k) {
        if (acc[k] != acc[k - 1]) {
            ++flips;
            at = betas[k];
        }
    }
    EXPECT_EQ(flips, 1);
    EXPECT_FALSE(acc.front());
    EXPECT_TRUE(acc.back());
    EXPECT_NEAR(at, 0.6, 0.005 + 1e-12);
}

TEST(DissipativityProperties, AcceptedReportsHaveNonnegativeMargin) {
    test::Gen gen(61);
    for (int trial = 0; trial < 12; ++trial) {
        const double beta = gen.uniform(0.6, 0.95);
        const auto r = verify_example3(beta, trial % 2 ? DissipativityVariant::state_only
                                                        : DissipativityVariant::state_control);
        ASSERT_TRUE(r.accepted) << beta;
        EXPECT_GE(r.margin, -1e-10) << beta;
    }
    const auto s1 = test::example(1);
    for (int trial = 0; trial < 6; ++trial) {
        const double beta = gen.uniform(0.2, 0.9);
        const DiscountedProblem p(s1, beta);
        const Equilibrium el{Vec{test::x_local()}, Vec{0.0}, beta, test::ell1(test::x_local()), 0.0, true};
        const double half = gen.uniform(0.1, 0.3);
        const auto r = verify_dissipativity(p, el, StorageFunction::zero(el.x),
                                            Box{{test::x_local() - half, test::x_local() + half}},
                                            DissipativityVariant::state_only);
        ASSERT_TRUE(r.accepted) << beta;
        EXPECT_GE(r.margin, -1e-10) << beta;
    }
}

TEST(DissipativityProperties, RotatedCostIsAtLeastTheFit) {
    const auto s = test::example(3);
    const double beta = 0.8;
    const DiscountedProblem p(s, beta);
    const auto eq = make_equilibrium(s, beta, Vec{0.0}, Vec{0.0});
    const auto lam = minus_x_squared(s);
    const auto r = verify_dissipativity(p, eq, lam, s.state_box, DissipativityVariant::state_control);
    ASSERT_TRUE(r.accepted);
    const Grid xs = Grid::uniform(s.state_box, 201);
    const Grid us = Grid::uniform(s.control_box, 201);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 0; j < us.size(); ++j) {
            const Vec x = xs.node(i);
            const Vec u = us.node(j);
            if (!check_admissible(s, x, u)) continue;
            const double lt = evaluate_rotated_cost(p, eq, lam, x, u);
            ASSERT_GE(lt - r.alpha_fit(deviation(DissipativityVariant::state_control, eq, x, u)), -1e-10);
        }
    }
}
