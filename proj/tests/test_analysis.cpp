#include "pisim/analysis.hpp"
#include "pisim/engine.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pisim;

namespace
{
    ModelParams two_unit_servers(DistSpec arrival)
    {
        return make_model(std::move(arrival), {dist::Deterministic{1}, dist::Deterministic{1}});
    }

    TEST(Constants, EpsilonAndGamma)
    {
        const ModelParams p = two_unit_servers(dist::Categorical{{0, 2}, {0.25, 0.75}});
        ASSERT_DOUBLE_EQ(p.lambda, 1.5);
        const DriftConstants c = compute_constants(p);
        EXPECT_DOUBLE_EQ(c.epsilon0, 0.5);
        EXPECT_DOUBLE_EQ(c.epsilon, 0.125);
        EXPECT_DOUBLE_EQ(gamma_condition(p, 1.0), -0.75);
        EXPECT_DOUBLE_EQ(c.gamma, 1.0);
        EXPECT_TRUE(check_constants(p, c).empty());
    }

    TEST(Constants, Supercritical)
    {
        EXPECT_THROW(compute_constants(two_unit_servers(dist::Categorical{{0, 4}, {0.5, 0.5}})), Error);
        EXPECT_THROW(compute_constants(two_unit_servers(dist::Categorical{{0, 4}, {0.4, 0.6}})), Error);
    }

    TEST(Constants, InvariantsOnAssortedModels)
    {
        const std::vector<ModelParams> models{
            two_unit_servers(dist::Bernoulli{0.5, 1}),
            make_model(dist::Categorical{{0, 5, 6}, {0.02, 0.48, 0.50}},
                       {dist::Deterministic{1}, dist::Deterministic{1}, dist::Deterministic{1}, dist::UniformInt{1, 2},
                        dist::UniformInt{1, 2}}),
            make_model(dist::Poisson{2.0}, {dist::UniformInt{1, 3}, dist::UniformInt{1, 5}})};
        for (const ModelParams& p : models)
        {
            const DriftConstants c = compute_constants(p);
            EXPECT_TRUE(check_constants(p, c).empty());
            EXPECT_GT(c.gamma, 0.0);
            EXPECT_LE(c.gamma, 1.0);
            EXPECT_LT(gamma_condition(p, c.gamma), -2 * c.epsilon);
            const Real sm = static_cast<Real>(c.s_max);
            EXPECT_GT(c.u, sm * sm);
            // f is negative just beyond u / s_max and at a few points further out.
            for (const Real k : {1.0001L, 2.0L, 10.0L, 1000.0L})
                EXPECT_LT(drift_f(c, k * c.u / sm), 0);
            EXPECT_GT(c.C_setsize, c.u);
        }
    }

    TEST(Lyapunov, Values)
    {
        EXPECT_EQ(lyapunov(std::vector<Count>{0, 0, 0}, 0.5), 0.0);
        EXPECT_DOUBLE_EQ(lyapunov(std::vector<Count>{2, 3}, 1.0), 13.0);
        EXPECT_NEAR(lyapunov(std::vector<Count>{5}, 0.5), 11.1803398875, 1e-9);
    }

    TEST(Lyapunov, PowerDropMatchesDirectDifference)
    {
        for (const Real g : {0.05L, 0.5L, 1.0L})
            for (const Real q : {3.0L, 100.0L, 1e6L})
                for (const Real r : {0.0L, 1.0L, 2.0L, 50.0L})
                {
                    const Real direct = std::pow(std::max<Real>(q - r, 0), 1 + g) - std::pow(q, 1 + g);
                    EXPECT_NEAR(static_cast<double>(power_drop(q, r, g)), static_cast<double>(direct),
                                1e-12 * static_cast<double>(std::pow(q, 1 + g)) + 1e-15);
                }
    }

    TEST(Accumulator, MatchesTwoPassFormulas)
    {
        const std::vector<Real> xs{1, 4, 4, 9, 2, 7};
        Accumulator acc;
        Real sum = 0;
        for (const Real x : xs)
        {
            acc.add(x);
            sum += x;
        }
        const Real mean = sum / xs.size();
        Real ss = 0;
        for (const Real x : xs)
            ss += (x - mean) * (x - mean);
        const Estimate e = acc.estimate();
        EXPECT_NEAR(static_cast<double>(e.mean), static_cast<double>(mean), 1e-15);
        EXPECT_NEAR(static_cast<double>(e.stddev), std::sqrt(static_cast<double>(ss / 5)), 1e-12);
        EXPECT_NEAR(static_cast<double>(e.half_width), kZ99 * std::sqrt(static_cast<double>(ss / 5) / 6), 1e-12);
        EXPECT_EQ(below(e, 100), Verdict::Pass);
        EXPECT_EQ(below(e, -100), Verdict::Fail);
        EXPECT_EQ(below(e, e.mean), Verdict::Inconclusive);
    }

    struct Moments3
    {
        Accumulator delta, q_end, dl;
    };

    /// Episode statistics from the slot-by-slot simulator: run PI from `a`
    /// until the next slot with an idle server other than Last-Idle.
    Moments3 brute_episodes(const ModelParams& p, const BoundaryState& a, double gamma, int reps)
    {
        Moments3 m;
        std::vector<Count> q0;
        for (const Real v : a.q)
            q0.push_back(static_cast<Count>(v));
        for (int r = 0; r < reps; ++r)
        {
            Simulator sim(p, Router(PolicySpec{Family::PI, false, {}}), derive_seed(500, r), make_state(q0, a.li));
            Slot t = 0;
            while (true)
            {
                ++t;
                if (sim.step().is_sampling_event)
                    break;
            }
            const SystemState& s = sim.state();
            m.delta.add(static_cast<Real>(t));
            m.q_end.add(static_cast<Real>(s.q[s.li]));
            m.dl.add(static_cast<Real>(lyapunov(s.q, gamma) - lyapunov(q0, gamma)));
        }
        return m;
    }

    void expect_same_mean(const Estimate& a, const Estimate& b, const char* what)
    {
        const Real se = std::sqrt(a.stddev * a.stddev / a.count + b.stddev * b.stddev / b.count);
        EXPECT_LE(std::abs(static_cast<double>(a.mean - b.mean)), static_cast<double>(5 * se) + 1e-9)
            << what << ": " << static_cast<double>(a.mean) << " vs " << static_cast<double>(b.mean);
    }

    TEST(EpisodeSampler, AgreesWithSlotSimulation)
    {
        const ModelParams p = make_model(dist::Categorical{{0, 1, 2}, {0.3, 0.4, 0.3}},
                                         {dist::Deterministic{1}, dist::UniformInt{1, 3}, dist::Deterministic{1}});
        DriftConstants c;
        c.gamma = 1.0;
        const EpisodeSampler sampler(p, c);
        // Non-negative drift at the receiving server, then negative drift,
        // then two possible receivers.
        const std::vector<BoundaryState> states{
            {{0, 30, 45}, 1, "a"}, {{30, 0, 45}, 0, "b"}, {{0, 0, 60}, 2, "c"}, {{0, 12, 3}, 2, "d"}};
        for (const BoundaryState& a : states)
        {
            const int reps = 10000;
            const Moments3 brute = brute_episodes(p, a, 1.0, reps);
            Moments3 fast;
            for (int r = 0; r < reps; ++r)
            {
                Rng rng(derive_seed(900, r));
                const Episode e = sampler(a, rng);
                fast.delta.add(static_cast<Real>(e.delta));
                fast.q_end.add(static_cast<Real>(e.q_l_end));
                fast.dl.add(e.dL);
            }
            SCOPED_TRACE(a.label);
            expect_same_mean(brute.delta.estimate(), fast.delta.estimate(), "delta");
            expect_same_mean(brute.q_end.estimate(), fast.q_end.estimate(), "Q_l at the next sampling time");
            expect_same_mean(brute.dl.estimate(), fast.dl.estimate(), "dL");
        }
    }

    TEST(EpisodeSampler, ReflectedWalkBranchesAgree)
    {
        // Same walk through both evaluation methods via two models that differ
        // only in whether the arrival support is finite.
        const DistSpec cap = dist::UniformInt{1, 3};
        const DistSpec finite = dist::TruncatedPoisson{1.5, 40};
        const DistSpec infinite = dist::Poisson{1.5};
        const Sampler fa(finite), ia(infinite), cs(cap);
        const SumSampler fsum(finite), isum(infinite), csum(cap);
        for (const Count steps : {Count{5}, Count{200}, Count{5000}})
        {
            Accumulator forward, reversed;
            const int reps = steps > 1000 ? 3000 : 20000;
            for (int r = 0; r < reps; ++r)
            {
                Rng x(derive_seed(1, r)), y(derive_seed(2, r));
                reversed.add(static_cast<Real>(detail::reflected_walk(finite, cap, fa, cs, fsum, csum, -0.5, steps, x)));
                forward.add(static_cast<Real>(detail::reflected_walk(infinite, cap, ia, cs, isum, csum, -0.5, steps, y)));
            }
            SCOPED_TRACE(steps);
            expect_same_mean(forward.estimate(), reversed.estimate(), "reflected walk");
        }
    }

    TEST(Drift, DegenerateIntervalForUnitCapacities)
    {
        const ModelParams p = two_unit_servers(dist::Bernoulli{0.5, 1});
        const DriftConstants c = compute_constants(p);
        const Real M = std::ceil(c.C_setsize) + 10;
        const DriftReport r = estimate_drift(BoundaryState{{0, M}, 1, "x"}, p, c, 500, 1);
        EXPECT_EQ(r.dTau.mean, M);
        EXPECT_EQ(r.dTau.stddev, 0);
    }

    TEST(Drift, PassesOutsideFiniteSet)
    {
        const ModelParams p = two_unit_servers(dist::Bernoulli{0.5, 1});
        const DriftConstants c = compute_constants(p);
        const Real M = 10 * std::ceil(c.C_setsize);
        const DriftReport r = estimate_drift(BoundaryState{{0, M}, 1, "x"}, p, c, 10000, 2);
        EXPECT_EQ(r.verdict, Verdict::Pass);
        EXPECT_EQ(r.by_l.size(), 1u);
    }

    TEST(Drift, Preconditions)
    {
        const ModelParams p = two_unit_servers(dist::Bernoulli{0.5, 1});
        const DriftConstants c = compute_constants(p);
        const Real M = 2 * std::ceil(c.C_setsize);
        try
        {
            estimate_drift(BoundaryState{{0, 5}, 1, "x"}, p, c, 10, 1);
            FAIL() << "expected an error";
        }
        catch (const Error& e)
        {
            EXPECT_STREQ(e.what(), "state inside finite set");
        }
        EXPECT_THROW(estimate_drift(BoundaryState{{M, M}, 1, "x"}, p, c, 10, 1), Error);
        EXPECT_THROW(estimate_drift(BoundaryState{{0, M}, 0, "x"}, p, c, 10, 1), Error);
        EXPECT_THROW(check_rrw_bound(BoundaryState{{0, 5}, 1, "x"}, p, c, 10, 1), Error);
    }

    TEST(Rrw, NoArrivals)
    {
        const ModelParams p = two_unit_servers(dist::Deterministic{0});
        const DriftConstants c = compute_constants(p);
        const Real M = 2 * std::ceil(c.C_setsize);
        const RrwReport r = check_rrw_bound(BoundaryState{{0, M}, 1, "x"}, p, c, 1000, 3);
        EXPECT_EQ(r.lhs.mean, 0);
        EXPECT_TRUE(r.pass);
    }

    TEST(Rrw, NegativeDriftDeterministicCapacities)
    {
        const ModelParams p = two_unit_servers(dist::Bernoulli{0.5, 1});
        const DriftConstants c = compute_constants(p);
        const Real M = 2 * std::ceil(c.C_setsize);
        const RrwReport r = check_rrw_bound(BoundaryState{{M, 0}, 0, "x"}, p, c, 10000, 4);
        EXPECT_TRUE(r.pass);
        EXPECT_LT(r.lhs.mean, 10);
    }

    TEST(Rrw, HeavyLoadMarginPositive)
    {
        const ModelParams p = two_unit_servers(dist::Categorical{{0, 2}, {0.25, 0.75}});
        const DriftConstants c = compute_constants(p);
        const Real M = 2 * std::ceil(c.C_setsize);
        const RrwReport r = check_rrw_bound(BoundaryState{{0, M}, 1, "x"}, p, c, 10000, 5);
        EXPECT_GT(r.rhs.mean - r.lhs.mean, 0);
        EXPECT_TRUE(r.pass);
    }

    ModelParams three_servers(DistSpec arrival)
    {
        return make_model(std::move(arrival), {dist::Deterministic{1}, dist::UniformInt{1, 2}, dist::UniformInt{1, 3}});
    }

    TEST(PiSplit, LargeQueueLightLoad)
    {
        const ModelParams p = three_servers(dist::Bernoulli{0.3, 1});
        const DriftConstants c = compute_constants(p);
        const Real M = 2 * std::ceil(c.C_setsize);
        const SplitReport r = check_pisplit_onestep(BoundaryState{{0, 0, M}, 2, "x"}, p, c, 10000, 6);
        EXPECT_TRUE(r.pass);
        EXPECT_LT(r.analytic_bound, 0);
    }

    TEST(PiSplit, NoArrivalsAlwaysDecreases)
    {
        const ModelParams p = three_servers(dist::Deterministic{0});
        const DriftConstants c = compute_constants(p);
        const Real M = 2 * std::ceil(c.C_setsize);
        const SplitReport r = check_pisplit_onestep(BoundaryState{{0, 0, M}, 2, "x"}, p, c, 2000, 7);
        // Every replicate is (M - s)^(1+g) - M^(1+g) with s in {1,2,3}.
        const Real g = c.gamma;
        EXPECT_LE(r.dL.hi(), power_drop(M, 1, g) + 1e-6L * std::abs(power_drop(M, 1, g)));
        EXPECT_GE(r.dL.lo(), power_drop(M, 3, g) - 1e-6L * std::abs(power_drop(M, 3, g)));
        EXPECT_TRUE(r.pass);
    }

    TEST(PiSplit, Preconditions)
    {
        const ModelParams p = three_servers(dist::Bernoulli{0.3, 1});
        const DriftConstants c = compute_constants(p);
        const Real M = 2 * std::ceil(c.C_setsize);
        EXPECT_THROW(check_pisplit_onestep(BoundaryState{{0, 0, 2}, 2, "x"}, p, c, 10, 1), Error);
        EXPECT_THROW(check_pisplit_onestep(BoundaryState{{0, M, M}, 1, "x"}, p, c, 10, 1), Error);
        EXPECT_THROW(check_pisplit_onestep(BoundaryState{{0, 0, M}, 0, "x"}, p, c, 10, 1), Error);
    }

    TEST(Catalog, StatesSatisfyPreconditions)
    {
        const std::vector<ModelParams> models{
            two_unit_servers(dist::Bernoulli{0.5, 1}),
            make_model(dist::Categorical{{0, 3, 4}, {0.02, 0.92, 0.06}},
                       {dist::Deterministic{1}, dist::Deterministic{1}, dist::Deterministic{1}, dist::UniformInt{1, 2},
                        dist::UniformInt{1, 2}})};
        for (const ModelParams& p : models)
        {
            const DriftConstants c = compute_constants(p);
            const auto drift = drift_catalog(p, c);
            EXPECT_GE(drift.size(), 6u);
            for (const BoundaryState& s : drift)
            {
                EXPECT_NO_THROW(require_outside(s, p, c)) << s.label;
                EXPECT_NO_THROW(require_boundary(s)) << s.label;
            }
            for (const BoundaryState& s : split_catalog(p, c))
            {
                EXPECT_NO_THROW(require_outside(s, p, c)) << s.label;
                EXPECT_GE(s.zeros_off_li(), 2u) << s.label;
            }
            EXPECT_EQ(split_catalog(p, c).empty(), p.n < 3);
        }
    }

    TEST(Json, ReportFields)
    {
        const ModelParams p = two_unit_servers(dist::Bernoulli{0.5, 1});
        const DriftConstants c = compute_constants(p);
        const Real M = 2 * std::ceil(c.C_setsize);
        const auto j = to_json(estimate_drift(BoundaryState{{0, M}, 1, "x"}, p, c, 50, 1));
        for (const char* key : {"state", "reps", "seed", "mean_dL", "mean_dTau", "margin", "verdict", "margin_by_l"})
            EXPECT_TRUE(j.contains(key)) << key;
        EXPECT_EQ(j["state"]["li"], 2);
        EXPECT_EQ(j["margin"]["ci99"].size(), 2u);
        EXPECT_TRUE(json_number(1e4000L).is_string());
        EXPECT_TRUE(to_json(c).contains("C_setsize"));
    }
} // namespace
