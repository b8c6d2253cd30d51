#include "pisim/stochastic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

using namespace pisim;

namespace
{
    // Reference values from an independent Python transcription of
    // splitmix64 / xoshiro256** (including the jump polynomial).
    TEST(Rng, SplitmixReference)
    {
        std::uint64_t s = 0;
        EXPECT_EQ(splitmix64(s), 0xe220a8397b1dcdafULL);
    }

    TEST(Rng, XoshiroReferenceSequence)
    {
        Rng r(0);
        EXPECT_EQ(r(), 0x99ec5f36cb75f2b4ULL);
        EXPECT_EQ(r(), 0xbf6e1f784956452aULL);
        EXPECT_EQ(r(), 0x1a5f849d4933e6e0ULL);
    }

    TEST(Rng, JumpReference)
    {
        Rng r(12345);
        r.jump();
        EXPECT_EQ(r(), 0x3ed575283f0594e6ULL);
        EXPECT_EQ(r(), 0x4b77bcfa88a79146ULL);
    }

    TEST(Rng, BoundedStaysInRangeAndMatchesWordIndex)
    {
        Rng r(3);
        for (std::uint64_t range : {1ULL, 2ULL, 3ULL, 7ULL, 1000ULL, (1ULL << 63) + 5})
        {
            for (int k = 0; k < 200; ++k)
            {
                const auto [idx, word] = r.bounded_draw(range);
                ASSERT_LT(idx, range);
                if (range < (1ULL << 32))
                {
                    EXPECT_EQ(idx, index_from_word(word, static_cast<std::size_t>(range)));
                }
            }
        }
    }

    TEST(Rng, StreamsAreDistinctAndReproducible)
    {
        RngStreams a(9, 4), b(9, 4);
        std::set<std::uint64_t> firsts{a.arrival()(), a.tie_break()(), a.policy_choice()()};
        for (std::size_t i = 0; i < 4; ++i)
            firsts.insert(a.capacity(i)());
        EXPECT_EQ(firsts.size(), 7u);
        EXPECT_EQ(b.arrival()(), RngStreams(9, 4).arrival()());
        // Capacity stream i does not depend on the number of servers.
        EXPECT_EQ(RngStreams(9, 2).capacity(1)(), RngStreams(9, 8).capacity(1)());
    }

    TEST(Rng, DeriveSeedSpreads)
    {
        std::set<std::uint64_t> seen;
        for (std::uint64_t i = 0; i < 1000; ++i)
            seen.insert(derive_seed(1, i));
        EXPECT_EQ(seen.size(), 1000u);
        EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
    }

    TEST(Moments, ClosedForms)
    {
        const Moments u = moments(dist::UniformInt{1, 19});
        EXPECT_DOUBLE_EQ(u.mean, 10.0);
        EXPECT_DOUBLE_EQ(u.variance, 30.0);
        const Moments d = moments(dist::Deterministic{5});
        EXPECT_DOUBLE_EQ(d.mean, 5.0);
        EXPECT_DOUBLE_EQ(d.variance, 0.0);
        const Moments p = moments(dist::Poisson{0.7});
        EXPECT_DOUBLE_EQ(p.mean, 0.7);
        EXPECT_DOUBLE_EQ(p.variance, 0.7);
        const Moments b = moments(dist::Bernoulli{0.25, 4});
        EXPECT_DOUBLE_EQ(b.mean, 1.0);
        EXPECT_DOUBLE_EQ(b.variance, 3.0);
        const Moments c = moments(dist::Categorical{{0, 2}, {0.5, 0.5}});
        EXPECT_DOUBLE_EQ(c.mean, 1.0);
        EXPECT_DOUBLE_EQ(c.variance, 1.0);
    }

    TEST(Moments, TruncatedPoissonMatchesDirectSum)
    {
        const double rate = 3.0;
        const Count cap = 5;
        double mean = 0, second = 0, below = 0;
        for (Count k = 0; k < cap; ++k)
        {
            const double p = std::exp(-rate + k * std::log(rate) - std::lgamma(k + 1.0));
            mean += k * p;
            second += double(k * k) * p;
            below += p;
        }
        mean += cap * (1 - below);
        second += double(cap * cap) * (1 - below);
        const Moments m = moments(dist::TruncatedPoisson{rate, cap});
        EXPECT_NEAR(m.mean, mean, 1e-12);
        EXPECT_NEAR(m.variance, second - mean * mean, 1e-12);
    }

    TEST(Sample, Deterministic)
    {
        Rng r(1);
        EXPECT_EQ(sample(dist::Deterministic{3}, r), 3);
    }

    TEST(Sample, UniformFrequencies)
    {
        Rng r(11);
        const Sampler s(dist::UniformInt{1, 6});
        std::map<Count, int> h;
        const int draws = 600000;
        for (int k = 0; k < draws; ++k)
            ++h[s(r)];
        ASSERT_EQ(h.size(), 6u);
        double chi2 = 0;
        for (const auto& [v, c] : h)
        {
            EXPECT_GE(v, 1);
            EXPECT_LE(v, 6);
            chi2 += std::pow(c - draws / 6.0, 2) / (draws / 6.0);
        }
        // 5 degrees of freedom, 0.999 quantile.
        EXPECT_LT(chi2, 20.52);
    }

    TEST(Sample, PoissonMoments)
    {
        for (const double rate : {0.7, 12.0, 275.0})
        {
            Rng r(5);
            const Sampler s(dist::Poisson{rate});
            double sum = 0, sq = 0;
            const int draws = 200000;
            for (int k = 0; k < draws; ++k)
            {
                const double x = static_cast<double>(s(r));
                sum += x;
                sq += x * x;
            }
            const double mean = sum / draws;
            const double var = sq / draws - mean * mean;
            EXPECT_NEAR(mean, rate, 5 * std::sqrt(rate / draws));
            EXPECT_NEAR(var / rate, 1.0, 0.03);
        }
    }

    TEST(Sample, PoissonZeroProbability)
    {
        Rng r(8);
        const Sampler s(dist::Poisson{0.7});
        int zeros = 0;
        const int draws = 400000;
        for (int k = 0; k < draws; ++k)
            zeros += s(r) == 0 ? 1 : 0;
        const double p = std::exp(-0.7);
        EXPECT_NEAR(zeros / double(draws), p, 5 * std::sqrt(p * (1 - p) / draws));
    }

    TEST(Sample, SumMatchesMoments)
    {
        const DistSpec d = dist::Categorical{{0, 3, 4}, {0.02, 0.92, 0.06}};
        const Moments m = moments(d);
        const SumSampler fast(d);
        Rng r(21);
        const Count k = 50;
        double a = 0, b = 0, sqa = 0;
        const int draws = 40000;
        for (int i = 0; i < draws; ++i)
        {
            const double x = static_cast<double>(sample_sum(d, k, r));
            a += x;
            sqa += x * x;
            b += static_cast<double>(fast(k, r));
        }
        const double se = std::sqrt(k * m.variance / draws);
        EXPECT_NEAR(a / draws, k * m.mean, 5 * se);
        EXPECT_NEAR(b / draws, k * m.mean, 5 * se);
        EXPECT_NEAR(sqa / draws - std::pow(a / draws, 2), k * m.variance, 0.05 * k * m.variance);
    }

    TEST(TieBreak, Singleton)
    {
        Rng r(2);
        EXPECT_EQ(tie_break_uniform(std::vector<std::size_t>{4}, r), 4u);
    }

    TEST(TieBreak, ChiSquareUniform)
    {
        Rng r(17);
        const std::vector<std::size_t> cands{2, 5, 7, 9, 11};
        std::map<std::size_t, int> h;
        const int draws = 500000;
        for (int k = 0; k < draws; ++k)
            ++h[tie_break_uniform(cands, r)];
        double chi2 = 0;
        for (const auto c : cands)
            chi2 += std::pow(h[c] - draws / 5.0, 2) / (draws / 5.0);
        EXPECT_EQ(h.size(), 5u);
        // 4 degrees of freedom, 0.999 quantile.
        EXPECT_LT(chi2, 18.47);
    }

    TEST(TieBreak, EmptyIsAnError)
    {
        Rng r(2);
        EXPECT_THROW(draw_tie(0, r), std::logic_error);
    }

    TEST(Dist, ParseRoundTrip)
    {
        for (const char* text : {"det(3)", "uniform(1,19)", "poisson(0.7)", "bernoulli(0.5,2)", "tpoisson(2.5,30)",
                                 "categorical(0:0.25,1:0.75)"})
        {
            const DistSpec d = parse_dist(text);
            const DistSpec again = parse_dist(to_string(d));
            EXPECT_EQ(moments(d).mean, moments(again).mean) << text;
            EXPECT_EQ(support_max(d), support_max(again)) << text;
        }
        EXPECT_THROW(parse_dist("uniform(3)"), Error);
        EXPECT_THROW(parse_dist("gauss(0,1)"), Error);
        EXPECT_THROW(parse_dist("uniform(5,1)"), Error);
    }

    TEST(Dist, SupportAndZeroMass)
    {
        EXPECT_EQ(support_min(dist::UniformInt{2, 9}), 2);
        EXPECT_EQ(support_max(dist::TruncatedPoisson{3.0, 12}), 12);
        EXPECT_TRUE(has_zero_mass(dist::Bernoulli{0.5, 1}));
        EXPECT_FALSE(has_zero_mass(dist::Deterministic{1}));
        EXPECT_TRUE(has_zero_mass(dist::Poisson{4.0}));
        EXPECT_FALSE(has_zero_mass(dist::Categorical{{1, 2}, {0.5, 0.5}}));
    }
} // namespace
