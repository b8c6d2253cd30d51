#pragma once

// Seeded random streams and the bounded discrete distributions used for batch
// sizes and per-server service capacities.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace pisim
{
    using Count = std::int64_t;

    class Error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    // ---------------------------------------------------------------------
    // Generators
    // ---------------------------------------------------------------------

    inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept
    {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Mixes a master seed with an index into a fresh, well-spread seed. Used to
    /// derive replica and Monte Carlo episode seeds.
    inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept
    {
        std::uint64_t s = master ^ (index * 0xd1b54a32d192ed03ULL);
        splitmix64(s);
        return splitmix64(s);
    }

    /// xoshiro256** with the reference jump polynomial. Satisfies
    /// UniformRandomBitGenerator so it can drive <random> distributions.
    class Xoshiro256
    {
    public:
        using result_type = std::uint64_t;

        explicit Xoshiro256(std::uint64_t seed = 0) noexcept
        {
            std::uint64_t sm = seed;
            for (auto& w : s_)
            {
                w = splitmix64(sm);
            }
        }

        static constexpr result_type min() noexcept { return 0; }
        static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

        result_type operator()() noexcept
        {
            const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
            const std::uint64_t t = s_[1] << 17;
            s_[2] ^= s_[0];
            s_[3] ^= s_[1];
            s_[1] ^= s_[2];
            s_[0] ^= s_[3];
            s_[2] ^= t;
            s_[3] = std::rotl(s_[3], 45);
            return result;
        }

        /// Advances the state by 2^128 draws.
        void jump() noexcept
        {
            static constexpr std::array<std::uint64_t, 4> kJump = {
                0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL, 0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
            std::array<std::uint64_t, 4> acc{};
            for (const std::uint64_t word : kJump)
            {
                for (int b = 0; b < 64; ++b)
                {
                    if (word & (std::uint64_t{1} << b))
                    {
                        for (std::size_t k = 0; k < 4; ++k)
                        {
                            acc[k] ^= s_[k];
                        }
                    }
                    (*this)();
                }
            }
            s_ = acc;
        }

        /// Uniform double in [0, 1) with 53 random bits.
        double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

        /// Uniform integer in [0, range) via Lemire's multiply-shift with
        /// rejection; exact for every range >= 1.
        std::uint64_t bounded(std::uint64_t range) noexcept { return bounded_draw(range).first; }

        /// Same as bounded(), also returning the accepted raw word.
        std::pair<std::uint64_t, std::uint64_t> bounded_draw(std::uint64_t range) noexcept
        {
            std::uint64_t x = (*this)();
            __uint128_t m = static_cast<__uint128_t>(x) * range;
            auto low = static_cast<std::uint64_t>(m);
            if (low < range)
            {
                const std::uint64_t threshold = (0 - range) % range;
                while (low < threshold)
                {
                    x = (*this)();
                    m = static_cast<__uint128_t>(x) * range;
                    low = static_cast<std::uint64_t>(m);
                }
            }
            return {static_cast<std::uint64_t>(m >> 64), x};
        }

        const std::array<std::uint64_t, 4>& state() const noexcept { return s_; }

        friend bool operator==(const Xoshiro256&, const Xoshiro256&) = default;

    private:
        std::array<std::uint64_t, 4> s_{};
    };

    using Rng = Xoshiro256;

    /// Index selected by a raw 64-bit word among `count` slots (multiply-high).
    /// Matches the index Rng::bounded_draw returns for its accepted word.
    inline std::size_t index_from_word(std::uint64_t word, std::size_t count) noexcept
    {
        return static_cast<std::size_t>((static_cast<__uint128_t>(word) * count) >> 64);
    }

    /// Independent substreams for each random role of one simulation run.
    /// Stream k is the master generator jumped k+1 times, so streams never
    /// overlap within 2^128 draws. Capacity stream i does not depend on n.
    class RngStreams
    {
    public:
        RngStreams(std::uint64_t master_seed, std::size_t servers) : master_seed_(master_seed)
        {
            Rng cursor(master_seed);
            streams_.reserve(kFixedRoles + servers);
            for (std::size_t k = 0; k < kFixedRoles + servers; ++k)
            {
                cursor.jump();
                streams_.push_back(cursor);
            }
        }

        Rng& arrival() noexcept { return streams_[0]; }
        Rng& tie_break() noexcept { return streams_[1]; }
        Rng& policy_choice() noexcept { return streams_[2]; }
        Rng& capacity(std::size_t server) { return streams_.at(kFixedRoles + server); }

        std::size_t servers() const noexcept { return streams_.size() - kFixedRoles; }
        std::uint64_t master_seed() const noexcept { return master_seed_; }

    private:
        static constexpr std::size_t kFixedRoles = 3;
        std::uint64_t master_seed_;
        std::vector<Rng> streams_;
    };

    // ---------------------------------------------------------------------
    // Distributions
    // ---------------------------------------------------------------------

    namespace dist
    {
        struct Deterministic
        {
            Count value = 0;
        };
        struct UniformInt
        {
            Count lo = 0;
            Count hi = 0;
        };
        struct Poisson
        {
            double rate = 0.0;
        };
        /// `value` with probability p, otherwise 0.
        struct Bernoulli
        {
            double p = 0.0;
            Count value = 1;
        };
        /// Poisson(rate) with the mass above `cap` moved onto `cap`.
        struct TruncatedPoisson
        {
            double rate = 0.0;
            Count cap = 0;
        };
        /// Finite pmf given as (value, probability) pairs.
        struct Categorical
        {
            std::vector<Count> values;
            std::vector<double> probs;
        };
    } // namespace dist

    using DistSpec = std::variant<dist::Deterministic, dist::UniformInt, dist::Poisson, dist::Bernoulli,
                                  dist::TruncatedPoisson, dist::Categorical>;

    struct Moments
    {
        double mean = 0.0;
        double variance = 0.0;
    };

    namespace detail
    {
        template <class... Ts>
        struct overloaded : Ts...
        {
            using Ts::operator()...;
        };
        template <class... Ts>
        overloaded(Ts...) -> overloaded<Ts...>;

        inline double poisson_log_pmf(double rate, Count k)
        {
            if (rate == 0.0)
            {
                return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
            }
            return -rate + static_cast<double>(k) * std::log(rate) - std::lgamma(static_cast<double>(k) + 1.0);
        }

        /// Finite pmf table (support values ascending, probabilities).
        struct Pmf
        {
            std::vector<Count> values;
            std::vector<double> probs;
        };

        /// Poisson pmf on [0, cap) plus the tail mass at cap. The tail is summed
        /// directly rather than as 1 - cdf to keep it accurate.
        inline Pmf truncated_poisson_pmf(double rate, Count cap)
        {
            Pmf out;
            out.values.reserve(static_cast<std::size_t>(cap) + 1);
            for (Count k = 0; k < cap; ++k)
            {
                out.values.push_back(k);
                out.probs.push_back(std::exp(poisson_log_pmf(rate, k)));
            }
            long double tail = 0.0L;
            for (Count k = cap;; ++k)
            {
                const double p = std::exp(poisson_log_pmf(rate, k));
                tail += p;
                if (static_cast<double>(k) > rate && p < 1e-300)
                {
                    break;
                }
                if (static_cast<double>(k) > rate && p < static_cast<double>(tail) * 1e-20)
                {
                    break;
                }
            }
            out.values.push_back(cap);
            out.probs.push_back(static_cast<double>(tail));
            return out;
        }

        inline Pmf finite_pmf(const DistSpec& d)
        {
            return std::visit(
                overloaded{
                    [](const dist::Deterministic& x) { return Pmf{{x.value}, {1.0}}; },
                    [](const dist::UniformInt& x) {
                        Pmf p;
                        const double w = 1.0 / static_cast<double>(x.hi - x.lo + 1);
                        for (Count v = x.lo; v <= x.hi; ++v)
                        {
                            p.values.push_back(v);
                            p.probs.push_back(w);
                        }
                        return p;
                    },
                    [](const dist::Poisson&) -> Pmf { throw Error("poisson has unbounded support"); },
                    [](const dist::Bernoulli& x) {
                        if (x.value == 0)
                        {
                            return Pmf{{0}, {1.0}};
                        }
                        return Pmf{{0, x.value}, {1.0 - x.p, x.p}};
                    },
                    [](const dist::TruncatedPoisson& x) { return truncated_poisson_pmf(x.rate, x.cap); },
                    [](const dist::Categorical& x) {
                        std::vector<std::size_t> order(x.values.size());
                        for (std::size_t i = 0; i < order.size(); ++i)
                        {
                            order[i] = i;
                        }
                        std::sort(order.begin(), order.end(),
                                  [&](std::size_t a, std::size_t b) { return x.values[a] < x.values[b]; });
                        Pmf p;
                        for (const std::size_t i : order)
                        {
                            p.values.push_back(x.values[i]);
                            p.probs.push_back(x.probs[i]);
                        }
                        return p;
                    },
                },
                d);
        }

        inline bool is_finite(const DistSpec& d) { return !std::holds_alternative<dist::Poisson>(d); }
    } // namespace detail

    /// Throws Error when the parameters of `d` are malformed.
    inline void check_dist(const DistSpec& d)
    {
        std::visit(detail::overloaded{
                       [](const dist::Deterministic& x) {
                           if (x.value < 0)
                               throw Error("deterministic value must be >= 0");
                       },
                       [](const dist::UniformInt& x) {
                           if (x.lo < 0 || x.lo > x.hi)
                               throw Error("uniform-int requires 0 <= lo <= hi");
                       },
                       [](const dist::Poisson& x) {
                           if (!(x.rate >= 0.0) || !std::isfinite(x.rate))
                               throw Error("poisson rate must be finite and >= 0");
                       },
                       [](const dist::Bernoulli& x) {
                           if (!(x.p >= 0.0 && x.p <= 1.0) || x.value < 0)
                               throw Error("bernoulli requires p in [0,1] and value >= 0");
                       },
                       [](const dist::TruncatedPoisson& x) {
                           if (!(x.rate >= 0.0) || !std::isfinite(x.rate) || x.cap < 0)
                               throw Error("truncated-poisson requires rate >= 0 and cap >= 0");
                       },
                       [](const dist::Categorical& x) {
                           if (x.values.empty() || x.values.size() != x.probs.size())
                               throw Error("categorical requires matching non-empty values and probs");
                           double total = 0.0;
                           for (std::size_t i = 0; i < x.values.size(); ++i)
                           {
                               if (x.values[i] < 0 || !(x.probs[i] >= 0.0))
                                   throw Error("categorical values and probs must be >= 0");
                               total += x.probs[i];
                           }
                           if (std::abs(total - 1.0) > 1e-9)
                               throw Error("categorical probs must sum to 1");
                       },
                   },
                   d);
    }

    /// Exact analytic mean and variance.
    inline Moments moments(const DistSpec& d)
    {
        return std::visit(
            detail::overloaded{
                [](const dist::Deterministic& x) { return Moments{static_cast<double>(x.value), 0.0}; },
                [](const dist::UniformInt& x) {
                    const double width = static_cast<double>(x.hi - x.lo + 1);
                    return Moments{0.5 * static_cast<double>(x.lo + x.hi), (width * width - 1.0) / 12.0};
                },
                [](const dist::Poisson& x) { return Moments{x.rate, x.rate}; },
                [](const dist::Bernoulli& x) {
                    const double v = static_cast<double>(x.value);
                    return Moments{x.p * v, v * v * x.p * (1.0 - x.p)};
                },
                [&](const auto&) {
                    const detail::Pmf pmf = detail::finite_pmf(d);
                    long double m1 = 0.0L;
                    for (std::size_t i = 0; i < pmf.values.size(); ++i)
                    {
                        m1 += static_cast<long double>(pmf.probs[i]) * pmf.values[i];
                    }
                    long double var = 0.0L;
                    for (std::size_t i = 0; i < pmf.values.size(); ++i)
                    {
                        const long double dv = pmf.values[i] - m1;
                        var += static_cast<long double>(pmf.probs[i]) * dv * dv;
                    }
                    return Moments{static_cast<double>(m1), static_cast<double>(var)};
                },
            },
            d);
    }

    /// Smallest value with positive probability.
    inline Count support_min(const DistSpec& d)
    {
        return std::visit(detail::overloaded{
                              [](const dist::Deterministic& x) { return x.value; },
                              [](const dist::UniformInt& x) { return x.lo; },
                              [](const dist::Poisson&) { return Count{0}; },
                              [](const dist::Bernoulli& x) { return x.p < 1.0 ? Count{0} : x.value; },
                              [](const dist::TruncatedPoisson&) { return Count{0}; },
                              [](const dist::Categorical& x) {
                                  Count lo = std::numeric_limits<Count>::max();
                                  for (std::size_t i = 0; i < x.values.size(); ++i)
                                      if (x.probs[i] > 0.0)
                                          lo = std::min(lo, x.values[i]);
                                  return lo;
                              },
                          },
                          d);
    }

    /// Largest value with positive probability; numeric_limits max for Poisson.
    inline Count support_max(const DistSpec& d)
    {
        return std::visit(detail::overloaded{
                              [](const dist::Deterministic& x) { return x.value; },
                              [](const dist::UniformInt& x) { return x.hi; },
                              [](const dist::Poisson& x) {
                                  return x.rate > 0.0 ? std::numeric_limits<Count>::max() : Count{0};
                              },
                              [](const dist::Bernoulli& x) { return x.p > 0.0 ? x.value : Count{0}; },
                              [](const dist::TruncatedPoisson& x) { return x.rate > 0.0 ? x.cap : Count{0}; },
                              [](const dist::Categorical& x) {
                                  Count hi = 0;
                                  for (std::size_t i = 0; i < x.values.size(); ++i)
                                      if (x.probs[i] > 0.0)
                                          hi = std::max(hi, x.values[i]);
                                  return hi;
                              },
                          },
                          d);
    }

    /// Whether P(X = 0) > 0, decided analytically (Poisson masses underflow
    /// double for large rates).
    inline bool has_zero_mass(const DistSpec& d)
    {
        return std::visit(detail::overloaded{
                              [](const dist::Deterministic& x) { return x.value == 0; },
                              [](const dist::UniformInt& x) { return x.lo == 0; },
                              [](const dist::Poisson&) { return true; },
                              [](const dist::Bernoulli& x) { return x.p < 1.0 || x.value == 0; },
                              [](const dist::TruncatedPoisson&) { return true; },
                              [](const dist::Categorical& x) {
                                  for (std::size_t i = 0; i < x.values.size(); ++i)
                                      if (x.values[i] == 0 && x.probs[i] > 0.0)
                                          return true;
                                  return false;
                              },
                          },
                          d);
    }

    /// Precomputed sampler. Every kind is sampled from a fixed number of raw
    /// words with integer or table arithmetic, so traces do not depend on the
    /// standard library's distribution implementations.
    class Sampler
    {
    public:
        Sampler() = default;

        explicit Sampler(const DistSpec& d)
        {
            check_dist(d);
            std::visit(detail::overloaded{
                           [&](const dist::Deterministic& x) {
                               kind_ = Kind::Constant;
                               constant_ = x.value;
                           },
                           [&](const dist::UniformInt& x) {
                               kind_ = Kind::Uniform;
                               lo_ = x.lo;
                               width_ = static_cast<std::uint64_t>(x.hi - x.lo) + 1;
                           },
                           [&](const dist::Bernoulli& x) {
                               kind_ = Kind::Bernoulli;
                               p_ = x.p;
                               constant_ = x.value;
                           },
                           [&](const dist::Poisson& x) { build_poisson(x.rate); },
                           [&](const auto&) { build_table(detail::finite_pmf(d)); },
                       },
                       d);
        }

        Count operator()(Rng& rng) const
        {
            switch (kind_)
            {
            case Kind::Constant:
                return constant_;
            case Kind::Uniform:
                return lo_ + static_cast<Count>(rng.bounded(width_));
            case Kind::Bernoulli:
                return rng.uniform01() < p_ ? constant_ : 0;
            case Kind::Table:
                return from_table(rng.uniform01());
            case Kind::PoissonTail:
                return poisson_draw(rng.uniform01());
            }
            return 0;
        }

    private:
        enum class Kind
        {
            Constant,
            Uniform,
            Bernoulli,
            Table,
            PoissonTail
        };

        void build_table(const detail::Pmf& pmf)
        {
            kind_ = Kind::Table;
            values_ = pmf.values;
            cdf_.resize(pmf.probs.size());
            long double acc = 0.0L;
            for (std::size_t i = 0; i < pmf.probs.size(); ++i)
            {
                acc += pmf.probs[i];
                cdf_[i] = static_cast<double>(acc);
            }
            // Absorb rounding so every uniform in [0,1) maps into the table.
            cdf_.back() = 2.0;
        }

        void build_poisson(double rate)
        {
            kind_ = Kind::PoissonTail;
            rate_ = rate;
            long double acc = 0.0L;
            for (Count k = 0;; ++k)
            {
                const double p = std::exp(detail::poisson_log_pmf(rate, k));
                acc += p;
                values_.push_back(k);
                cdf_.push_back(static_cast<double>(acc));
                // The summed pmf can settle a few ulps short of 1, so also
                // stop once the terms themselves are negligible.
                if (static_cast<double>(k) > rate && ((1.0L - acc) < 1e-18L || p < 1e-20))
                {
                    break;
                }
            }
        }

        Count from_table(double u) const
        {
            const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
            return values_[static_cast<std::size_t>(it - cdf_.begin())];
        }

        Count poisson_draw(double u) const
        {
            const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
            if (it != cdf_.end())
            {
                return values_[static_cast<std::size_t>(it - cdf_.begin())];
            }
            // Sequential search past the table (probability < 1e-18).
            Count k = values_.back();
            long double acc = cdf_.back();
            while (acc <= u)
            {
                ++k;
                acc += std::exp(detail::poisson_log_pmf(rate_, k));
                if (k > values_.back() + 100000)
                {
                    break;
                }
            }
            return k;
        }

        Kind kind_ = Kind::Constant;
        Count constant_ = 0;
        Count lo_ = 0;
        std::uint64_t width_ = 1;
        double p_ = 0.0;
        double rate_ = 0.0;
        std::vector<Count> values_;
        std::vector<double> cdf_;
    };

    /// One draw from `d`, advancing `stream`.
    inline Count sample(const DistSpec& d, Rng& stream) { return Sampler(d)(stream); }

    /// Exact draw of the sum of `count` i.i.d. copies of `d`. Finite supports
    /// use a multinomial split of `count` over the support values.
    inline Count sample_sum(const DistSpec& d, Count count, Rng& rng)
    {
        if (count <= 0)
        {
            return 0;
        }
        if (const auto* det = std::get_if<dist::Deterministic>(&d))
        {
            return det->value * count;
        }
        if (const auto* pois = std::get_if<dist::Poisson>(&d))
        {
            if (pois->rate == 0.0)
            {
                return 0;
            }
            std::poisson_distribution<Count> draw(pois->rate * static_cast<double>(count));
            return draw(rng);
        }
        if (const auto* bern = std::get_if<dist::Bernoulli>(&d))
        {
            std::binomial_distribution<Count> draw(count, bern->p);
            return bern->value * draw(rng);
        }
        const detail::Pmf pmf = detail::finite_pmf(d);
        Count remaining = count;
        long double mass_left = 1.0L;
        Count total = 0;
        for (std::size_t i = 0; i + 1 < pmf.values.size() && remaining > 0; ++i)
        {
            const long double p = pmf.probs[i];
            const double conditional = mass_left > 0.0L ? static_cast<double>(std::min(1.0L, p / mass_left)) : 1.0;
            std::binomial_distribution<Count> draw(remaining, conditional);
            const Count c = draw(rng);
            total += c * pmf.values[i];
            remaining -= c;
            mass_left -= p;
        }
        total += remaining * pmf.values.back();
        return total;
    }

    /// sample_sum with the support and pmf prepared once.
    class SumSampler
    {
    public:
        SumSampler() = default;
        explicit SumSampler(DistSpec d) : d_(std::move(d))
        {
            check_dist(d_);
            if (detail::is_finite(d_) && !std::holds_alternative<dist::Deterministic>(d_) &&
                !std::holds_alternative<dist::Bernoulli>(d_))
            {
                pmf_ = detail::finite_pmf(d_);
                tail_.resize(pmf_.probs.size());
                long double left = 1.0L;
                for (std::size_t i = 0; i < pmf_.probs.size(); ++i)
                {
                    const long double p = pmf_.probs[i];
                    tail_[i] = left > 0.0L ? static_cast<double>(std::min(1.0L, p / left)) : 1.0;
                    left -= p;
                }
            }
        }

        Count operator()(Count count, Rng& rng) const
        {
            if (tail_.empty())
                return sample_sum(d_, count, rng);
            if (count <= 0)
                return 0;
            Count remaining = count;
            Count total = 0;
            for (std::size_t i = 0; i + 1 < pmf_.values.size() && remaining > 0; ++i)
            {
                if (tail_[i] <= 0.0)
                    continue;
                std::binomial_distribution<Count> draw(remaining, tail_[i]);
                const Count c = draw(rng);
                total += c * pmf_.values[i];
                remaining -= c;
            }
            return total + remaining * pmf_.values.back();
        }

    private:
        DistSpec d_;
        detail::Pmf pmf_;
        /// Probability of value i given that the value is not below i.
        std::vector<double> tail_;
    };

    /// Result of a uniform choice: the selected position and the raw word it
    /// was derived from.
    struct TieDraw
    {
        std::size_t index = 0;
        std::uint64_t word = 0;
    };

    inline TieDraw draw_tie(std::size_t count, Rng& stream)
    {
        if (count == 0)
        {
            throw std::logic_error("draw_tie: empty candidate set");
        }
        const auto [index, word] = stream.bounded_draw(count);
        return TieDraw{static_cast<std::size_t>(index), word};
    }

    /// Uniformly random member of a non-empty candidate set.
    template <class T>
    T tie_break_uniform(std::span<const T> candidates, Rng& stream)
    {
        return candidates[draw_tie(candidates.size(), stream).index];
    }

    template <class T>
    T tie_break_uniform(const std::vector<T>& candidates, Rng& stream)
    {
        return tie_break_uniform(std::span<const T>(candidates), stream);
    }

    // ---------------------------------------------------------------------
    // Text form: det(3) uniform(1,19) poisson(2.5) bernoulli(0.5,2)
    // tpoisson(275,5500) categorical(0:0.05,1:0.9,2:0.05)
    // ---------------------------------------------------------------------

    namespace detail
    {
        inline std::string trim(std::string_view s)
        {
            const auto b = s.find_first_not_of(" \t\r\n");
            if (b == std::string_view::npos)
                return {};
            const auto e = s.find_last_not_of(" \t\r\n");
            return std::string(s.substr(b, e - b + 1));
        }

        inline std::vector<std::string> split(std::string_view s, char sep)
        {
            std::vector<std::string> out;
            std::size_t start = 0;
            while (true)
            {
                const auto pos = s.find(sep, start);
                out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
                if (pos == std::string_view::npos)
                    break;
                start = pos + 1;
            }
            return out;
        }

        inline double to_double(const std::string& s)
        {
            std::size_t used = 0;
            double v = 0.0;
            try
            {
                v = std::stod(s, &used);
            }
            catch (const std::exception&)
            {
                throw Error("not a number: '" + s + "'");
            }
            if (used != s.size())
                throw Error("not a number: '" + s + "'");
            return v;
        }

        inline Count to_count(const std::string& s)
        {
            std::size_t used = 0;
            long long v = 0;
            try
            {
                v = std::stoll(s, &used);
            }
            catch (const std::exception&)
            {
                throw Error("not an integer: '" + s + "'");
            }
            if (used != s.size())
                throw Error("not an integer: '" + s + "'");
            return static_cast<Count>(v);
        }

        inline std::string format_double(double v)
        {
            std::ostringstream os;
            os.precision(17);
            os << v;
            return os.str();
        }
    } // namespace detail

    inline DistSpec parse_dist(std::string_view text)
    {
        const std::string s = detail::trim(text);
        const auto open = s.find('(');
        if (open == std::string::npos || s.back() != ')')
            throw Error("malformed distribution '" + s + "'");
        const std::string name = detail::trim(std::string_view(s).substr(0, open));
        const auto args = detail::split(std::string_view(s).substr(open + 1, s.size() - open - 2), ',');
        auto need = [&](std::size_t k) {
            if (args.size() != k)
                throw Error("distribution '" + name + "' expects " + std::to_string(k) + " arguments");
        };
        DistSpec d;
        if (name == "det" || name == "deterministic")
        {
            need(1);
            d = dist::Deterministic{detail::to_count(args[0])};
        }
        else if (name == "uniform" || name == "uniform-int")
        {
            need(2);
            d = dist::UniformInt{detail::to_count(args[0]), detail::to_count(args[1])};
        }
        else if (name == "poisson")
        {
            need(1);
            d = dist::Poisson{detail::to_double(args[0])};
        }
        else if (name == "bernoulli")
        {
            need(2);
            d = dist::Bernoulli{detail::to_double(args[0]), detail::to_count(args[1])};
        }
        else if (name == "tpoisson" || name == "truncated-poisson")
        {
            need(2);
            d = dist::TruncatedPoisson{detail::to_double(args[0]), detail::to_count(args[1])};
        }
        else if (name == "categorical")
        {
            dist::Categorical c;
            for (const auto& item : args)
            {
                const auto kv = detail::split(item, ':');
                if (kv.size() != 2)
                    throw Error("categorical entries are value:prob, got '" + item + "'");
                c.values.push_back(detail::to_count(kv[0]));
                c.probs.push_back(detail::to_double(kv[1]));
            }
            d = std::move(c);
        }
        else
        {
            throw Error("unknown distribution '" + name + "'");
        }
        check_dist(d);
        return d;
    }

    inline std::string to_string(const DistSpec& d)
    {
        using detail::format_double;
        return std::visit(detail::overloaded{
                              [](const dist::Deterministic& x) { return "det(" + std::to_string(x.value) + ")"; },
                              [](const dist::UniformInt& x) {
                                  return "uniform(" + std::to_string(x.lo) + "," + std::to_string(x.hi) + ")";
                              },
                              [](const dist::Poisson& x) { return "poisson(" + format_double(x.rate) + ")"; },
                              [](const dist::Bernoulli& x) {
                                  return "bernoulli(" + format_double(x.p) + "," + std::to_string(x.value) + ")";
                              },
                              [](const dist::TruncatedPoisson& x) {
                                  return "tpoisson(" + format_double(x.rate) + "," + std::to_string(x.cap) + ")";
                              },
                              [](const dist::Categorical& x) {
                                  std::string s = "categorical(";
                                  for (std::size_t i = 0; i < x.values.size(); ++i)
                                  {
                                      if (i)
                                          s += ",";
                                      s += std::to_string(x.values[i]) + ":" + format_double(x.probs[i]);
                                  }
                                  return s + ")";
                              },
                          },
                          d);
    }
} // namespace pisim
