#pragma once

// Drift lab: Lyapunov constants for a model, and Monte Carlo checks of the
// sampled-chain drift, the reflected-walk moment bound and the one-slot drift
// of PI-Split at boundary states.
//
// Boundary states may hold astronomically long queues (the finite-set
// threshold grows like x^(1/gamma)), so queues here are long double and
// every change in L is computed per server in a cancellation-free form.

#include "pisim/core.hpp"
#include "pisim/policies.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pisim
{
    using Real = long double;

    struct DriftConstants
    {
        double epsilon0 = 0.0;
        double epsilon = 0.0;
        double gamma = 0.0;
        double C_rrw = 0.0;
        /// Largest root of f found by the search; f < 0 beyond it.
        Real f_root = 0.0L;
        Real u = 0.0L;
        Real C_setsize = 0.0L;
        std::vector<double> beta;
        std::vector<double> sigma_comb;
        Count s_max = 0;
        std::size_t n = 0;
        double lambda = 0.0;
        double sigma_a = 0.0;
    };

    /// max_j { ([lambda - mu_j]^+)^(1+g) - sum_{i != j} mu_i }.
    inline double gamma_condition(const ModelParams& p, double g)
    {
        const double total = p.total_service_rate();
        double h = -std::numeric_limits<double>::infinity();
        for (const double m : p.mu)
            h = std::max(h, std::pow(std::max(p.lambda - m, 0.0), 1.0 + g) - (total - m));
        return h;
    }

    /// f(x) = eps x - 2 eps x^(1+g) + C x^(0.75(1+g)) + (n-1) s_max x^g.
    inline Real drift_f(const DriftConstants& c, Real x)
    {
        const Real g = c.gamma;
        return c.epsilon * x - 2 * c.epsilon * std::pow(x, 1 + g) + c.C_rrw * std::pow(x, 0.75L * (1 + g)) +
               static_cast<Real>(c.n - 1) * static_cast<Real>(c.s_max) * std::pow(x, g);
    }

    /// Point beyond which each positive term of f is below (2/3) eps x^(1+g),
    /// so f < 0 there without any numerics.
    inline Real f_safe_bound(const DriftConstants& c)
    {
        const Real g = c.gamma, e = c.epsilon;
        return std::max({Real{1}, std::pow(1.5L, 1 / g), std::pow(3 * c.C_rrw / (2 * e), 4 / (1 + g)),
                         3 * static_cast<Real>(c.n - 1) * static_cast<Real>(c.s_max) / (2 * e)});
    }

    inline DriftConstants compute_constants(const ModelParams& p)
    {
        DriftConstants c;
        c.n = p.n;
        c.s_max = p.s_max;
        c.lambda = p.lambda;
        c.sigma_a = p.sigma_a;
        c.epsilon0 = p.total_service_rate() - p.lambda;
        if (!(c.epsilon0 > 0.0))
            throw Error("supercritical: lambda must be below the total service rate");
        c.epsilon = std::min(c.epsilon0, p.mu_min()) / 4.0;

        // Largest admissible point of a descending grid, then bisection towards
        // the next (inadmissible) grid point above it.
        constexpr int kGrid = 400;
        const auto ok = [&](double g) { return gamma_condition(p, g) < -2.0 * c.epsilon; };
        double lo = 0.0, hi = 1.0 / kGrid;
        bool found = false;
        for (int k = kGrid; k >= 1; --k)
        {
            const double g = static_cast<double>(k) / kGrid;
            if (ok(g))
            {
                lo = g;
                hi = static_cast<double>(k + 1) / kGrid;
                found = true;
                break;
            }
        }
        if (found && lo == 1.0)
        {
            c.gamma = 1.0;
        }
        else
        {
            // Without a grid hit the admissible set lies in (0, 1/kGrid); the
            // condition holds in the limit g -> 0.
            while (hi - lo > 1e-6 || lo == 0.0)
            {
                const double mid = 0.5 * (lo + hi);
                if (ok(mid))
                    lo = mid;
                else
                    hi = mid;
                if (hi < 1e-12)
                    throw Error("no admissible gamma found");
            }
            c.gamma = lo;
        }
        if (!ok(c.gamma))
            throw std::logic_error("gamma search returned an inadmissible value");

        c.C_rrw = 0.0;
        for (std::size_t i = 0; i < p.n; ++i)
        {
            const double b = p.lambda - p.mu[i];
            const double s = std::sqrt(p.sigma_a * p.sigma_a + p.sigma_s[i] * p.sigma_s[i]);
            c.beta.push_back(b);
            c.sigma_comb.push_back(s);
            c.C_rrw = std::max(c.C_rrw, std::pow(16.0 * s + 8.0 * std::sqrt(s) * std::max(b, 0.0), (1.0 + c.gamma) / 2.0));
        }

        // Walk down a fine geometric grid from the analytic bound while f stays
        // negative, then bisect the last sign change.
        const Real safe = f_safe_bound(c);
        Real x = safe;
        Real root = 0.0L;
        constexpr Real kRatio = 1.0L - 1e-4L;
        while (x > 1.0L)
        {
            const Real next = x * kRatio;
            if (drift_f(c, next) >= 0)
            {
                Real a = next, b = x;
                for (int it = 0; it < 200 && b - a > 1e-9L * b; ++it)
                {
                    const Real mid = 0.5L * (a + b);
                    (drift_f(c, mid) >= 0 ? a : b) = mid;
                }
                root = b;
                break;
            }
            x = next;
        }
        c.f_root = root;
        const Real sm = static_cast<Real>(p.s_max);
        c.u = std::max(sm * sm + 1, sm * root);

        Real bmax = 0.0L;
        for (const double b : c.beta)
            bmax = std::max(bmax, static_cast<Real>(std::max(b, 0.0)));
        const Real g = c.gamma, u = c.u, nn = static_cast<Real>(p.n);
        const Real lam = p.lambda, sa2 = static_cast<Real>(p.sigma_a) * p.sigma_a;
        const Real t1 = nn * sm * u;
        const Real t2 =
            nn * std::pow(c.epsilon * u + std::pow(bmax, 1 + g) * std::pow(u, 1 + g) + c.C_rrw * std::pow(u, 0.75L * (1 + g)),
                          1 / g);
        const Real t3 = nn * std::pow(c.epsilon + nn * (sa2 + lam * lam), 1 / g);
        c.C_setsize = t1 + t2 + t3 + 1;
        if (!std::isfinite(c.C_setsize))
            throw Error("finite-set threshold overflows long double");
        return c;
    }

    /// Invariants the constants must satisfy, re-evaluated independently of
    /// the search. Empty means all hold.
    inline std::vector<std::string> check_constants(const ModelParams& p, const DriftConstants& c)
    {
        std::vector<std::string> bad;
        if (std::abs(c.epsilon - std::min(c.epsilon0, p.mu_min()) / 4.0) > 1e-12 || !(c.epsilon > 0))
            bad.emplace_back("epsilon");
        if (!(c.gamma > 0 && c.gamma <= 1) || !(gamma_condition(p, c.gamma) < -2 * c.epsilon))
            bad.emplace_back("gamma");
        const Real sm = static_cast<Real>(c.s_max);
        if (!(c.u > sm * sm))
            bad.emplace_back("u above s_max^2");
        // f < 0 on a grid over (u/s_max, safe], analytically beyond.
        const Real start = c.u / sm, stop = std::max(f_safe_bound(c), start * 2);
        for (Real x = start * (1 + 1e-9L); x <= stop; x *= 1.001L)
        {
            if (drift_f(c, x) >= 0)
            {
                bad.emplace_back("f not negative beyond u/s_max");
                break;
            }
        }
        return bad;
    }

    inline Real lyapunov(std::span<const Real> q, double gamma)
    {
        Real total = 0;
        for (const Real v : q)
            total += std::pow(v, 1 + static_cast<Real>(gamma));
        return total;
    }

    inline double lyapunov(const std::vector<Count>& q, double gamma)
    {
        double total = 0;
        for (const Count v : q)
            total += std::pow(static_cast<double>(v), 1.0 + gamma);
        return total;
    }

    /// (max(q - r, 0))^(1+g) - q^(1+g) without forming either power when
    /// r is tiny relative to q.
    inline Real power_drop(Real q, Real r, Real g)
    {
        if (q <= 0)
            return 0;
        if (r >= q)
            return -std::pow(q, 1 + g);
        return std::pow(q, 1 + g) * std::expm1((1 + g) * std::log1p(-r / q));
    }

    // ---------------------------------------------------------------------
    // Boundary states
    // ---------------------------------------------------------------------

    struct BoundaryState
    {
        std::vector<Real> q;
        ServerId li = 0;
        std::string label;

        Real total() const
        {
            Real t = 0;
            for (const Real v : q)
                t += v;
            return t;
        }
        std::vector<ServerId> zeros() const
        {
            std::vector<ServerId> z;
            for (ServerId i = 0; i < q.size(); ++i)
                if (q[i] == 0)
                    z.push_back(i);
            return z;
        }
        std::size_t zeros_off_li() const
        {
            std::size_t k = 0;
            for (ServerId i = 0; i < q.size(); ++i)
                k += (q[i] == 0 && i != li) ? 1 : 0;
            return k;
        }
        /// min over i != l of q_i.
        Real q_min(ServerId l) const
        {
            Real m = std::numeric_limits<Real>::infinity();
            for (ServerId i = 0; i < q.size(); ++i)
                if (i != l)
                    m = std::min(m, q[i]);
            return m;
        }
    };

    inline BoundaryState to_boundary(const SystemState& s, std::string label = {})
    {
        BoundaryState b;
        for (const Count v : s.q)
            b.q.push_back(static_cast<Real>(v));
        b.li = s.li;
        b.label = std::move(label);
        return b;
    }

    inline void require_outside(const BoundaryState& a, const ModelParams& p, const DriftConstants& c)
    {
        if (a.q.size() != p.n || a.li >= p.n)
            throw Error("state does not match the model");
        for (const Real v : a.q)
            if (v < 0 || v != std::floor(v))
                throw Error("queue lengths must be non-negative integers");
        if (!(a.total() > c.C_setsize))
            throw Error("state inside finite set");
    }

    // ---------------------------------------------------------------------
    // Statistics
    // ---------------------------------------------------------------------

    /// z for a two-sided 99% normal interval.
    inline constexpr double kZ99 = 2.5758293035489004;

    struct Estimate
    {
        Real mean = 0;
        Real stddev = 0;
        Real half_width = 0;
        std::int64_t count = 0;
        Real lo() const { return mean - half_width; }
        Real hi() const { return mean + half_width; }
    };

    class Accumulator
    {
    public:
        void add(Real x)
        {
            ++n_;
            const Real d = x - mean_;
            mean_ += d / static_cast<Real>(n_);
            m2_ += d * (x - mean_);
        }
        Estimate estimate() const
        {
            Estimate e;
            e.count = n_;
            e.mean = mean_;
            if (n_ > 1)
            {
                e.stddev = std::sqrt(m2_ / static_cast<Real>(n_ - 1));
                e.half_width = kZ99 * e.stddev / std::sqrt(static_cast<Real>(n_));
            }
            return e;
        }

    private:
        std::int64_t n_ = 0;
        Real mean_ = 0;
        Real m2_ = 0;
    };

    enum class Verdict
    {
        Pass,
        Fail,
        Inconclusive
    };

    inline std::string to_string(Verdict v)
    {
        switch (v)
        {
        case Verdict::Pass:
            return "pass";
        case Verdict::Fail:
            return "fail";
        case Verdict::Inconclusive:
            return "inconclusive";
        }
        return "?";
    }

    /// Sign verdict for "expected value below `threshold`".
    inline Verdict below(const Estimate& e, Real threshold)
    {
        if (e.hi() < threshold)
            return Verdict::Pass;
        if (e.lo() > threshold)
            return Verdict::Fail;
        return Verdict::Inconclusive;
    }

    // ---------------------------------------------------------------------
    // One inter-sampling interval under PI
    // ---------------------------------------------------------------------

    struct Episode
    {
        ServerId l = 0;
        Count delta = 0;
        /// Q_l at the next sampling time.
        Count q_l_end = 0;
        /// L(next) - L(alpha).
        Real dL = 0;
        std::vector<Count> served;
    };

    namespace detail
    {
        /// Exact Q_l after `steps` slots of the reflected walk started at 0,
        /// where each slot adds a batch and removes up to one capacity draw.
        /// Positive drift: forward simulation, jumping whole blocks while the
        /// queue is too long to touch zero. Negative drift: by time reversal
        /// the position equals the running maximum of the free walk, and
        /// blocks that cannot raise the maximum are jumped.
        inline Count reflected_walk(const DistSpec& arrival, const DistSpec& capacity, const Sampler& arr,
                                    const Sampler& cap, const SumSampler& arr_sum, const SumSampler& cap_sum,
                                    double drift, Count steps, Rng& rng)
        {
            const bool bounded_arrivals = is_finite(arrival);
            const Count max_down = support_max(capacity);
            if (drift >= 0 || !bounded_arrivals)
            {
                Count q = 0, t = 0;
                while (t < steps)
                {
                    const Count k = std::min(steps - t, q / max_down);
                    if (k >= 1)
                    {
                        q += arr_sum(k, rng) - cap_sum(k, rng);
                        t += k;
                    }
                    else
                    {
                        q = std::max<Count>(0, q + arr(rng) - cap(rng));
                        ++t;
                    }
                }
                return q;
            }
            const Count max_up = support_max(arrival) - support_min(capacity);
            if (max_up <= 0)
                return 0;
            Count w = 0, best = 0, t = 0;
            while (t < steps)
            {
                const Count k = std::min(steps - t, (best - w) / max_up);
                if (k >= 1)
                {
                    w += arr_sum(k, rng) - cap_sum(k, rng);
                    t += k;
                }
                else
                {
                    w += arr(rng) - cap(rng);
                    best = std::max(best, w);
                    ++t;
                }
            }
            return best;
        }
    } // namespace detail

    /// Simulates PI from `alpha` (time 0 taken as a sampling time) to the next
    /// sampling time. The servers other than the new Last-Idle server l only
    /// drain, and l only receives, so the two parts are simulated separately.
    class EpisodeSampler
    {
    public:
        EpisodeSampler(const ModelParams& p, const DriftConstants& c)
            : p_(p), c_(c), arrival_(p.arrival), arrival_sum_(p.arrival)
        {
            for (const auto& d : p.capacities)
            {
                capacity_.emplace_back(d);
                capacity_sum_.emplace_back(d);
            }
        }

        Episode operator()(const BoundaryState& a, Rng& rng) const
        {
            const std::size_t n = p_.n;
            const auto zeros = a.zeros();
            if (zeros.empty())
                throw Error("state has no idle server");
            Episode e;
            e.l = zeros[rng.bounded(zeros.size())];
            const Real q_min = a.q_min(e.l);
            if (q_min > 0x1p53L)
                throw Error("shortest draining queue too long to simulate exactly");
            const Real sm = static_cast<Real>(p_.s_max);

            // Servers that could empty within q_min slots are tracked exactly;
            // the others cannot reach zero before the interval ends.
            const Real reach = std::min(sm * std::max<Real>(q_min, 1) + 1, 0x1p62L);
            e.served.assign(n, 0);
            std::vector<Count> target(n, 0);
            std::vector<bool> tracked(n, false);
            for (ServerId i = 0; i < n; ++i)
            {
                if (i != e.l && a.q[i] <= reach)
                {
                    tracked[i] = true;
                    target[i] = static_cast<Count>(a.q[i]);
                }
            }
            Count t = 0;
            bool hit = false;
            while (!hit)
            {
                Count remaining = std::numeric_limits<Count>::max();
                for (ServerId i = 0; i < n; ++i)
                    if (tracked[i])
                        remaining = std::min(remaining, target[i] - e.served[i]);
                const Count k = remaining > 0 ? (remaining - 1) / p_.s_max : 0;
                if (k >= 1)
                {
                    for (ServerId i = 0; i < n; ++i)
                        if (i != e.l)
                            e.served[i] += capacity_sum_[i](k, rng);
                    t += k;
                    continue;
                }
                for (ServerId i = 0; i < n; ++i)
                    if (i != e.l)
                        e.served[i] += capacity_[i](rng);
                ++t;
                for (ServerId i = 0; i < n; ++i)
                    if (tracked[i] && e.served[i] >= target[i])
                        hit = true;
            }
            e.delta = t;

            const Real d = static_cast<Real>(e.delta);
            if (d < std::max<Real>(q_min / sm, 1) || d > std::max<Real>(q_min, 1))
                throw InvariantViolation("interval length outside its deterministic bracket");

            e.q_l_end = detail::reflected_walk(p_.arrival, p_.capacities[e.l], arrival_, capacity_[e.l], arrival_sum_,
                                               capacity_sum_[e.l], p_.lambda - p_.mu[e.l], e.delta, rng);

            const Real g = c_.gamma;
            for (ServerId i = 0; i < n; ++i)
                if (i != e.l)
                    e.dL += power_drop(a.q[i], static_cast<Real>(e.served[i]), g);
            e.dL += std::pow(static_cast<Real>(e.q_l_end), 1 + g);
            return e;
        }

    private:
        const ModelParams& p_;
        const DriftConstants& c_;
        Sampler arrival_;
        SumSampler arrival_sum_;
        std::vector<Sampler> capacity_;
        std::vector<SumSampler> capacity_sum_;
    };

    struct DriftReport
    {
        BoundaryState state;
        std::uint64_t seed = 0;
        std::int64_t reps = 0;
        Estimate dL;
        Estimate dTau;
        /// dL + eps * dTau per episode.
        Estimate margin;
        Verdict verdict = Verdict::Inconclusive;
        /// Same margin conditioned on each realized Last-Idle server.
        std::map<ServerId, Estimate> by_l;
        Real q_min_l = 0;
    };

    inline void require_boundary(const BoundaryState& a)
    {
        if (a.zeros_off_li() == 0)
            throw Error("state is not a boundary state");
    }

    inline DriftReport estimate_drift(const BoundaryState& alpha, const ModelParams& p, const DriftConstants& c,
                                      std::int64_t reps, std::uint64_t seed)
    {
        require_outside(alpha, p, c);
        require_boundary(alpha);
        EpisodeSampler sampler(p, c);
        Accumulator dl, dt, m;
        std::map<ServerId, Accumulator> by_l;
        for (std::int64_t r = 0; r < reps; ++r)
        {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
            const Episode e = sampler(alpha, rng);
            const Real x = e.dL + static_cast<Real>(c.epsilon) * static_cast<Real>(e.delta);
            dl.add(e.dL);
            dt.add(static_cast<Real>(e.delta));
            m.add(x);
            by_l[e.l].add(x);
        }
        DriftReport rep;
        rep.state = alpha;
        rep.seed = seed;
        rep.reps = reps;
        rep.dL = dl.estimate();
        rep.dTau = dt.estimate();
        rep.margin = m.estimate();
        rep.verdict = below(rep.margin, 0);
        for (const auto& [l, acc] : by_l)
            rep.by_l[l] = acc.estimate();
        return rep;
    }

    struct RrwReport
    {
        BoundaryState state;
        std::int64_t reps = 0;
        /// E[Q_l(next)^(1+g)].
        Estimate lhs;
        /// E[(beta_l^+)^(1+g) Delta^(1+g) + C Delta^(0.75(1+g))].
        Estimate rhs;
        /// lhs - rhs per episode.
        Estimate gap;
        Verdict verdict = Verdict::Inconclusive;
        bool pass = false;
    };

    inline RrwReport check_rrw_bound(const BoundaryState& alpha, const ModelParams& p, const DriftConstants& c,
                                     std::int64_t reps, std::uint64_t seed)
    {
        require_outside(alpha, p, c);
        require_boundary(alpha);
        EpisodeSampler sampler(p, c);
        Accumulator lhs, rhs, gap;
        const Real g = c.gamma;
        for (std::int64_t r = 0; r < reps; ++r)
        {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
            const Episode e = sampler(alpha, rng);
            const Real d = static_cast<Real>(e.delta);
            const Real bp = std::max<Real>(c.beta[e.l], 0);
            const Real y = std::pow(static_cast<Real>(e.q_l_end), 1 + g);
            const Real bound = std::pow(bp, 1 + g) * std::pow(d, 1 + g) + c.C_rrw * std::pow(d, 0.75L * (1 + g));
            lhs.add(y);
            rhs.add(bound);
            gap.add(y - bound);
        }
        RrwReport rep;
        rep.state = alpha;
        rep.reps = reps;
        rep.lhs = lhs.estimate();
        rep.rhs = rhs.estimate();
        rep.gap = gap.estimate();
        rep.pass = rep.gap.hi() <= 0;
        rep.verdict = rep.pass ? Verdict::Pass : (rep.gap.lo() > 0 ? Verdict::Fail : Verdict::Inconclusive);
        return rep;
    }

    struct SplitReport
    {
        BoundaryState state;
        std::int64_t reps = 0;
        Estimate dL;
        /// -Q_{j*}^g + n (sigma_a^2 + lambda^2).
        Real analytic_bound = 0;
        Verdict verdict = Verdict::Inconclusive;
        bool pass = false;
    };

    /// One slot of PI-Split from a state with at least two idle servers other
    /// than LI; the next sampling time is then exactly one slot later.
    inline SplitReport check_pisplit_onestep(const BoundaryState& alpha, const ModelParams& p, const DriftConstants& c,
                                             std::int64_t reps, std::uint64_t seed,
                                             const SplitRule& rule = SplitRule::water_fill_idle())
    {
        require_outside(alpha, p, c);
        if (alpha.zeros_off_li() < 2)
            throw Error("state needs two idle servers other than Last-Idle");
        const std::size_t n = p.n;
        const auto idle = alpha.zeros();
        // The rule only reads idle entries; busy ones are clamped for the
        // integer interface.
        std::vector<Count> q_int(n);
        for (ServerId i = 0; i < n; ++i)
            q_int[i] = static_cast<Count>(std::min<Real>(alpha.q[i], 0x1p62L));

        Sampler arrival(p.arrival);
        std::vector<Sampler> caps;
        for (const auto& d : p.capacities)
            caps.emplace_back(d);
        const Real g = c.gamma;
        Accumulator acc;
        for (std::int64_t r = 0; r < reps; ++r)
        {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
            const Count a = arrival(rng);
            const TieDraw xi = draw_tie(idle.size(), rng);
            const Allocation alloc = rule(q_int, a, idle, xi.word);
            Real dl = 0;
            for (ServerId i = 0; i < n; ++i)
            {
                const Count s = caps[i](rng);
                if (alpha.q[i] == 0)
                {
                    const Count after = std::max<Count>(0, alloc.counts[i] - s);
                    dl += std::pow(static_cast<Real>(after), 1 + g);
                }
                else
                {
                    if (alloc.counts[i] != 0)
                        throw InvariantViolation("split rule sent jobs to a busy server");
                    dl += power_drop(alpha.q[i], static_cast<Real>(s), g);
                }
            }
            acc.add(dl);
        }
        SplitReport rep;
        rep.state = alpha;
        rep.reps = reps;
        rep.dL = acc.estimate();
        const Real qmax = *std::max_element(alpha.q.begin(), alpha.q.end());
        const Real lam = p.lambda, sa = p.sigma_a;
        rep.analytic_bound = -std::pow(qmax, g) + static_cast<Real>(n) * (sa * sa + lam * lam);
        rep.verdict = below(rep.dL, -static_cast<Real>(c.epsilon));
        rep.pass = rep.verdict == Verdict::Pass;
        return rep;
    }

    // ---------------------------------------------------------------------
    // Catalogs
    // ---------------------------------------------------------------------

    /// Boundary states outside the finite set, with the Last-Idle server busy
    /// and an idle server elsewhere. With n >= 3 both regimes appear: a short
    /// queue (at most u) next to huge ones, and every draining queue above u.
    /// With n = 2 the only draining queue is the whole backlog, so every
    /// state is in the long-interval regime.
    inline std::vector<BoundaryState> drift_catalog(const ModelParams& p, const DriftConstants& c)
    {
        const std::size_t n = p.n;
        const Real big = c.C_setsize;
        std::vector<BoundaryState> out;
        auto add = [&](std::vector<Real> q, ServerId li, std::string label) {
            out.push_back(BoundaryState{std::move(q), li, std::move(label)});
        };
        if (n == 1)
            return out;
        if (n == 2)
        {
            for (const Real m : {1.2L, 2.0L, 4.0L, 10.0L})
            {
                const Real M = std::ceil(m * big);
                std::ostringstream lbl;
                lbl << "long interval, M=" << static_cast<double>(m) << "C";
                add({0, M}, 1, lbl.str() + ", idle 1");
                add({M, 0}, 0, lbl.str() + ", idle 2");
            }
            return out;
        }
        const Real huge = std::ceil(2 * big);
        const Real u = std::floor(c.u);
        // Idle server at `zero`, one short queue at `short_at`, the rest huge.
        auto base = [&](ServerId zero, Real shortest, ServerId short_at) {
            std::vector<Real> q(n, huge);
            q[zero] = 0;
            q[short_at] = shortest;
            return q;
        };
        const ServerId last = n - 1;
        add(base(0, 1, 2), 1, "short interval, Qmin=1");
        add(base(0, std::floor(u / 2), 2), 1, "short interval, Qmin=u/2");
        add(base(last, u, 1), 0, "short interval, Qmin=u");
        add(base(0, 0, 1), 2, "short interval, two idle");
        for (const Real k : {2.0L, 3.0L, 5.0L})
        {
            std::ostringstream lbl;
            lbl << "long interval, Qmin=" << static_cast<double>(k) << "u";
            std::vector<Real> q(n, std::floor(k * u) + 7);
            q[1] = huge;
            q[k == 3.0L ? last : 0] = 0;
            add(q, k == 3.0L ? 0 : 1, lbl.str());
        }
        {
            std::vector<Real> q(n, std::floor(2 * u));
            q[0] = 0;
            q[last] = huge;
            for (ServerId i = 2; i + 1 < n; ++i)
                q[i] = std::floor(4 * u);
            add(q, last, "long interval, Qmin=2u, staggered");
        }
        return out;
    }

    /// States with at least two idle servers other than Last-Idle (n >= 3).
    inline std::vector<BoundaryState> split_catalog(const ModelParams& p, const DriftConstants& c)
    {
        const std::size_t n = p.n;
        std::vector<BoundaryState> out;
        if (n < 3)
            return out;
        const Real big = std::ceil(c.C_setsize);
        const ServerId last = n - 1;
        {
            std::vector<Real> q(n, big);
            q[0] = q[1] = 0;
            out.push_back({q, last, "two idle, rest at C"});
        }
        {
            std::vector<Real> q(n, 0);
            q[last] = std::ceil(2 * big);
            out.push_back({q, last, "single busy server at 2C"});
        }
        {
            std::vector<Real> q(n, 0);
            q[last] = std::ceil(2 * big);
            q[1] = 5;
            out.push_back({q, 0, "idle Last-Idle, short queue"});
        }
        {
            std::vector<Real> q(n, 0);
            q[0] = std::ceil(10 * big);
            q[last] = 3;
            out.push_back({q, 0, "busy Last-Idle at 10C"});
        }
        if (n >= 4)
        {
            std::vector<Real> q(n, std::ceil(big / static_cast<Real>(n)) + 1);
            q[0] = q[2] = 0;
            q[1] = big;
            out.push_back({q, 1, "two idle, spread backlog"});
        }
        return out;
    }

    // ---------------------------------------------------------------------
    // JSON
    // ---------------------------------------------------------------------

    /// Long doubles beyond double range are emitted as strings.
    inline nlohmann::json json_number(Real v)
    {
        const double d = static_cast<double>(v);
        if (std::isfinite(d))
            return d;
        std::ostringstream os;
        os.precision(18);
        os << v;
        return os.str();
    }

    inline nlohmann::json to_json(const Estimate& e)
    {
        return {{"mean", json_number(e.mean)},
                {"ci99", {json_number(e.lo()), json_number(e.hi())}},
                {"stddev", json_number(e.stddev)},
                {"count", e.count}};
    }

    inline nlohmann::json to_json(const BoundaryState& s)
    {
        nlohmann::json q = nlohmann::json::array();
        for (const Real v : s.q)
            q.push_back(json_number(v));
        return {{"q", q}, {"li", s.li + 1}, {"label", s.label}};
    }

    inline nlohmann::json to_json(const DriftConstants& c)
    {
        return {{"epsilon0", c.epsilon0},
                {"epsilon", c.epsilon},
                {"gamma", c.gamma},
                {"C_rrw", c.C_rrw},
                {"f_root", json_number(c.f_root)},
                {"u", json_number(c.u)},
                {"C_setsize", json_number(c.C_setsize)},
                {"beta", c.beta},
                {"sigma_comb", c.sigma_comb},
                {"s_max", c.s_max}};
    }

    inline nlohmann::json to_json(const DriftReport& r)
    {
        nlohmann::json by_l = nlohmann::json::object();
        for (const auto& [l, e] : r.by_l)
            by_l[std::to_string(l + 1)] = to_json(e);
        return {{"state", to_json(r.state)},  {"reps", r.reps},         {"seed", r.seed},
                {"mean_dL", to_json(r.dL)},   {"mean_dTau", to_json(r.dTau)},
                {"margin", to_json(r.margin)}, {"verdict", to_string(r.verdict)},
                {"margin_by_l", by_l}};
    }

    inline nlohmann::json to_json(const RrwReport& r)
    {
        return {{"state", to_json(r.state)}, {"reps", r.reps},           {"lhs", to_json(r.lhs)},
                {"rhs", to_json(r.rhs)},     {"gap", to_json(r.gap)},     {"pass", r.pass}};
    }

    inline nlohmann::json to_json(const SplitReport& r)
    {
        return {{"state", to_json(r.state)},
                {"reps", r.reps},
                {"mean_dL", to_json(r.dL)},
                {"analytic_bound", json_number(r.analytic_bound)},
                {"verdict", to_string(r.verdict)},
                {"pass", r.pass}};
    }
} // namespace pisim
