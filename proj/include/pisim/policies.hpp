#pragma once

// Routing decisions. Every policy maps (end-of-previous-slot state, batch
// size, random streams) to an Allocation; the token policies also produce the
// next Last-Idle server.

#include "pisim/core.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pisim
{
    enum class Family
    {
        PI,
        JIQ,
        JSQ,
        JSQ2,
        JSQ11
    };

    inline std::string_view family_name(Family f)
    {
        switch (f)
        {
        case Family::PI:
            return "PI";
        case Family::JIQ:
            return "JIQ";
        case Family::JSQ:
            return "JSQ";
        case Family::JSQ2:
            return "JSQ2";
        case Family::JSQ11:
            return "JSQ11";
        }
        return "?";
    }

    inline Family parse_family(std::string_view s)
    {
        std::string lower(s);
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        if (lower == "pi")
            return Family::PI;
        if (lower == "jiq")
            return Family::JIQ;
        if (lower == "jsq")
            return Family::JSQ;
        if (lower == "jsq2" || lower == "jsq(2)")
            return Family::JSQ2;
        if (lower == "jsq11" || lower == "jsq(1,1)")
            return Family::JSQ11;
        throw Error("unknown policy '" + std::string(s) + "'");
    }

    struct PolicySpec
    {
        Family family = Family::PI;
        bool splittable = false;
        /// Remembered server; only meaningful for JSQ(1,1).
        std::optional<ServerId> memory;

        /// Label with the u/s prefix used in output files, e.g. "uPI", "sJSQ2".
        std::string label() const { return std::string(splittable ? "s" : "u") + std::string(family_name(family)); }
    };

    struct RouteDecision
    {
        Allocation allocation;
        ServerId new_li = 0;
    };

    // ---------------------------------------------------------------------
    // Water filling
    // ---------------------------------------------------------------------

    /// Splits `batch` jobs over `candidates` so that the largest resulting
    /// queue among them is as small as possible: every candidate below the
    /// final level L is raised to L and the r leftover jobs go to a uniformly
    /// random r-subset of the candidates sitting at L. This is the allocation
    /// that one-job-at-a-time greedy filling with uniform tie-breaking
    /// produces, computed in O(k log k).
    inline Allocation water_fill(const std::vector<Count>& q, std::span<const ServerId> candidates, Count batch,
                                 Rng& rng)
    {
        if (candidates.empty())
        {
            throw std::logic_error("water_fill: empty candidate set");
        }
        Allocation out(q.size());
        if (batch <= 0)
        {
            return out;
        }
        std::vector<ServerId> order(candidates.begin(), candidates.end());
        std::stable_sort(order.begin(), order.end(), [&](ServerId a, ServerId b) { return q[a] < q[b]; });

        Count level = q[order[0]];
        Count remaining = batch;
        std::size_t pool = 1;
        while (pool < order.size())
        {
            const Count next = q[order[pool]];
            const Count cost = static_cast<Count>(pool) * (next - level);
            if (cost > remaining)
            {
                break;
            }
            remaining -= cost;
            level = next;
            ++pool;
        }
        level += remaining / static_cast<Count>(pool);
        const auto extra = static_cast<std::size_t>(remaining % static_cast<Count>(pool));

        for (std::size_t j = 0; j < pool; ++j)
        {
            out.counts[order[j]] = level - q[order[j]];
        }
        // Partial Fisher-Yates over the pool picks the uniform extra-job subset.
        for (std::size_t j = 0; j < extra; ++j)
        {
            const auto pick = j + static_cast<std::size_t>(rng.bounded(pool - j));
            std::swap(order[j], order[pick]);
            out.counts[order[j]] += 1;
        }
        return out;
    }

    inline Allocation water_fill(const std::vector<Count>& q, const std::vector<ServerId>& candidates, Count batch,
                                 Rng& rng)
    {
        return water_fill(q, std::span<const ServerId>(candidates), batch, rng);
    }

    // ---------------------------------------------------------------------
    // Batch-splitting rules for PI-Split
    // ---------------------------------------------------------------------

    /// Deterministic splitting function f(q, a, B). The rule receives the
    /// idle set explicitly; it is only invoked when that set is non-empty.
    /// Construction checks both conditions f must satisfy (allocation sums to
    /// the batch; busy servers get nothing while an idle server exists) on an
    /// exhaustive grid of small inputs and rejects a rule that fails.
    class SplitRule
    {
    public:
        using Fn = std::function<Allocation(const std::vector<Count>& q, Count batch,
                                            std::span<const ServerId> idle, std::uint64_t b)>;

        SplitRule(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) { verify(); }

        Allocation operator()(const std::vector<Count>& q, Count batch, std::span<const ServerId> idle,
                              std::uint64_t b) const
        {
            return fn_(q, batch, idle, b);
        }

        const std::string& name() const noexcept { return name_; }

        /// Water filling over the idle servers, ties resolved by a generator
        /// seeded from B. With all idle queues at zero this is the even split.
        static SplitRule water_fill_idle()
        {
            return SplitRule("water-fill", [](const std::vector<Count>& q, Count batch, std::span<const ServerId> idle,
                                              std::uint64_t b) {
                Rng local(b);
                return water_fill(q, idle, batch, local);
            });
        }

        /// Whole batch to the idle server selected by B. Since B is the word the
        /// Last-Idle draw came from, that server is the new Last-Idle server.
        static SplitRule single_idle()
        {
            return SplitRule("single-idle",
                             [](const std::vector<Count>& q, Count batch, std::span<const ServerId> idle, std::uint64_t b) {
                                 Allocation a(q.size());
                                 a.counts[idle[index_from_word(b, idle.size())]] = batch;
                                 return a;
                             });
        }

    private:
        void verify() const
        {
            static constexpr std::uint64_t kWords[] = {0, 1, 0x8000000000000000ULL, 0x123456789abcdef0ULL,
                                                       ~std::uint64_t{0}};
            for (std::size_t n = 1; n <= 3; ++n)
            {
                std::vector<Count> q(n, 0);
                // Enumerate q in {0,1,2}^n.
                std::size_t combos = 1;
                for (std::size_t i = 0; i < n; ++i)
                    combos *= 3;
                for (std::size_t code = 0; code < combos; ++code)
                {
                    std::size_t c = code;
                    for (std::size_t i = 0; i < n; ++i)
                    {
                        q[i] = static_cast<Count>(c % 3);
                        c /= 3;
                    }
                    const auto idle = idle_set(q);
                    if (idle.empty())
                        continue;
                    for (Count batch = 0; batch <= 4; ++batch)
                    {
                        for (const auto b : kWords)
                        {
                            const Allocation a = fn_(q, batch, idle, b);
                            if (a.counts.size() != n || a.total() != batch)
                                throw Error("split rule '" + name_ + "' does not assign exactly the batch");
                            for (std::size_t i = 0; i < n; ++i)
                            {
                                if (a.counts[i] < 0 || (q[i] > 0 && a.counts[i] != 0))
                                    throw Error("split rule '" + name_ + "' sends jobs to a busy server");
                            }
                        }
                    }
                }
            }
        }

        std::string name_;
        Fn fn_;
    };

    // ---------------------------------------------------------------------
    // Individual policies
    // ---------------------------------------------------------------------

    /// Persistent-Idle: with idle servers, the new Last-Idle server is uniform
    /// over I(t-1); otherwise it is unchanged. The whole batch goes there.
    inline RouteDecision route_pi(const SystemState& state, Count batch, RngStreams& streams)
    {
        RouteDecision d{Allocation(state.size()), state.li};
        const auto idle = idle_set(state);
        if (!idle.empty())
        {
            d.new_li = idle[draw_tie(idle.size(), streams.tie_break()).index];
        }
        d.allocation.counts[d.new_li] = batch;
        return d;
    }

    /// PI-Split: as PI when nobody is idle; otherwise the batch is split by
    /// `rule` over the idle servers. B(t) is the raw word behind the Last-Idle
    /// draw, so PI-Split consumes exactly the randomness PI does.
    inline RouteDecision route_pi_split(const SystemState& state, Count batch, RngStreams& streams,
                                        const SplitRule& rule)
    {
        const auto idle = idle_set(state);
        if (idle.empty())
        {
            return route_pi(state, batch, streams);
        }
        const TieDraw draw = draw_tie(idle.size(), streams.tie_break());
        RouteDecision d{rule(state.q, batch, idle, draw.word), idle[draw.index]};
        return d;
    }

    namespace detail
    {
        /// Uniform argmin of q over `candidates`.
        inline ServerId argmin_uniform(const std::vector<Count>& q, std::span<const ServerId> candidates, Rng& tie)
        {
            Count best = std::numeric_limits<Count>::max();
            std::vector<ServerId> ties;
            for (const ServerId c : candidates)
            {
                if (q[c] < best)
                {
                    best = q[c];
                    ties.assign(1, c);
                }
                else if (q[c] == best && std::find(ties.begin(), ties.end(), c) == ties.end())
                {
                    ties.push_back(c);
                }
            }
            return ties.size() == 1 ? ties[0] : tie_break_uniform(ties, tie);
        }

        inline std::vector<ServerId> all_servers(std::size_t n)
        {
            std::vector<ServerId> v(n);
            for (std::size_t i = 0; i < n; ++i)
                v[i] = i;
            return v;
        }

        /// Two distinct uniformly chosen servers (one when n == 1).
        inline std::vector<ServerId> sample_pair(std::size_t n, Rng& rng)
        {
            if (n == 1)
                return {0};
            const auto a = static_cast<ServerId>(rng.bounded(n));
            auto b = static_cast<ServerId>(rng.bounded(n - 1));
            if (b >= a)
                ++b;
            return {a, b};
        }

        inline RouteDecision assign(const SystemState& state, const std::vector<Count>& q,
                                    std::span<const ServerId> candidates, Count batch, bool splittable,
                                    RngStreams& streams)
        {
            RouteDecision d{Allocation(q.size()), state.li};
            if (splittable)
            {
                d.allocation = water_fill(q, candidates, batch, streams.tie_break());
            }
            else
            {
                d.allocation.counts[argmin_uniform(q, candidates, streams.tie_break())] = batch;
            }
            return d;
        }
    } // namespace detail

    inline RouteDecision route_jsq(const SystemState& state, Count batch, RngStreams& streams, bool splittable)
    {
        if (batch == 0)
            return {Allocation(state.size()), state.li};
        const auto all = detail::all_servers(state.size());
        return detail::assign(state, state.q, all, batch, splittable, streams);
    }

    inline RouteDecision route_jsq2(const SystemState& state, Count batch, RngStreams& streams, bool splittable)
    {
        if (batch == 0)
            return {Allocation(state.size()), state.li};
        const auto pair = detail::sample_pair(state.size(), streams.policy_choice());
        return detail::assign(state, state.q, pair, batch, splittable, streams);
    }

    /// Power-of-memory: compares the remembered server with one uniform
    /// sample, then remembers whichever of the two is less loaded after the
    /// assignment (ties uniform).
    inline RouteDecision route_jsq11(const SystemState& state, Count batch, RngStreams& streams, bool splittable,
                                     ServerId& memory)
    {
        if (batch == 0)
            return {Allocation(state.size()), state.li};
        const auto sampled = static_cast<ServerId>(streams.policy_choice().bounded(state.size()));
        std::vector<ServerId> pair{memory};
        if (sampled != memory)
            pair.push_back(sampled);
        RouteDecision d = detail::assign(state, state.q, pair, batch, splittable, streams);
        std::vector<Count> after(state.q);
        for (const ServerId c : pair)
            after[c] += d.allocation.counts[c];
        memory = detail::argmin_uniform(after, pair, streams.tie_break());
        return d;
    }

    /// Join-Idle-Queue. Unsplittable: uniform idle server, else a uniform
    /// server. Splittable: even split over the idle servers, else every job to
    /// an independent uniform server.
    inline RouteDecision route_jiq(const SystemState& state, Count batch, RngStreams& streams, bool splittable)
    {
        RouteDecision d{Allocation(state.size()), state.li};
        if (batch == 0)
            return d;
        const auto idle = idle_set(state);
        if (!idle.empty())
        {
            if (splittable)
                d.allocation = water_fill(state.q, idle, batch, streams.tie_break());
            else
                d.allocation.counts[tie_break_uniform(idle, streams.tie_break())] = batch;
            return d;
        }
        if (splittable)
        {
            for (Count j = 0; j < batch; ++j)
                d.allocation.counts[streams.policy_choice().bounded(state.size())] += 1;
        }
        else
        {
            d.allocation.counts[streams.policy_choice().bounded(state.size())] = batch;
        }
        return d;
    }

    // ---------------------------------------------------------------------
    // Router: one interface over all ten variants
    // ---------------------------------------------------------------------

    class Router
    {
    public:
        explicit Router(PolicySpec spec, SplitRule split = SplitRule::water_fill_idle())
            : spec_(std::move(spec)), split_(std::move(split))
        {
            if (spec_.memory && spec_.family != Family::JSQ11)
            {
                throw Error("memory is only defined for JSQ(1,1)");
            }
        }

        /// Draws the JSQ(1,1) memory uniformly when it was not given.
        void initialize(std::size_t n, RngStreams& streams)
        {
            if (spec_.family == Family::JSQ11)
            {
                if (!spec_.memory)
                    spec_.memory = static_cast<ServerId>(streams.policy_choice().bounded(n));
                if (*spec_.memory >= n)
                    throw Error("JSQ(1,1) memory out of range");
            }
        }

        RouteDecision route(const SystemState& state, Count batch, RngStreams& streams)
        {
            switch (spec_.family)
            {
            case Family::PI:
                return spec_.splittable ? route_pi_split(state, batch, streams, split_)
                                        : route_pi(state, batch, streams);
            case Family::JIQ:
                return route_jiq(state, batch, streams, spec_.splittable);
            case Family::JSQ:
                return route_jsq(state, batch, streams, spec_.splittable);
            case Family::JSQ2:
                return route_jsq2(state, batch, streams, spec_.splittable);
            case Family::JSQ11:
                if (!spec_.memory)
                    initialize(state.size(), streams);
                return route_jsq11(state, batch, streams, spec_.splittable, *spec_.memory);
            }
            throw std::logic_error("unknown policy family");
        }

        /// Dispatcher messages for one slot: tokens for PI/JIQ, probes otherwise.
        Count messages(const SlotEvents& ev, std::size_t n) const
        {
            switch (spec_.family)
            {
            case Family::PI:
            case Family::JIQ:
                return ev.tokens_sent;
            case Family::JSQ:
                return ev.batch_size > 0 ? static_cast<Count>(n) : 0;
            case Family::JSQ2:
            case Family::JSQ11:
                return ev.batch_size > 0 ? static_cast<Count>(std::min<std::size_t>(2, n)) : 0;
            }
            return 0;
        }

        const PolicySpec& spec() const noexcept { return spec_; }
        const SplitRule& split_rule() const noexcept { return split_; }

    private:
        PolicySpec spec_;
        SplitRule split_;
    };
} // namespace pisim
