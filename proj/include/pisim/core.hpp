#pragma once

// Domain types shared by every module: the model parameters, the Markov state
// (queue lengths, Last-Idle server, token locations), routing output and the
// per-slot event record.
//
// Server indices are 0-based in code. Anything written for humans (CSV, JSON,
// diagnostics) uses 1-based indices.

#include "pisim/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pisim
{
    using Slot = std::int64_t;
    using ServerId = std::size_t;

    /// Thrown when a run breaks one of the model's bookkeeping invariants.
    class InvariantViolation : public std::logic_error
    {
    public:
        using std::logic_error::logic_error;
    };

    struct ModelParams
    {
        std::size_t n = 0;
        DistSpec arrival;
        std::vector<DistSpec> capacities;
        Count s_max = 0;
        double lambda = 0.0;
        double sigma_a = 0.0;
        std::vector<double> mu;
        std::vector<double> sigma_s;

        double total_service_rate() const { return std::accumulate(mu.begin(), mu.end(), 0.0); }
        double mu_min() const { return mu.empty() ? 0.0 : *std::min_element(mu.begin(), mu.end()); }
        double load() const { return lambda / total_service_rate(); }
    };

    /// Builds a model, filling in s_max and the analytic moments.
    inline ModelParams make_model(DistSpec arrival, std::vector<DistSpec> capacities)
    {
        check_dist(arrival);
        ModelParams p;
        p.n = capacities.size();
        const Moments a = moments(arrival);
        p.lambda = a.mean;
        p.sigma_a = std::sqrt(a.variance);
        for (const auto& c : capacities)
        {
            check_dist(c);
            const Moments m = moments(c);
            p.mu.push_back(m.mean);
            p.sigma_s.push_back(std::sqrt(m.variance));
            p.s_max = std::max(p.s_max, support_max(c));
        }
        p.arrival = std::move(arrival);
        p.capacities = std::move(capacities);
        return p;
    }

    /// Lists every violated model invariant; empty means the model is valid.
    inline std::vector<std::string> validate(const ModelParams& p)
    {
        std::vector<std::string> errors;
        auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };

        if (p.n == 0)
        {
            errors.emplace_back("server count must be positive");
        }
        if (p.capacities.size() != p.n || p.mu.size() != p.n || p.sigma_s.size() != p.n)
        {
            errors.emplace_back("per-server vectors must have length n");
            return errors;
        }
        if (p.s_max < 1)
        {
            errors.emplace_back("s_max must be a positive integer");
        }
        for (std::size_t i = 0; i < p.n; ++i)
        {
            const auto& c = p.capacities[i];
            const std::string who = "server " + std::to_string(i + 1) + ": ";
            try
            {
                check_dist(c);
            }
            catch (const Error& e)
            {
                errors.push_back(who + e.what());
                continue;
            }
            if (support_min(c) < 1)
            {
                errors.push_back(who + "capacity below 1");
            }
            if (support_max(c) > p.s_max)
            {
                errors.push_back(who + "capacity above s_max");
            }
            if (!(p.mu[i] >= 1.0 && p.mu[i] <= static_cast<double>(p.s_max)))
            {
                errors.push_back(who + "mean capacity outside [1, s_max]");
            }
            const Moments m = moments(c);
            if (!close(p.mu[i], m.mean) || !close(p.sigma_s[i], std::sqrt(m.variance)))
            {
                errors.push_back(who + "capacity moments do not match the distribution");
            }
        }
        try
        {
            check_dist(p.arrival);
            if (!has_zero_mass(p.arrival))
            {
                errors.emplace_back("zero-arrival probability required");
            }
            const Moments a = moments(p.arrival);
            if (!close(p.lambda, a.mean) || !close(p.sigma_a, std::sqrt(a.variance)))
            {
                errors.emplace_back("arrival moments do not match the distribution");
            }
        }
        catch (const Error& e)
        {
            errors.push_back(std::string("arrival: ") + e.what());
        }
        return errors;
    }

    struct SystemState
    {
        std::vector<Count> q;
        ServerId li = 0;
        /// dispatcher_tokens[i] is true while the dispatcher holds server i's token.
        std::vector<bool> dispatcher_tokens;
        Slot slot = 0;

        std::size_t size() const noexcept { return q.size(); }
        Count total() const { return std::accumulate(q.begin(), q.end(), Count{0}); }

        friend bool operator==(const SystemState&, const SystemState&) = default;
    };

    /// I(t): servers with an empty queue, ascending.
    inline std::vector<ServerId> idle_set(const std::vector<Count>& q)
    {
        std::vector<ServerId> idle;
        for (ServerId i = 0; i < q.size(); ++i)
        {
            if (q[i] == 0)
            {
                idle.push_back(i);
            }
        }
        return idle;
    }

    inline std::vector<ServerId> idle_set(const SystemState& s) { return idle_set(s.q); }

    /// Servers whose token currently sits at the dispatcher, ascending.
    inline std::vector<ServerId> token_holders(const SystemState& s)
    {
        std::vector<ServerId> out;
        for (ServerId i = 0; i < s.dispatcher_tokens.size(); ++i)
        {
            if (s.dispatcher_tokens[i])
            {
                out.push_back(i);
            }
        }
        return out;
    }

    /// State with the given queues; the dispatcher holds exactly the idle tokens.
    inline SystemState make_state(std::vector<Count> q, ServerId li, Slot slot = 0)
    {
        SystemState s;
        s.q = std::move(q);
        if (li >= s.q.size())
        {
            throw Error("Last-Idle index out of range");
        }
        for (const Count v : s.q)
        {
            if (v < 0)
            {
                throw Error("queue lengths must be non-negative");
            }
        }
        s.li = li;
        s.slot = slot;
        s.dispatcher_tokens.resize(s.q.size());
        for (std::size_t i = 0; i < s.q.size(); ++i)
        {
            s.dispatcher_tokens[i] = s.q[i] == 0;
        }
        return s;
    }

    /// Jobs assigned to each server from one batch.
    struct Allocation
    {
        std::vector<Count> counts;

        Allocation() = default;
        explicit Allocation(std::size_t n) : counts(n, 0) {}

        Count total() const { return std::accumulate(counts.begin(), counts.end(), Count{0}); }

        /// Number of non-empty sub-batches.
        std::size_t nonempty() const
        {
            return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](Count c) { return c > 0; }));
        }

        friend bool operator==(const Allocation&, const Allocation&) = default;
    };

    struct Job
    {
        std::uint64_t id = 0;
        Slot arrival_slot = 0;
        ServerId server = 0;
        Count position_in_batch = 0;
        std::optional<Slot> completion_slot;
    };

    /// A run of consecutive job ids that arrived together at one server and
    /// completed in the same slot.
    struct CompletedRange
    {
        std::uint64_t first_id = 0;
        Count count = 0;
        Slot arrival_slot = 0;
        ServerId server = 0;

        friend bool operator==(const CompletedRange&, const CompletedRange&) = default;
    };

    struct SlotEvents
    {
        Slot slot = 0;
        Count batch_size = 0;
        Allocation allocation;
        /// Realized capacities s_i(t).
        std::vector<Count> capacities;
        /// d_i(t).
        std::vector<Count> departures;
        std::vector<CompletedRange> completed_jobs;
        /// Server-to-dispatcher token messages sent at the end of the slot.
        Count tokens_sent = 0;
        /// Some server other than LI(t) is idle at the end of the slot.
        bool is_sampling_event = false;
        /// LI(t).
        ServerId li = 0;

        friend bool operator==(const SlotEvents&, const SlotEvents&) = default;
    };

    /// Compact per-slot summary kept for every slot of a run.
    struct SlotRecord
    {
        Slot slot = 0;
        Count batch = 0;
        Count sub_batches = 0;
        Count tokens_sent = 0;
        /// Policy-dependent dispatcher message count for this slot.
        Count messages = 0;
        Count total_q = 0;
        ServerId li = 0;
        bool is_sampling_event = false;

        friend bool operator==(const SlotRecord&, const SlotRecord&) = default;
    };
} // namespace pisim
