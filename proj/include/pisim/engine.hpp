#pragma once

// Slot-by-slot simulation: arrivals, routing, service (just-arrived jobs
// included), then communication. Also replay, sampling times and trace export.

#include "pisim/core.hpp"
#include "pisim/policies.hpp"

#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace pisim
{
    /// FIFO job identities per server, stored as blocks of consecutive ids
    /// that share an arrival slot.
    class JobLedger
    {
    public:
        JobLedger() = default;
        explicit JobLedger(std::size_t n) : queues_(n) {}

        void add(ServerId server, Count count, Slot arrival_slot)
        {
            if (count <= 0)
                return;
            queues_[server].push_back(Block{next_id_, count, arrival_slot});
            next_id_ += static_cast<std::uint64_t>(count);
        }

        /// Removes the `count` oldest jobs at `server`, appending them to `out`.
        void serve(ServerId server, Count count, std::vector<CompletedRange>& out)
        {
            auto& dq = queues_[server];
            while (count > 0)
            {
                if (dq.empty())
                    throw InvariantViolation("job ledger: server " + std::to_string(server + 1) +
                                             " serves more jobs than it holds");
                Block& front = dq.front();
                const Count take = std::min(count, front.count);
                out.push_back(CompletedRange{front.first_id, take, front.arrival_slot, server});
                front.first_id += static_cast<std::uint64_t>(take);
                front.count -= take;
                count -= take;
                if (front.count == 0)
                    dq.pop_front();
            }
        }

        Count held(ServerId server) const
        {
            Count total = 0;
            for (const Block& b : queues_[server])
                total += b.count;
            return total;
        }

        std::uint64_t issued() const noexcept { return next_id_; }

    private:
        struct Block
        {
            std::uint64_t first_id;
            Count count;
            Slot arrival_slot;
        };
        std::vector<std::deque<Block>> queues_;
        std::uint64_t next_id_ = 0;
    };

    struct Trace
    {
        SystemState initial;
        /// One record per slot, always kept.
        std::vector<SlotRecord> records;
        /// Full events, only when requested.
        std::vector<SlotEvents> events;
        /// Row-major end-of-slot queue vectors, only when requested.
        std::vector<Count> queues;
        SystemState final;

        std::size_t n() const noexcept { return initial.size(); }
    };

    /// Stateful single-run simulator. Owns the streams, the router and the
    /// job ledger; every call to step() advances one slot.
    class Simulator
    {
    public:
        Simulator(const ModelParams& params, Router router, std::uint64_t seed,
                  std::optional<SystemState> initial = std::nullopt)
            : params_(params), router_(std::move(router)), streams_(seed, params.n), ledger_(params.n)
        {
            const auto problems = validate(params_);
            if (!problems.empty())
                throw Error("invalid model: " + problems.front());
            arrival_ = Sampler(params_.arrival);
            for (const auto& c : params_.capacities)
                capacity_.emplace_back(c);

            if (initial)
            {
                if (initial->size() != params_.n)
                    throw Error("initial state has the wrong number of servers");
                state_ = make_state(initial->q, initial->li, initial->slot);
            }
            else
            {
                const auto idle = idle_set(std::vector<Count>(params_.n, 0));
                state_ = make_state(std::vector<Count>(params_.n, 0), tie_break_uniform(idle, streams_.tie_break()));
            }
            for (ServerId i = 0; i < params_.n; ++i)
            {
                ledger_.add(i, state_.q[i], state_.slot);
                initial_busy_ += state_.q[i] > 0 ? 1 : 0;
            }
            arrived_ = state_.total();
            router_.initialize(params_.n, streams_);
        }

        const SlotEvents& step()
        {
            const std::size_t n = params_.n;
            SlotEvents& ev = events_;
            ev.slot = state_.slot + 1;
            ev.batch_size = arrival_(streams_.arrival());

            RouteDecision d = router_.route(state_, ev.batch_size, streams_);
            check_allocation(d);
            ev.allocation = std::move(d.allocation);

            ev.capacities.resize(n);
            ev.departures.resize(n);
            ev.completed_jobs.clear();
            ev.tokens_sent = 0;
            for (ServerId i = 0; i < n; ++i)
                ev.capacities[i] = capacity_[i](streams_.capacity(i));

            for (ServerId i = 0; i < n; ++i)
            {
                const Count a = ev.allocation.counts[i];
                // The token travels back with the jobs.
                if (a > 0)
                    state_.dispatcher_tokens[i] = false;
                ledger_.add(i, a, ev.slot);
                const Count pre = state_.q[i] + a;
                if (pre < state_.q[i])
                    throw InvariantViolation("queue overflow at server " + std::to_string(i + 1));
                const Count s = ev.capacities[i];
                if (s < 1 || s > params_.s_max)
                    throw InvariantViolation("capacity outside [1, s_max]");
                const Count dep = std::min(s, pre);
                ev.departures[i] = dep;
                ledger_.serve(i, dep, ev.completed_jobs);
                state_.q[i] = pre - dep;
                if (pre > 0 && state_.q[i] == 0)
                {
                    ++ev.tokens_sent;
                    if (state_.dispatcher_tokens[i])
                        throw InvariantViolation("server " + std::to_string(i + 1) + " sent a token it did not hold");
                    state_.dispatcher_tokens[i] = true;
                }
            }

            state_.li = d.new_li;
            state_.slot = ev.slot;
            ev.li = state_.li;
            ev.is_sampling_event = false;
            for (ServerId i = 0; i < n; ++i)
            {
                if (i != state_.li && state_.q[i] == 0)
                {
                    ev.is_sampling_event = true;
                    break;
                }
            }

            arrived_ += ev.batch_size;
            for (const Count dep : ev.departures)
                completed_ += dep;
            check_state();
            return ev;
        }

        SlotRecord record() const
        {
            SlotRecord r;
            r.slot = events_.slot;
            r.batch = events_.batch_size;
            r.sub_batches = static_cast<Count>(events_.allocation.nonempty());
            r.tokens_sent = events_.tokens_sent;
            r.messages = router_.messages(events_, params_.n);
            r.total_q = state_.total();
            r.li = events_.li;
            r.is_sampling_event = events_.is_sampling_event;
            return r;
        }

        const SystemState& state() const noexcept { return state_; }
        const SlotEvents& last_events() const noexcept { return events_; }
        const Router& router() const noexcept { return router_; }
        const ModelParams& params() const noexcept { return params_; }
        Count arrived() const noexcept { return arrived_; }
        Count completed() const noexcept { return completed_; }
        /// Servers busy at the start; each may send one token without a batch.
        Count initial_busy() const noexcept { return initial_busy_; }

    private:
        void check_allocation(const RouteDecision& d) const
        {
            const auto& c = d.allocation.counts;
            if (c.size() != params_.n)
                throw InvariantViolation("allocation has the wrong length");
            for (const Count v : c)
                if (v < 0)
                    throw InvariantViolation("negative allocation");
            if (d.allocation.total() != events_.batch_size)
                throw InvariantViolation("allocation does not sum to the batch at slot " +
                                         std::to_string(events_.slot));
            if (d.new_li >= params_.n)
                throw InvariantViolation("Last-Idle index out of range");
            if (router_.spec().family == Family::PI && !idle_set(state_).empty())
            {
                for (ServerId i = 0; i < params_.n; ++i)
                    if (c[i] > 0 && state_.q[i] > 0)
                        throw InvariantViolation("busy server " + std::to_string(i + 1) + " received jobs at slot " +
                                                 std::to_string(events_.slot));
            }
        }

        void check_state() const
        {
            for (ServerId i = 0; i < params_.n; ++i)
            {
                if (state_.dispatcher_tokens[i] != (state_.q[i] == 0))
                    throw InvariantViolation("token of server " + std::to_string(i + 1) +
                                             " disagrees with its queue at slot " + std::to_string(state_.slot));
            }
            if (arrived_ != completed_ + state_.total())
                throw InvariantViolation("job conservation broken at slot " + std::to_string(state_.slot));
        }

        ModelParams params_;
        Router router_;
        RngStreams streams_;
        JobLedger ledger_;
        Sampler arrival_;
        std::vector<Sampler> capacity_;
        SystemState state_;
        SlotEvents events_;
        Count arrived_ = 0;
        Count completed_ = 0;
        Count initial_busy_ = 0;
    };

    struct RunOptions
    {
        Slot horizon = 1000;
        std::uint64_t seed = 1;
        std::optional<SystemState> initial;
        bool keep_events = false;
        bool keep_queues = false;
        std::optional<SplitRule> split;
    };

    using SlotHook = std::function<void(const SystemState&, const SlotEvents&)>;

    /// Runs `horizon` slots and returns the trace; `hook` sees every slot.
    inline Trace simulate(const ModelParams& params, const PolicySpec& policy, const RunOptions& opt,
                          const SlotHook& hook = {})
    {
        if (opt.horizon < 1)
            throw Error("horizon must be at least 1");
        Router router = opt.split ? Router(policy, *opt.split) : Router(policy);
        Simulator sim(params, std::move(router), opt.seed, opt.initial);
        Trace tr;
        tr.initial = sim.state();
        tr.records.reserve(static_cast<std::size_t>(opt.horizon));
        if (opt.keep_events)
            tr.events.reserve(static_cast<std::size_t>(opt.horizon));
        if (opt.keep_queues)
            tr.queues.reserve(static_cast<std::size_t>(opt.horizon) * params.n);
        for (Slot t = 0; t < opt.horizon; ++t)
        {
            const SlotEvents& ev = sim.step();
            tr.records.push_back(sim.record());
            if (opt.keep_events)
                tr.events.push_back(ev);
            if (opt.keep_queues)
                tr.queues.insert(tr.queues.end(), sim.state().q.begin(), sim.state().q.end());
            if (hook)
                hook(sim.state(), ev);
        }
        tr.final = sim.state();
        return tr;
    }

    /// Re-applies recorded events to `initial` using only the recursion.
    inline SystemState replay(const SystemState& initial, const std::vector<SlotEvents>& events)
    {
        SystemState s = make_state(initial.q, initial.li, initial.slot);
        for (const SlotEvents& ev : events)
        {
            if (ev.slot != s.slot + 1)
                throw InvariantViolation("replay: events out of order");
            if (ev.allocation.total() != ev.batch_size)
                throw InvariantViolation("replay: allocation does not sum to the batch");
            for (ServerId i = 0; i < s.size(); ++i)
            {
                const Count pre = s.q[i] + ev.allocation.counts[i];
                const Count dep = std::min(ev.capacities[i], pre);
                if (dep != ev.departures[i])
                    throw InvariantViolation("replay: departures disagree at slot " + std::to_string(ev.slot));
                s.q[i] = pre - dep;
                s.dispatcher_tokens[i] = s.q[i] == 0;
            }
            s.li = ev.li;
            s.slot = ev.slot;
        }
        return s;
    }

    /// Slots whose end-of-slot state had an idle server other than LI.
    inline std::vector<Slot> sampling_times(const Trace& trace)
    {
        std::vector<Slot> out;
        for (const SlotRecord& r : trace.records)
            if (r.is_sampling_event)
                out.push_back(r.slot);
        return out;
    }

    /// Row per slot: slot, batch, q_1..q_n (if kept), total_q, messages,
    /// is_sampling_event.
    inline void write_trace_csv(std::ostream& os, const Trace& trace)
    {
        const bool with_q = !trace.queues.empty();
        const std::size_t n = trace.n();
        os << "slot,batch";
        if (with_q)
            for (std::size_t i = 0; i < n; ++i)
                os << ",q_" << (i + 1);
        os << ",total_q,messages,is_sampling_event\n";
        for (std::size_t k = 0; k < trace.records.size(); ++k)
        {
            const SlotRecord& r = trace.records[k];
            os << r.slot << ',' << r.batch;
            if (with_q)
                for (std::size_t i = 0; i < n; ++i)
                    os << ',' << trace.queues[k * n + i];
            os << ',' << r.total_q << ',' << r.messages << ',' << (r.is_sampling_event ? 1 : 0) << '\n';
        }
    }
} // namespace pisim
