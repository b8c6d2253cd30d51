#pragma once

// Steady-state statistics: time-averaged total queue, messages per slot, job
// completion time CDF, instability flag, and the per-batch message audit.

#include "pisim/core.hpp"
#include "pisim/engine.hpp"
#include "pisim/policies.hpp"

#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace pisim
{
    using CdfPoint = std::pair<Count, double>;

    /// Empirical CDF evaluated at each distinct value.
    inline std::vector<CdfPoint> jct_cdf(const std::map<Count, Count>& histogram)
    {
        Count total = 0;
        for (const auto& [value, count] : histogram)
        {
            if (value < 1)
                throw Error("completion times must be at least 1");
            total += count;
        }
        std::vector<CdfPoint> out;
        Count running = 0;
        for (const auto& [value, count] : histogram)
        {
            running += count;
            out.emplace_back(value, static_cast<double>(running) / static_cast<double>(total));
        }
        return out;
    }

    inline std::vector<CdfPoint> jct_cdf(std::span<const Count> completions)
    {
        std::map<Count, Count> h;
        for (const Count c : completions)
            ++h[c];
        return jct_cdf(h);
    }

    struct SummaryStats
    {
        double avg_total_queue = 0.0;
        double messages_per_slot = 0.0;
        std::vector<CdfPoint> jct_cdf;
        std::map<Count, Count> jct_histogram;
        Count completed_count = 0;
        Count arrived_count = 0;
        Slot warmup_slots = 0;
        Slot recorded_slots = 0;
        Count total_messages = 0;
        double first_half_avg = 0.0;
        double second_half_avg = 0.0;
        Count final_total_queue = 0;
        bool unstable = false;
    };

    /// Run flagged when the second half of the post-warmup window averages
    /// more than twice the first half and the final total queue exceeds ten
    /// times the run mean.
    inline bool apparently_unstable(double first_half, double second_half, Count final_total, double run_mean)
    {
        return second_half > 2.0 * first_half && static_cast<double>(final_total) > 10.0 * run_mean;
    }

    class MetricsRecorder
    {
    public:
        MetricsRecorder(Slot horizon, Slot warmup, Count initial_jobs = 0)
            : horizon_(horizon), warmup_(warmup), arrived_(initial_jobs)
        {
            if (warmup < 0 || warmup >= horizon)
                throw Error("warmup must lie in [0, horizon)");
            const Slot window = horizon - warmup;
            midpoint_ = warmup + window / 2;
        }

        /// `messages` is the policy's dispatcher message count for the slot.
        void record(const SlotEvents& ev, const SystemState& state, Count messages)
        {
            if (ev.slot != last_slot_ + 1)
                throw std::logic_error("metrics recorded out of order");
            last_slot_ = ev.slot;
            arrived_ += ev.batch_size;
            for (const Count d : ev.departures)
                completed_ += d;
            final_total_ = state.total();
            if (ev.slot <= warmup_)
                return;
            const auto q = static_cast<double>(final_total_);
            sum_q_ += q;
            (ev.slot <= midpoint_ ? first_sum_ : second_sum_) += q;
            (ev.slot <= midpoint_ ? first_n_ : second_n_) += 1;
            messages_ += messages;
            ++slots_;
            for (const CompletedRange& r : ev.completed_jobs)
            {
                if (r.arrival_slot > warmup_)
                    jct_[ev.slot - r.arrival_slot + 1] += r.count;
            }
        }

        SummaryStats summary() const
        {
            SummaryStats s;
            s.warmup_slots = warmup_;
            s.recorded_slots = slots_;
            s.arrived_count = arrived_;
            s.completed_count = completed_;
            s.total_messages = messages_;
            s.final_total_queue = final_total_;
            s.jct_histogram = jct_;
            s.jct_cdf = jct_cdf(jct_);
            if (slots_ > 0)
            {
                s.avg_total_queue = sum_q_ / static_cast<double>(slots_);
                s.messages_per_slot = static_cast<double>(messages_) / static_cast<double>(slots_);
            }
            s.first_half_avg = first_n_ ? first_sum_ / static_cast<double>(first_n_) : 0.0;
            s.second_half_avg = second_n_ ? second_sum_ / static_cast<double>(second_n_) : 0.0;
            s.unstable = apparently_unstable(s.first_half_avg, s.second_half_avg, final_total_, s.avg_total_queue);
            return s;
        }

    private:
        Slot horizon_;
        Slot warmup_;
        Slot midpoint_ = 0;
        Slot last_slot_ = 0;
        Count arrived_ = 0;
        Count completed_ = 0;
        Count messages_ = 0;
        Count final_total_ = 0;
        Slot slots_ = 0;
        double sum_q_ = 0.0;
        double first_sum_ = 0.0;
        double second_sum_ = 0.0;
        Slot first_n_ = 0;
        Slot second_n_ = 0;
        std::map<Count, Count> jct_;
    };

    /// Pooled statistics over replicas of one cell; slot-weighted averages.
    inline SummaryStats merge(std::span<const SummaryStats> parts)
    {
        SummaryStats out;
        double q_weighted = 0.0, first = 0.0, second = 0.0;
        for (const SummaryStats& p : parts)
        {
            out.recorded_slots += p.recorded_slots;
            out.warmup_slots += p.warmup_slots;
            out.arrived_count += p.arrived_count;
            out.completed_count += p.completed_count;
            out.total_messages += p.total_messages;
            out.final_total_queue += p.final_total_queue;
            q_weighted += p.avg_total_queue * static_cast<double>(p.recorded_slots);
            first += p.first_half_avg;
            second += p.second_half_avg;
            out.unstable = out.unstable || p.unstable;
            for (const auto& [v, c] : p.jct_histogram)
                out.jct_histogram[v] += c;
        }
        if (out.recorded_slots > 0)
        {
            out.avg_total_queue = q_weighted / static_cast<double>(out.recorded_slots);
            out.messages_per_slot = static_cast<double>(out.total_messages) / static_cast<double>(out.recorded_slots);
        }
        if (!parts.empty())
        {
            out.first_half_avg = first / static_cast<double>(parts.size());
            out.second_half_avg = second / static_cast<double>(parts.size());
        }
        out.jct_cdf = jct_cdf(out.jct_histogram);
        return out;
    }

    struct AuditResult
    {
        bool ok = true;
        std::optional<Slot> first_violation;
        Count messages = 0;
        /// Batches (unsplittable PI) or non-empty sub-batches, plus the
        /// initial credit.
        Count allowance = 0;
    };

    /// Checks that cumulative token messages never exceed the cumulative number
    /// of non-empty batches (or non-empty sub-batches when splitting). Servers
    /// already busy in the initial state each hold one token of credit.
    inline AuditResult message_audit(std::span<const SlotRecord> records, bool splittable, Count initial_credit = 0)
    {
        AuditResult r;
        r.allowance = initial_credit;
        for (const SlotRecord& rec : records)
        {
            r.messages += rec.tokens_sent;
            r.allowance += splittable ? rec.sub_batches : (rec.batch > 0 ? 1 : 0);
            if (r.ok && r.messages > r.allowance)
            {
                r.ok = false;
                r.first_violation = rec.slot;
            }
        }
        return r;
    }

    inline AuditResult message_audit(const Trace& trace, const PolicySpec& policy)
    {
        Count credit = 0;
        for (const Count q : trace.initial.q)
            credit += q > 0 ? 1 : 0;
        return message_audit(trace.records, policy.splittable, credit);
    }

    struct RunResult
    {
        Trace trace;
        SummaryStats stats;
    };

    /// Simulation plus metrics; the first `warmup` slots are excluded from
    /// the steady-state averages.
    inline RunResult run(const ModelParams& params, const PolicySpec& policy, const RunOptions& opt, Slot warmup,
                         const SlotHook& hook = {})
    {
        if (opt.initial && opt.initial->slot != 0)
            throw Error("runs start at slot 0");
        Count initial_jobs = 0;
        if (opt.initial)
            initial_jobs = opt.initial->total();
        MetricsRecorder rec(opt.horizon, warmup, initial_jobs);
        const std::size_t n = params.n;
        Router probe(policy);
        RunResult out;
        out.trace = simulate(params, policy, opt, [&](const SystemState& s, const SlotEvents& ev) {
            rec.record(ev, s, probe.messages(ev, n));
            if (hook)
                hook(s, ev);
        });
        out.stats = rec.summary();
        return out;
    }
} // namespace pisim
