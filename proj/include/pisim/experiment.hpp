#pragma once

// Experiment runner behind the command-line tool: configuration, scenario
// presets, the (policy x load) run matrix, CSV and JSON output.

#include "pisim/analysis.hpp"
#include "pisim/engine.hpp"
#include "pisim/metrics.hpp"
#include "pisim/policies.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace pisim
{
    enum class Scenario
    {
        Ratio10_90,
        Ratio50_50,
        Ratio90_10,
        Custom
    };

    inline Scenario parse_scenario(std::string_view s)
    {
        if (s == "ratio_10_90")
            return Scenario::Ratio10_90;
        if (s == "ratio_50_50")
            return Scenario::Ratio50_50;
        if (s == "ratio_90_10")
            return Scenario::Ratio90_10;
        if (s == "custom")
            return Scenario::Custom;
        throw Error("unknown scenario '" + std::string(s) + "'");
    }

    inline std::string to_string(Scenario s)
    {
        switch (s)
        {
        case Scenario::Ratio10_90:
            return "ratio_10_90";
        case Scenario::Ratio50_50:
            return "ratio_50_50";
        case Scenario::Ratio90_10:
            return "ratio_90_10";
        case Scenario::Custom:
            return "custom";
        }
        return "?";
    }

    inline std::vector<double> default_loads()
    {
        std::vector<double> v;
        for (int k = 1; k <= 19; ++k)
            v.push_back(k * 0.05);
        v.push_back(0.99);
        return v;
    }

    struct ExperimentConfig
    {
        Scenario scenario = Scenario::Ratio50_50;
        std::size_t n = 100;
        std::vector<Family> policies{Family::PI, Family::JIQ, Family::JSQ, Family::JSQ2, Family::JSQ11};
        bool unsplittable = true;
        bool splittable = true;
        std::vector<double> loads = default_loads();
        Slot horizon = 1'000'000;
        std::uint64_t seed = 1;
        std::string out = "out";
        double warmup_fraction = 0.1;
        bool drift_lab = false;
        std::int64_t drift_reps = 2000;
        bool trace = false;
        unsigned jobs = 1;
        /// Capacity of fast servers; slow servers are always det(1).
        std::string fast_capacity = "uniform(1,19)";
        /// Custom scenario only: one capacity per server, ';'-separated.
        std::string capacities;
        /// Custom scenario only; empty means truncated Poisson at the load.
        std::string arrival;
    };

    inline std::vector<std::string> validate(const ExperimentConfig& c)
    {
        std::vector<std::string> bad;
        if (c.n == 0)
            bad.emplace_back("n must be positive");
        if (c.policies.empty())
            bad.emplace_back("no policies selected");
        if (!c.unsplittable && !c.splittable)
            bad.emplace_back("no split mode selected");
        if (c.loads.empty())
            bad.emplace_back("no loads selected");
        for (const double l : c.loads)
            if (!(l > 0.0 && l < 1.0))
                bad.emplace_back("load " + detail::format_double(l) + " outside (0,1)");
        if (c.horizon < 1000)
            bad.emplace_back("horizon must be at least 1000");
        if (!(c.warmup_fraction >= 0.0 && c.warmup_fraction < 1.0))
            bad.emplace_back("warmup fraction outside [0,1)");
        if (c.scenario == Scenario::Custom && c.capacities.empty())
            bad.emplace_back("custom scenario needs capacities");
        if (c.jobs == 0)
            bad.emplace_back("jobs must be positive");
        return bad;
    }

    inline bool parse_bool(const std::string& v)
    {
        if (v == "1" || v == "true" || v == "yes" || v == "on")
            return true;
        if (v == "0" || v == "false" || v == "no" || v == "off")
            return false;
        throw Error("not a boolean: '" + v + "'");
    }

    inline std::vector<double> parse_loads(const std::string& v)
    {
        std::vector<double> out;
        for (const auto& part : detail::split(v, ','))
            out.push_back(detail::to_double(detail::trim(part)));
        return out;
    }

    inline std::vector<Family> parse_policies(const std::string& v)
    {
        std::vector<Family> out;
        for (const auto& part : detail::split(v, ','))
            out.push_back(parse_family(detail::trim(part)));
        return out;
    }

    inline void apply_split(ExperimentConfig& c, const std::string& v)
    {
        if (v == "u")
            c.unsplittable = true, c.splittable = false;
        else if (v == "s")
            c.unsplittable = false, c.splittable = true;
        else if (v == "both")
            c.unsplittable = c.splittable = true;
        else
            throw Error("split must be u, s or both");
    }

    /// Sets one configuration key from its text value.
    inline void set_key(ExperimentConfig& c, const std::string& key, const std::string& value)
    {
        if (key == "scenario")
            c.scenario = parse_scenario(value);
        else if (key == "n")
            c.n = static_cast<std::size_t>(detail::to_count(value));
        else if (key == "policies")
            c.policies = parse_policies(value);
        else if (key == "split")
            apply_split(c, value);
        else if (key == "loads")
            c.loads = parse_loads(value);
        else if (key == "horizon")
            c.horizon = detail::to_count(value);
        else if (key == "seed")
            c.seed = std::stoull(value);
        else if (key == "out")
            c.out = value;
        else if (key == "warmup_fraction")
            c.warmup_fraction = detail::to_double(value);
        else if (key == "drift_lab")
            c.drift_lab = parse_bool(value);
        else if (key == "drift_reps")
            c.drift_reps = detail::to_count(value);
        else if (key == "trace")
            c.trace = parse_bool(value);
        else if (key == "jobs")
            c.jobs = static_cast<unsigned>(detail::to_count(value));
        else if (key == "fast_capacity")
            c.fast_capacity = value;
        else if (key == "capacities")
            c.capacities = value;
        else if (key == "arrival")
            c.arrival = value;
        else
            throw Error("unknown key '" + key + "'");
    }

    /// Flat `key = value` lines; '#' starts a comment.
    inline void load_config(ExperimentConfig& c, std::istream& in, const std::string& origin = "config")
    {
        std::string line;
        int lineno = 0;
        while (std::getline(in, line))
        {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            const std::string t = detail::trim(line);
            if (t.empty())
                continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw Error(origin + ":" + std::to_string(lineno) + ": expected key = value");
            try
            {
                set_key(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
            }
            catch (const std::exception& e)
            {
                throw Error(origin + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    inline void load_config_file(ExperimentConfig& c, const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw Error("cannot open config file " + path);
        load_config(c, in, path);
    }

    /// PISIM_SEED and PISIM_OUT override the file.
    inline void apply_environment(ExperimentConfig& c)
    {
        if (const char* s = std::getenv("PISIM_SEED"); s && *s)
            c.seed = std::stoull(s);
        if (const char* o = std::getenv("PISIM_OUT"); o && *o)
            c.out = o;
    }

    inline std::pair<std::size_t, std::size_t> slow_fast_split(Scenario s, std::size_t n)
    {
        double slow_share = 0.5;
        if (s == Scenario::Ratio10_90)
            slow_share = 0.1;
        else if (s == Scenario::Ratio90_10)
            slow_share = 0.9;
        const auto slow = static_cast<std::size_t>(std::llround(slow_share * static_cast<double>(n)));
        return {slow, n - slow};
    }

    /// Truncated Poisson batches at rate load * sum(mu), capped at 10 sum(mu).
    inline DistSpec poisson_arrivals(double load, double total_mu)
    {
        return dist::TruncatedPoisson{load * total_mu, static_cast<Count>(std::ceil(10.0 * total_mu))};
    }

    inline ModelParams build_scenario(const ExperimentConfig& c, double load)
    {
        std::vector<DistSpec> caps;
        if (c.scenario == Scenario::Custom)
        {
            if (c.capacities.empty())
                throw Error("custom scenario needs capacities");
            for (const auto& part : detail::split(c.capacities, ';'))
                caps.push_back(parse_dist(detail::trim(part)));
            if (caps.size() == 1 && c.n > 1)
                caps.assign(c.n, caps.front());
            if (caps.size() != c.n)
                throw Error("custom scenario lists " + std::to_string(caps.size()) + " capacities for n=" +
                            std::to_string(c.n));
        }
        else
        {
            const auto [slow, fast] = slow_fast_split(c.scenario, c.n);
            const DistSpec fast_cap = parse_dist(c.fast_capacity);
            caps.assign(slow, dist::Deterministic{1});
            caps.insert(caps.end(), fast, fast_cap);
        }
        double total_mu = 0.0;
        for (const auto& d : caps)
            total_mu += moments(d).mean;
        const DistSpec arrival =
            (c.scenario == Scenario::Custom && !c.arrival.empty()) ? parse_dist(c.arrival) : poisson_arrivals(load, total_mu);
        ModelParams p = make_model(arrival, std::move(caps));
        const auto problems = pisim::validate(p);
        if (!problems.empty())
            throw Error("scenario violates the model: " + problems.front());
        return p;
    }

    /// Runs fn(0..count-1) on up to `jobs` threads.
    template <class Fn>
    void parallel_for(std::size_t count, unsigned jobs, Fn&& fn)
    {
        jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
        if (jobs == 1)
        {
            for (std::size_t i = 0; i < count; ++i)
                fn(i);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex m;
        std::vector<std::thread> workers;
        for (unsigned w = 0; w < jobs; ++w)
        {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++)
                {
                    try
                    {
                        fn(i);
                    }
                    catch (...)
                    {
                        std::lock_guard lock(m);
                        if (!failure)
                            failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : workers)
            t.join();
        if (failure)
            std::rethrow_exception(failure);
    }

    struct CellResult
    {
        double load = 0.0;
        PolicySpec policy;
        std::uint64_t seed = 0;
        SummaryStats stats;
        AuditResult audit;
    };

    inline std::string load_tag(double load)
    {
        std::ostringstream os;
        os << std::fixed << std::setprecision(2) << load;
        return os.str();
    }

    inline void write_summary_csv(std::ostream& os, const ExperimentConfig& c, const std::vector<CellResult>& rows)
    {
        os << "scenario,n,load,policy,family,splittable,avg_total_queue,messages_per_slot,unstable_flag,"
              "arrived,completed,horizon,warmup,seed\n";
        os << std::setprecision(10);
        for (const CellResult& r : rows)
        {
            os << to_string(c.scenario) << ',' << c.n << ',' << load_tag(r.load) << ',' << r.policy.label() << ','
               << family_name(r.policy.family) << ',' << (r.policy.splittable ? 1 : 0) << ','
               << r.stats.avg_total_queue << ',' << r.stats.messages_per_slot << ',' << (r.stats.unstable ? 1 : 0)
               << ',' << r.stats.arrived_count << ',' << r.stats.completed_count << ',' << c.horizon << ','
               << r.stats.warmup_slots << ',' << r.seed << '\n';
        }
    }

    inline void write_jct_csv(std::ostream& os, const CellResult& r)
    {
        os << "policy,load,jct,cdf\n";
        os << std::setprecision(10);
        for (const auto& [v, f] : r.stats.jct_cdf)
            os << r.policy.label() << ',' << load_tag(r.load) << ',' << v << ',' << f << '\n';
    }

    inline std::ofstream open_out(const std::filesystem::path& p)
    {
        std::ofstream f(p);
        if (!f)
            throw Error("cannot write " + p.string());
        return f;
    }

    /// Built-in models for the drift lab: two and five servers at loads 0.5
    /// and 0.9, arrivals with small support so the thresholds stay finite.
    inline std::vector<std::pair<std::string, ModelParams>> drift_lab_models()
    {
        using dist::Categorical;
        const DistSpec det1 = dist::Deterministic{1};
        const DistSpec uni12 = dist::UniformInt{1, 2};
        return {
            {"n2_load0.5", make_model(Categorical{{0, 1, 2}, {0.05, 0.65, 0.30}}, {det1, uni12})},
            {"n2_load0.9", make_model(Categorical{{0, 1, 2}, {0.01, 0.18, 0.81}}, {det1, det1})},
            {"n5_load0.5", make_model(Categorical{{0, 3, 4}, {0.02, 0.92, 0.06}}, {det1, det1, det1, uni12, uni12})},
            {"n5_load0.9", make_model(Categorical{{0, 5, 6}, {0.02, 0.48, 0.50}}, {det1, det1, det1, uni12, uni12})},
        };
    }

    inline nlohmann::json drift_lab_entry(const std::string& name, const ModelParams& p, std::int64_t reps,
                                          std::uint64_t seed)
    {
        nlohmann::json j;
        j["model"] = name;
        j["n"] = p.n;
        j["lambda"] = p.lambda;
        j["load"] = p.load();
        try
        {
            const DriftConstants c = compute_constants(p);
            j["constants"] = to_json(c);
            j["constant_checks"] = check_constants(p, c);
            nlohmann::json drift = nlohmann::json::array(), rrw = nlohmann::json::array(),
                           split = nlohmann::json::array();
            std::uint64_t k = 0;
            for (const auto& s : drift_catalog(p, c))
            {
                drift.push_back(to_json(estimate_drift(s, p, c, reps, derive_seed(seed, k))));
                rrw.push_back(to_json(check_rrw_bound(s, p, c, reps, derive_seed(seed, k))));
                ++k;
            }
            for (const auto& s : split_catalog(p, c))
                split.push_back(to_json(check_pisplit_onestep(s, p, c, reps, derive_seed(seed, k++))));
            j["drift"] = drift;
            j["rrw_bound"] = rrw;
            j["pisplit_onestep"] = split;
        }
        catch (const std::exception& e)
        {
            j["error"] = e.what();
        }
        return j;
    }

    /// Runs the whole matrix, writes the output files and returns the rows in
    /// load-major, policy order.
    inline std::vector<CellResult> run_experiment(const ExperimentConfig& c, std::ostream* log = nullptr)
    {
        if (const auto bad = validate(c); !bad.empty())
            throw Error("invalid configuration: " + bad.front());
        namespace fs = std::filesystem;
        const fs::path out(c.out);
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec)
            throw Error("cannot create output directory " + out.string() + ": " + ec.message());

        std::vector<PolicySpec> specs;
        for (const Family f : c.policies)
        {
            if (c.unsplittable)
                specs.push_back(PolicySpec{f, false, {}});
            if (c.splittable)
                specs.push_back(PolicySpec{f, true, {}});
        }
        std::vector<ModelParams> models;
        for (const double l : c.loads)
            models.push_back(build_scenario(c, l));

        const std::size_t cells = c.loads.size() * specs.size();
        std::vector<CellResult> rows(cells);
        const Slot warmup = static_cast<Slot>(std::floor(c.warmup_fraction * static_cast<double>(c.horizon)));
        std::mutex log_mutex;
        parallel_for(cells, c.jobs, [&](std::size_t k) {
            const std::size_t li = k / specs.size();
            const PolicySpec& spec = specs[k % specs.size()];
            // Every policy at one load sees the same arrival and capacity streams.
            const std::uint64_t seed = derive_seed(c.seed, li);
            RunOptions opt;
            opt.horizon = c.horizon;
            opt.seed = seed;
            opt.keep_queues = c.trace && k == 0;
            RunResult r = run(models[li], spec, opt, warmup);
            CellResult& row = rows[k];
            row.load = c.loads[li];
            row.policy = spec;
            row.seed = seed;
            row.stats = std::move(r.stats);
            row.audit = message_audit(r.trace, spec);
            if (opt.keep_queues)
            {
                auto f = open_out(out / "trace.csv");
                write_trace_csv(f, r.trace);
            }
            if (log)
            {
                std::lock_guard lock(log_mutex);
                *log << "load " << load_tag(row.load) << ' ' << spec.label() << " avg_q=" << row.stats.avg_total_queue
                     << " msgs/slot=" << row.stats.messages_per_slot << (row.stats.unstable ? " UNSTABLE" : "")
                     << '\n';
            }
        });

        {
            auto f = open_out(out / "summary.csv");
            write_summary_csv(f, c, rows);
        }
        for (const CellResult& r : rows)
        {
            if (load_tag(r.load) == "0.50" || load_tag(r.load) == "0.99")
            {
                auto f = open_out(out / ("jct_" + r.policy.label() + "_" + load_tag(r.load) + ".csv"));
                write_jct_csv(f, r);
            }
        }
        if (c.drift_lab)
        {
            nlohmann::json doc;
            doc["seed"] = c.seed;
            doc["reps"] = c.drift_reps;
            nlohmann::json models_json = nlohmann::json::array();
            std::uint64_t k = 0;
            for (const auto& [name, p] : drift_lab_models())
                models_json.push_back(drift_lab_entry(name, p, c.drift_reps, derive_seed(c.seed ^ 0xd1f7ULL, k++)));
            models_json.push_back(drift_lab_entry(to_string(c.scenario) + "_load" + load_tag(c.loads.front()),
                                                  models.front(), c.drift_reps, derive_seed(c.seed ^ 0xd1f7ULL, k++)));
            doc["models"] = models_json;
            auto f = open_out(out / "drift_report.json");
            f << doc.dump(2) << '\n';
        }
        return rows;
    }
} // namespace pisim
