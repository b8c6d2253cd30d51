// Command-line experiment runner.

#include "pisim/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

int main(int argc, char** argv)
{
    using namespace pisim;
    CLI::App app{"Discrete-time load-balancing simulator (Persistent-Idle and baselines)"};

    std::string config_path, scenario, policies, split, loads, out, fast_capacity;
    std::optional<std::size_t> n;
    std::optional<Slot> horizon;
    std::optional<std::uint64_t> seed;
    std::optional<double> warmup;
    std::optional<std::int64_t> drift_reps;
    std::optional<unsigned> jobs;
    bool drift_lab = false, smoke = false, trace = false, quiet = false;

    app.add_option("--config", config_path, "flat key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--scenario", scenario, "ratio_10_90 | ratio_50_50 | ratio_90_10 | custom");
    app.add_option("--n", n, "number of servers");
    app.add_option("--policies", policies, "comma list of PI,JIQ,JSQ,JSQ2,JSQ11");
    app.add_option("--split", split, "u | s | both");
    app.add_option("--loads", loads, "comma list of loads in (0,1)");
    app.add_option("--horizon", horizon, "slots per run");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--out", out, "output directory");
    app.add_option("--warmup-fraction", warmup, "share of slots excluded from averages");
    app.add_option("--fast-capacity", fast_capacity, "capacity distribution of fast servers");
    app.add_option("--drift-reps", drift_reps, "Monte Carlo episodes per drift-lab state");
    app.add_option("--jobs", jobs, "parallel runs");
    app.add_flag("--drift-lab", drift_lab, "also write drift_report.json");
    app.add_flag("--smoke", smoke, "small preset: n=10, horizon=10^4");
    app.add_flag("--trace", trace, "write trace.csv for the first run");
    app.add_flag("-q,--quiet", quiet, "no per-run log");
    CLI11_PARSE(app, argc, argv);

    try
    {
        ExperimentConfig c;
        if (smoke)
        {
            c.n = 10;
            c.horizon = 10'000;
        }
        if (!config_path.empty())
            load_config_file(c, config_path);
        apply_environment(c);
        if (!scenario.empty())
            c.scenario = parse_scenario(scenario);
        if (n)
            c.n = *n;
        if (!policies.empty())
            c.policies = parse_policies(policies);
        if (!split.empty())
            apply_split(c, split);
        if (!loads.empty())
            c.loads = parse_loads(loads);
        if (horizon)
            c.horizon = *horizon;
        if (seed)
            c.seed = *seed;
        if (!out.empty())
            c.out = out;
        if (warmup)
            c.warmup_fraction = *warmup;
        if (!fast_capacity.empty())
            c.fast_capacity = fast_capacity;
        if (drift_reps)
            c.drift_reps = *drift_reps;
        if (jobs)
            c.jobs = *jobs;
        c.drift_lab = c.drift_lab || drift_lab;
        c.trace = c.trace || trace;

        const auto t0 = std::chrono::steady_clock::now();
        const auto rows = run_experiment(c, quiet ? nullptr : &std::cerr);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::size_t violations = 0;
        for (const auto& r : rows)
            violations += r.audit.ok ? 0 : 1;
        std::cout << rows.size() << " runs written to " << c.out << " in " << secs << " s";
        if (violations)
            std::cout << "; " << violations << " message-audit violations";
        std::cout << '\n';
        return violations ? 2 : 0;
    }
    catch (const std::exception& e)
    {
        std::cerr << "pisim: " << e.what() << '\n';
        return 1;
    }
}
