#include "pisim/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pisim;
namespace fs = std::filesystem;

namespace
{
    std::string slurp(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    }

    fs::path scratch(const std::string& name)
    {
        const fs::path p = fs::temp_directory_path() / ("pisim_test_" + name);
        fs::remove_all(p);
        return p;
    }

    TEST(Scenario, ServiceRates)
    {
        ExperimentConfig c;
        c.scenario = Scenario::Ratio50_50;
        EXPECT_DOUBLE_EQ(build_scenario(c, 0.5).total_service_rate(), 550.0);
        EXPECT_NEAR(build_scenario(c, 0.5).lambda, 275.0, 1e-8);
        c.scenario = Scenario::Ratio10_90;
        EXPECT_DOUBLE_EQ(build_scenario(c, 0.5).total_service_rate(), 910.0);
        c.scenario = Scenario::Ratio90_10;
        EXPECT_DOUBLE_EQ(build_scenario(c, 0.5).total_service_rate(), 190.0);
    }

    TEST(Scenario, ArrivalsAndCapacities)
    {
        ExperimentConfig c;
        c.n = 10;
        const ModelParams p = build_scenario(c, 0.9);
        EXPECT_EQ(p.s_max, 19);
        EXPECT_NEAR(p.lambda, 0.9 * 55, 1e-9);
        const auto* a = std::get_if<dist::TruncatedPoisson>(&p.arrival);
        ASSERT_NE(a, nullptr);
        EXPECT_EQ(a->cap, 550);
        EXPECT_TRUE(validate(p).empty());
    }

    TEST(Scenario, Custom)
    {
        ExperimentConfig c;
        c.scenario = Scenario::Custom;
        c.n = 3;
        EXPECT_THROW(build_scenario(c, 0.5), Error);
        c.capacities = "det(1); uniform(1,3); det(2)";
        const ModelParams p = build_scenario(c, 0.5);
        EXPECT_DOUBLE_EQ(p.total_service_rate(), 5.0);
        EXPECT_DOUBLE_EQ(p.lambda, 2.5);
        c.arrival = "bernoulli(0.5,2)";
        EXPECT_DOUBLE_EQ(build_scenario(c, 0.5).lambda, 1.0);
        c.capacities = "det(1); det(1)";
        EXPECT_THROW(build_scenario(c, 0.5), Error);
    }

    TEST(Config, ParsesKeyValueFile)
    {
        ExperimentConfig c;
        std::istringstream in("# comment\n"
                              "scenario = ratio_10_90\n"
                              "n = 20   # trailing\n"
                              "policies = pi, jsq(2)\n"
                              "split = s\n"
                              "loads = 0.5, 0.99\n"
                              "horizon = 5000\n"
                              "seed = 42\n"
                              "drift_lab = yes\n");
        load_config(c, in);
        EXPECT_EQ(c.scenario, Scenario::Ratio10_90);
        EXPECT_EQ(c.n, 20u);
        EXPECT_EQ(c.policies, (std::vector<Family>{Family::PI, Family::JSQ2}));
        EXPECT_FALSE(c.unsplittable);
        EXPECT_TRUE(c.splittable);
        EXPECT_EQ(c.loads, (std::vector<double>{0.5, 0.99}));
        EXPECT_EQ(c.horizon, 5000);
        EXPECT_EQ(c.seed, 42u);
        EXPECT_TRUE(c.drift_lab);
        EXPECT_TRUE(validate(c).empty());
    }

    TEST(Config, ErrorsCarryLineNumbers)
    {
        ExperimentConfig c;
        std::istringstream in("n = 5\nbogus = 1\n");
        try
        {
            load_config(c, in, "x.cfg");
            FAIL() << "expected an error";
        }
        catch (const Error& e)
        {
            EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos);
        }
        std::istringstream no_eq("horizon 5\n");
        EXPECT_THROW(load_config(c, no_eq), Error);
    }

    TEST(Config, Validation)
    {
        ExperimentConfig c;
        c.loads = {0.5, 1.0};
        EXPECT_FALSE(validate(c).empty());
        c.loads = {0.5};
        c.horizon = 999;
        EXPECT_FALSE(validate(c).empty());
        c.horizon = 1000;
        EXPECT_TRUE(validate(c).empty());
    }

    TEST(Config, EnvironmentOverrides)
    {
        ExperimentConfig c;
        ::setenv("PISIM_SEED", "99", 1);
        ::setenv("PISIM_OUT", "elsewhere", 1);
        apply_environment(c);
        ::unsetenv("PISIM_SEED");
        ::unsetenv("PISIM_OUT");
        EXPECT_EQ(c.seed, 99u);
        EXPECT_EQ(c.out, "elsewhere");
    }

    ExperimentConfig small_run(const fs::path& out)
    {
        ExperimentConfig c;
        c.n = 10;
        c.policies = {Family::PI, Family::JSQ};
        c.unsplittable = true;
        c.splittable = false;
        c.loads = {0.5, 0.7, 0.99};
        c.horizon = 2000;
        c.seed = 3;
        c.out = out.string();
        c.trace = true;
        c.jobs = 2;
        return c;
    }

    TEST(Experiment, RowsFilesAndReproducibility)
    {
        const fs::path a = scratch("a"), b = scratch("b");
        const auto rows = run_experiment(small_run(a));
        run_experiment(small_run(b));
        EXPECT_EQ(rows.size(), 6u);

        std::istringstream summary(slurp(a / "summary.csv"));
        std::string header;
        std::getline(summary, header);
        EXPECT_EQ(header, "scenario,n,load,policy,family,splittable,avg_total_queue,messages_per_slot,unstable_flag,"
                          "arrived,completed,horizon,warmup,seed");
        int lines = 0;
        for (std::string l; std::getline(summary, l);)
            ++lines;
        EXPECT_EQ(lines, 6);

        for (const char* f : {"summary.csv", "trace.csv", "jct_uPI_0.50.csv", "jct_uJSQ_0.99.csv"})
        {
            ASSERT_TRUE(fs::exists(a / f)) << f;
            EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
        }
        EXPECT_FALSE(fs::exists(a / "jct_uPI_0.70.csv"));
        EXPECT_EQ(slurp(a / "jct_uPI_0.50.csv").rfind("policy,load,jct,cdf\n", 0), 0u);
        fs::remove_all(a);
        fs::remove_all(b);
    }

    TEST(Experiment, PoliciesShareInputAtEachLoad)
    {
        const fs::path a = scratch("c");
        ExperimentConfig c = small_run(a);
        c.policies = {Family::PI, Family::JIQ, Family::JSQ, Family::JSQ2, Family::JSQ11};
        c.splittable = true;
        c.trace = false;
        const auto rows = run_experiment(c);
        for (const CellResult& r : rows)
        {
            EXPECT_EQ(r.stats.arrived_count, rows[(&r - rows.data()) / 10 * 10].stats.arrived_count);
            if (r.policy.family == Family::PI)
            {
                EXPECT_TRUE(r.audit.ok);
            }
        }
        fs::remove_all(a);
    }

    TEST(Experiment, DriftReportJson)
    {
        const fs::path a = scratch("d");
        ExperimentConfig c = small_run(a);
        c.n = 3;
        c.policies = {Family::PI};
        c.loads = {0.5};
        c.drift_lab = true;
        c.drift_reps = 20;
        c.trace = false;
        run_experiment(c);
        const auto doc = nlohmann::json::parse(slurp(a / "drift_report.json"));
        ASSERT_EQ(doc["models"].size(), 5u);
        for (const auto& m : doc["models"])
        {
            EXPECT_TRUE(m.contains("constants") || m.contains("error"));
            if (m.contains("drift"))
            {
                EXPECT_FALSE(m["drift"].empty());
            }
        }
        fs::remove_all(a);
    }

    TEST(Experiment, RejectsInvalidConfig)
    {
        ExperimentConfig c;
        c.loads = {};
        EXPECT_THROW(run_experiment(c), Error);
    }
} // namespace
