#include "helpers.hpp"

#include "fusion/replication.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

using namespace fusion;
using namespace testing;

namespace {

std::vector<EffectEstimate> three_estimates()
{
    std::vector<EffectEstimate> e(3);
    for (int k = 0; k < 3; ++k) {
        e[k].alpha_hat = k + 1.0;
        e[k].var_alpha = 0.1 * (k + 1.0);
        e[k].mu_hat = 10.0;
        e[k].var_mu = 0.5;
    }
    return e;
}

const std::vector<ConditionalModelSpec> y_on_x{{"Y", {"X1", "X2", "X3", "X4"}, true, true}};

}  // namespace

TEST_SUITE("replication")
{
    TEST_CASE("pooling three imputations")
    {
        const auto p = pool(three_estimates(), Parameter::Alpha);
        CHECK(p.m == 3);
        CHECK(p.mean == doctest::Approx(2.0));
        CHECK(p.within == doctest::Approx(0.2));
        CHECK(p.between == doctest::Approx(1.0));
        const auto q = pool(three_estimates(), Parameter::Mu);
        CHECK(q.between == 0.0);
        CHECK(q.within == doctest::Approx(0.5));
        CHECK(error_kind_of([] { pool(std::vector<EffectEstimate>(1), Parameter::Mu); }) == ErrorKind::Config);
    }

    TEST_CASE("combining-rule variances")
    {
        const PooledMI p{2.0, 0.2, 1.0, 3};
        CHECK(combined_variance(p, {RuleKind::MI, {}}) == doctest::Approx(0.2 + 4.0 / 3.0));
        CHECK(combined_variance(p, {RuleKind::Syn, {}}) == doctest::Approx(4.0 / 3.0 - 0.2));
        CHECK(combined_variance(p, {RuleKind::PPD, 2.0}) == doctest::Approx((2.0 + 3.0 / 3.0) * 0.2));
        CHECK(combined_variance(p, {RuleKind::S, 2.0}) == doctest::Approx((2.0 + 1.0 / 3.0) * 0.2));
        CHECK(combined_variance(p, {RuleKind::P, {}}) == doctest::Approx(0.2 + 1.0 / 3.0));
        CHECK(error_kind_of([&] { combined_variance(p, {RuleKind::PPD, {}}); }) == ErrorKind::Config);
        CHECK(error_kind_of([&] { combined_variance(p, {RuleKind::S, {}}); }) == ErrorKind::Config);
        CHECK(error_kind_of([&] { combined_variance(p, {RuleKind::S, 0.0}); }) == ErrorKind::Config);
    }

    TEST_CASE("negative synthetic variance is flagged without an interval")
    {
        const PooledMI p{1.0, 0.5, 0.1, 10};
        const auto r = combine(p, {RuleKind::Syn, {}});
        CHECK(r.negative_variance);
        CHECK_FALSE(r.interval.has_value());
        CHECK(r.variance == doctest::Approx(1.1 * 0.1 - 0.5));
        const auto ok = combine(p, {RuleKind::MI, {}}, 0.05);
        CHECK_FALSE(ok.negative_variance);
        REQUIRE(ok.interval.has_value());
        CHECK(ok.interval->upper - ok.estimate == doctest::Approx(1.959963984540054 * std::sqrt(0.5 + 1.1 * 0.1)));
        CHECK(ok.method == "T_mi");
    }

    TEST_CASE("rule names")
    {
        CHECK(parse_rule("T_PPD") == RuleKind::PPD);
        CHECK(parse_rule("syn") == RuleKind::Syn);
        CHECK(parse_rule("s") == RuleKind::S);
        CHECK_FALSE(parse_rule("T_x").has_value());
        for (RuleKind k : {RuleKind::MI, RuleKind::Syn, RuleKind::PPD, RuleKind::S, RuleKind::P})
            CHECK(parse_rule(to_string(k)) == k);
    }

    TEST_CASE("jackknife and bootstrap combination by hand")
    {
        const std::vector<double> v{1, 2, 3, 4};
        const auto j = jackknife_combine(v);
        CHECK(j.estimate == doctest::Approx(2.5));
        CHECK(j.variance == doctest::Approx(0.75 * 5.0));
        const auto b = bootstrap_combine(v);
        CHECK(b.variance == doctest::Approx(5.0 / 3.0));
        CHECK(error_kind_of([] { jackknife_combine(std::vector<double>{1.0}); }) == ErrorKind::Config);
        CHECK(error_kind_of([] { bootstrap_combine(std::vector<double>{1.0}); }) == ErrorKind::Config);
        const auto pv = pseudovalues(v);
        CHECK(pv == std::vector<double>{4 * 2.5 - 3, 4 * 2.5 - 6, 4 * 2.5 - 9, 4 * 2.5 - 12});
    }

    TEST_CASE("pseudovalue variance over G equals the jackknife variance")
    {
        Engine e = make_engine(Seed(15));
        std::normal_distribution<double> normal;
        for (int t = 0; t < 100; ++t) {
            std::vector<double> v(static_cast<std::size_t>(2 + t % 40));
            for (auto& x : v) x = 0.3 + 0.01 * normal(e);
            const auto pv = pseudovalues(v);
            const double g = static_cast<double>(v.size());
            const double mean = std::accumulate(pv.begin(), pv.end(), 0.0) / g;
            double s = 0.0;
            for (double x : pv) s += (x - mean) * (x - mean);
            const auto j = jackknife_combine(v);
            CHECK(mean == doctest::Approx(j.estimate).epsilon(1e-10));
            CHECK(s / (g - 1.0) / g == doctest::Approx(j.variance).epsilon(1e-10));
        }
    }

    TEST_CASE("partition deals each source round-robin")
    {
        const auto d = simulated(16);
        const auto label = partition_groups(d, 25, Seed(3));
        std::map<int, int> out_sizes, int_sizes;
        for (std::size_t r = 0; r < d.rows(); ++r) {
            REQUIRE(label[r] >= 0);
            REQUIRE(label[r] < 25);
            (d.source(r) == SourceTag::OutcomesSource ? out_sizes : int_sizes)[label[r]]++;
        }
        CHECK(out_sizes.size() == 25);
        CHECK(int_sizes.size() == 25);
        const auto spread = [](const std::map<int, int>& m) {
            const auto [lo, hi] = std::minmax_element(m.begin(), m.end(),
                                                      [](auto& a, auto& b) { return a.second < b.second; });
            return hi->second - lo->second;
        };
        CHECK(spread(out_sizes) <= 1);
        CHECK(spread(int_sizes) <= 1);
        CHECK(partition_groups(d, 25, Seed(3)) == label);
        CHECK_FALSE(partition_groups(d, 25, Seed(4)) == label);
        CHECK(error_kind_of([&] { partition_groups(d, 1, Seed(1)); }) == ErrorKind::Config);
        CHECK(error_kind_of([&] { partition_groups(d, 600, Seed(1)); }) == ErrorKind::Data);
    }

    TEST_CASE("jackknife: deterministic and identical across execution modes")
    {
        const auto d = simulated(17);
        ReplicationOptions serial;
        ReplicationOptions parallel;
        parallel.execution = Execution::Parallel;
        set_thread_count(3);
        const auto a = jackknife(d, y_on_x, 5, 2, Seed(8), serial);
        const auto b = jackknife(d, y_on_x, 5, 2, Seed(8), parallel);
        set_thread_count(1);
        REQUIRE(a.replicates.size() == 5);
        for (std::size_t g = 0; g < 5; ++g) {
            CHECK(same_bits(a.replicates.alpha[g], b.replicates.alpha[g]));
            CHECK(same_bits(a.replicates.mu[g], b.replicates.mu[g]));
            CHECK(a.replicates.seeds[g] == Seed(8).derive("replicate", g));
        }
        CHECK(same_bits(a.alpha.variance, b.alpha.variance));
        CHECK(a.alpha.method == "jackknife(G=5,m=2)");
        CHECK(a.alpha.variance > 0.0);
        REQUIRE(a.alpha.interval.has_value());

        // replicate g is the m-imputation mean on the data without group g
        const auto label = partition_groups(d, 5, Seed(8).derive("partition"));
        std::vector<std::size_t> keep;
        for (std::size_t r = 0; r < d.rows(); ++r)
            if (label[r] != 2) keep.push_back(r);
        const auto direct = mean_effect(d.subset(keep), y_on_x, 2, Seed(8).derive("replicate", 2));
        CHECK(same_bits(direct.alpha, a.replicates.alpha[2]));
        CHECK(pseudovalues(a.replicates, Parameter::Alpha).size() == 5);
    }

    TEST_CASE("bootstrap: labels, determinism and redraws")
    {
        const auto d = simulated(18);
        ReplicationOptions parallel;
        parallel.execution = Execution::Parallel;
        set_thread_count(2);
        const auto a = bootstrap(d, y_on_x, 4, 2, Seed(2));
        const auto b = bootstrap(d, y_on_x, 4, 2, Seed(2), parallel);
        set_thread_count(1);
        for (std::size_t k = 0; k < 4; ++k) CHECK(same_bits(a.replicates.alpha[k], b.replicates.alpha[k]));
        CHECK(a.mu.method == "bootstrap(B=4,m=2)");
        CHECK(a.replicates.rejected_resamples == 0);
        CHECK(error_kind_of([&] { pseudovalues(a.replicates, Parameter::Mu); }) == ErrorKind::Config);
        ReplicationOptions strat;
        strat.stratified_bootstrap = true;
        CHECK(bootstrap(d, y_on_x, 2, 1, Seed(2), strat).alpha.method == "bootstrap(B=2,m=1,stratified)");

        // a single treated row is missed by roughly e^-1 of the resamples
        const auto int_rows = d.rows_of(SourceTag::InterventionSource);
        std::vector<double> z(int_rows.size(), 0.0);
        z[0] = 1.0;
        const auto lonely = with_treatment(d, z);
        const auto r = bootstrap(lonely, y_on_x, 30, 1, Seed(4));
        CHECK(r.replicates.rejected_resamples > 0);

        // no treated row at all: every draw is degenerate
        const auto control_only = with_treatment(d, std::vector<double>(int_rows.size(), 0.0));
        ReplicationOptions strict;
        strict.max_consecutive_rejections = 1;
        CHECK(error_kind_of([&] { bootstrap(control_only, y_on_x, 2, 1, Seed(4), strict); }) == ErrorKind::Data);
    }

    TEST_CASE("combining rules over m imputations")
    {
        const auto d = simulated(19);
        const std::vector<RuleKind> rules{RuleKind::MI, RuleKind::Syn, RuleKind::PPD};
        const auto r = combining_rules(d, y_on_x, 8, Seed(6), rules);
        CHECK(r.rho == doctest::Approx(static_cast<double>(d.n_int()) / d.n_out()));
        REQUIRE(r.reports.size() == 6);
        CHECK(r.reports[0].method == "T_mi");
        CHECK(r.reports[0].parameter == Parameter::Mu);
        CHECK(r.reports[1].parameter == Parameter::Alpha);
        CHECK(r.reports[4].variance == doctest::Approx(combined_variance(r.mu, {RuleKind::PPD, r.rho})));

        const auto model = fit(d, y_on_x);
        const auto third = estimate_effect(impute_once(d, model, Seed(6).derive("imputation", 3)));
        CHECK(same_bits(third.alpha_hat, r.estimates[3].alpha_hat));

        ReplicationOptions parallel;
        parallel.execution = Execution::Parallel;
        set_thread_count(2);
        const auto p = combining_rules(d, y_on_x, 8, Seed(6), rules, 2.0, parallel);
        set_thread_count(1);
        CHECK(p.rho == 2.0);
        CHECK(same_bits(p.alpha.mean, r.alpha.mean));
        CHECK(same_bits(p.alpha.between, r.alpha.between));
        CHECK(error_kind_of([&] { combining_rules(d, y_on_x, 1, Seed(6), rules); }) == ErrorKind::Config);
    }
}
