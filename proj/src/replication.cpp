#include "fusion/replication.hpp"

#include "fusion/error.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <random>

namespace fusion {

const char* to_string(Parameter parameter) noexcept
{
    return parameter == Parameter::Mu ? "mu" : "alpha";
}

PooledMI pool(std::span<const EffectEstimate> estimates, Parameter parameter)
{
    if (estimates.size() < 2) throw Error(ErrorKind::Config, "pool: need at least two imputations");
    const auto m = static_cast<double>(estimates.size());
    const auto point = [parameter](const EffectEstimate& e) {
        return parameter == Parameter::Mu ? e.mu_hat : e.alpha_hat;
    };
    const auto var = [parameter](const EffectEstimate& e) {
        return parameter == Parameter::Mu ? e.var_mu : e.var_alpha;
    };

    PooledMI out;
    out.m = static_cast<int>(estimates.size());
    for (const auto& e : estimates) {
        out.mean += point(e);
        out.within += var(e);
    }
    out.mean /= m;
    out.within /= m;
    for (const auto& e : estimates) out.between += (point(e) - out.mean) * (point(e) - out.mean);
    out.between /= m - 1.0;
    return out;
}

const char* to_string(RuleKind kind) noexcept
{
    switch (kind) {
    case RuleKind::MI: return "T_mi";
    case RuleKind::Syn: return "T_syn";
    case RuleKind::PPD: return "T_PPD";
    case RuleKind::S: return "T_s";
    case RuleKind::P: return "T_p";
    }
    return "?";
}

std::optional<RuleKind> parse_rule(std::string_view text)
{
    for (RuleKind k : {RuleKind::MI, RuleKind::Syn, RuleKind::PPD, RuleKind::S, RuleKind::P}) {
        const std::string_view full = to_string(k);
        if (text == full || text == full.substr(2)) return k;
    }
    return std::nullopt;
}

double combined_variance(const PooledMI& pooled, const CombiningRule& rule)
{
    const double m = pooled.m;
    const double w = pooled.within;
    const double b = pooled.between;
    const auto rho = [&rule] {
        if (!rule.rho) throw Error(ErrorKind::Config, fmt::format("{} needs rho", to_string(rule.kind)));
        if (!(*rule.rho > 0.0)) throw Error(ErrorKind::Config, "rho must be positive");
        return *rule.rho;
    };
    switch (rule.kind) {
    case RuleKind::MI: return w + (1.0 + 1.0 / m) * b;
    case RuleKind::Syn: return (1.0 + 1.0 / m) * b - w;
    case RuleKind::PPD: {
        const double r = rho();
        return (r + (1.0 + r) / m) * w;
    }
    case RuleKind::S: return (rho() + 1.0 / m) * w;
    case RuleKind::P: return w + b / m;
    }
    return 0.0;
}

VarianceReport combine(const PooledMI& pooled, const CombiningRule& rule, double gamma)
{
    VarianceReport report;
    report.method = to_string(rule.kind);
    report.estimate = pooled.mean;
    report.variance = combined_variance(pooled, rule);
    if (rule.kind == RuleKind::Syn && report.variance <= 0.0) {
        report.negative_variance = true;
    } else {
        report.interval = confidence_interval(report.estimate, report.variance, gamma);
    }
    return report;
}

double default_rho(const FusedDataset& data)
{
    if (data.n_out() == 0) throw Error(ErrorKind::Data, "default_rho: no outcomes rows");
    return static_cast<double>(data.n_int()) / static_cast<double>(data.n_out());
}

std::vector<int> partition_groups(const FusedDataset& data, int groups, Seed seed)
{
    if (groups < 2) throw Error(ErrorKind::Config, "jackknife needs at least two groups");
    std::vector<int> label(data.rows(), -1);
    Engine engine = make_engine(seed);
    for (SourceTag tag : {SourceTag::OutcomesSource, SourceTag::InterventionSource}) {
        auto rows = data.rows_of(tag);
        if (rows.size() < static_cast<std::size_t>(groups))
            throw Error(ErrorKind::Data, fmt::format("{} groups exceed the {} {} rows", groups,
                                                     rows.size(), to_string(tag)));
        std::shuffle(rows.begin(), rows.end(), engine);
        for (std::size_t i = 0; i < rows.size(); ++i)
            label[rows[i]] = static_cast<int>(i % static_cast<std::size_t>(groups));
    }
    return label;
}

ReplicationEstimate jackknife_combine(std::span<const double> leave_group_out)
{
    const auto g = static_cast<double>(leave_group_out.size());
    if (leave_group_out.size() < 2) throw Error(ErrorKind::Config, "jackknife needs at least two groups");
    ReplicationEstimate out;
    out.estimate = std::accumulate(leave_group_out.begin(), leave_group_out.end(), 0.0) / g;
    for (double v : leave_group_out) out.variance += (v - out.estimate) * (v - out.estimate);
    out.variance *= (g - 1.0) / g;
    return out;
}

ReplicationEstimate bootstrap_combine(std::span<const double> resample_estimates)
{
    const auto b = static_cast<double>(resample_estimates.size());
    if (resample_estimates.size() < 2) throw Error(ErrorKind::Config, "bootstrap needs at least two resamples");
    ReplicationEstimate out;
    out.estimate = std::accumulate(resample_estimates.begin(), resample_estimates.end(), 0.0) / b;
    for (double v : resample_estimates) out.variance += (v - out.estimate) * (v - out.estimate);
    out.variance /= b - 1.0;
    return out;
}

std::vector<double> pseudovalues(std::span<const double> leave_group_out)
{
    const double g = static_cast<double>(leave_group_out.size());
    const double mean = jackknife_combine(leave_group_out).estimate;
    std::vector<double> out;
    out.reserve(leave_group_out.size());
    for (double v : leave_group_out) out.push_back(g * mean - (g - 1.0) * v);
    return out;
}

std::vector<double> pseudovalues(const ReplicateSet& replicates, Parameter parameter)
{
    if (replicates.scheme != Scheme::Jackknife)
        throw Error(ErrorKind::Config, "pseudovalues are defined for jackknife replicates only");
    return pseudovalues(replicates.values(parameter));
}

EffectMean mean_effect(const FusedDataset& data, std::span<const ConditionalModelSpec> specs, int m,
                       Seed seed, std::optional<std::size_t> outcome_column)
{
    if (m < 1) throw Error(ErrorKind::Config, "m must be at least 1");
    const ImputationModel model = fit(data, specs);
    EffectMean out;
    for (int j = 0; j < m; ++j) {
        const auto completed = impute_once(data, model, seed.derive("imputation", static_cast<std::uint64_t>(j)));
        const auto est = estimate_effect(completed, outcome_column);
        out.mu += est.mu_hat;
        out.alpha += est.alpha_hat;
    }
    out.mu /= m;
    out.alpha /= m;
    return out;
}

namespace {

VarianceReport make_report(std::string method, Parameter parameter, ReplicationEstimate est, double gamma)
{
    VarianceReport r;
    r.method = std::move(method);
    r.parameter = parameter;
    r.estimate = est.estimate;
    r.variance = est.variance;
    r.interval = confidence_interval(est.estimate, est.variance, gamma);
    return r;
}

ReplicationResult summarize(ReplicateSet set, const std::string& method, double gamma)
{
    const bool jack = set.scheme == Scheme::Jackknife;
    const auto combine_fn = jack ? jackknife_combine : bootstrap_combine;
    ReplicationResult out;
    out.mu = make_report(method, Parameter::Mu, combine_fn(set.mu), gamma);
    out.alpha = make_report(method, Parameter::Alpha, combine_fn(set.alpha), gamma);
    out.replicates = std::move(set);
    return out;
}

bool resample_usable(const FusedDataset& data, std::span<const std::size_t> rows)
{
    bool has_out = false;
    bool arm[2] = {false, false};
    const auto z = data.column(data.treatment_column());
    for (std::size_t r : rows) {
        if (data.source(r) == SourceTag::OutcomesSource) has_out = true;
        else arm[z[r] != 0.0] = true;
        if (has_out && arm[0] && arm[1]) return true;
    }
    return false;
}

}  // namespace

std::string jackknife_label(int groups, int m) { return fmt::format("jackknife(G={},m={})", groups, m); }

std::string bootstrap_label(int resamples, int m, bool stratified)
{
    return stratified ? fmt::format("bootstrap(B={},m={},stratified)", resamples, m)
                      : fmt::format("bootstrap(B={},m={})", resamples, m);
}

ReplicationResult jackknife(const FusedDataset& data, std::span<const ConditionalModelSpec> specs,
                            int groups, int m, Seed seed, const ReplicationOptions& options)
{
    if (m < 1) throw Error(ErrorKind::Config, "jackknife: m must be at least 1");
    const auto label = partition_groups(data, groups, seed.derive("partition"));

    ReplicateSet set;
    set.scheme = Scheme::Jackknife;
    set.m = m;
    set.mu.resize(static_cast<std::size_t>(groups));
    set.alpha.resize(static_cast<std::size_t>(groups));
    set.seeds.resize(static_cast<std::size_t>(groups));

    for_each_index(static_cast<std::size_t>(groups), options.execution, [&](std::size_t g) {
        std::vector<std::size_t> keep;
        keep.reserve(data.rows());
        for (std::size_t r = 0; r < data.rows(); ++r)
            if (label[r] != static_cast<int>(g)) keep.push_back(r);
        const Seed replicate_seed = seed.derive("replicate", g);
        try {
            const auto effect = mean_effect(data.subset(keep), specs, m, replicate_seed, options.outcome_column);
            set.mu[g] = effect.mu;
            set.alpha[g] = effect.alpha;
        } catch (const Error& e) {
            throw Error(e.kind(), fmt::format("jackknife group {}: {}", g, e.what()));
        }
        set.seeds[g] = replicate_seed;
    });
    return summarize(std::move(set), jackknife_label(groups, m), options.gamma);
}

ReplicationResult bootstrap(const FusedDataset& data, std::span<const ConditionalModelSpec> specs,
                            int resamples, int m, Seed seed, const ReplicationOptions& options)
{
    if (resamples < 2) throw Error(ErrorKind::Config, "bootstrap needs at least two resamples");
    if (m < 1) throw Error(ErrorKind::Config, "bootstrap: m must be at least 1");
    const std::size_t n = data.rows();
    const std::size_t n_out = data.n_out();
    const std::size_t n_int = data.n_int();

    ReplicateSet set;
    set.scheme = Scheme::Bootstrap;
    set.m = m;
    set.mu.resize(static_cast<std::size_t>(resamples));
    set.alpha.resize(static_cast<std::size_t>(resamples));
    set.seeds.resize(static_cast<std::size_t>(resamples));
    std::vector<std::size_t> rejections(static_cast<std::size_t>(resamples), 0);

    for_each_index(static_cast<std::size_t>(resamples), options.execution, [&](std::size_t b) {
        std::vector<std::size_t> rows(n);
        const Seed resample_seed = seed.derive("resample", b);
        for (int attempt = 0;; ++attempt) {
            if (attempt > options.max_consecutive_rejections)
                throw Error(ErrorKind::Data,
                            fmt::format("bootstrap resample {}: {} consecutive degenerate resamples", b,
                                        attempt));
            Engine engine = make_engine(resample_seed.derive(static_cast<std::uint64_t>(attempt)));
            if (options.stratified_bootstrap) {
                std::uniform_int_distribution<std::size_t> pick_out(0, n_out - 1);
                std::uniform_int_distribution<std::size_t> pick_int(n_out, n - 1);
                for (std::size_t i = 0; i < n_out; ++i) rows[i] = pick_out(engine);
                for (std::size_t i = 0; i < n_int; ++i) rows[n_out + i] = pick_int(engine);
            } else {
                std::uniform_int_distribution<std::size_t> pick(0, n - 1);
                for (auto& r : rows) r = pick(engine);
            }
            if (resample_usable(data, rows)) break;
            ++rejections[b];
        }
        const Seed replicate_seed = seed.derive("replicate", b);
        try {
            const auto effect = mean_effect(data.subset(rows), specs, m, replicate_seed, options.outcome_column);
            set.mu[b] = effect.mu;
            set.alpha[b] = effect.alpha;
        } catch (const Error& e) {
            throw Error(e.kind(), fmt::format("bootstrap resample {}: {}", b, e.what()));
        }
        set.seeds[b] = replicate_seed;
    });
    set.rejected_resamples = std::accumulate(rejections.begin(), rejections.end(), std::size_t{0});
    return summarize(std::move(set), bootstrap_label(resamples, m, options.stratified_bootstrap), options.gamma);
}

RulesResult combining_rules(const FusedDataset& data, std::span<const ConditionalModelSpec> specs, int m,
                            Seed seed, std::span<const RuleKind> rules, std::optional<double> rho,
                            const ReplicationOptions& options)
{
    if (m < 2) throw Error(ErrorKind::Config, "combining rules need m >= 2");
    const ImputationModel model = fit(data, specs);
    RulesResult out;
    out.estimates.resize(static_cast<std::size_t>(m));
    for_each_index(out.estimates.size(), options.execution, [&](std::size_t j) {
        const auto completed = impute_once(data, model, seed.derive("imputation", j));
        out.estimates[j] = estimate_effect(completed, options.outcome_column);
    });
    out.mu = pool(out.estimates, Parameter::Mu);
    out.alpha = pool(out.estimates, Parameter::Alpha);
    out.rho = rho.value_or(default_rho(data));
    for (RuleKind kind : rules) {
        const CombiningRule rule{kind, out.rho};
        for (Parameter p : {Parameter::Mu, Parameter::Alpha}) {
            auto report = combine(p == Parameter::Mu ? out.mu : out.alpha, rule, options.gamma);
            report.parameter = p;
            out.reports.push_back(std::move(report));
        }
    }
    return out;
}

}  // namespace fusion
