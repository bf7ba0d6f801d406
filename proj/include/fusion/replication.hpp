#pragma once

#include "fusion/dataset.hpp"
#include "fusion/estimands.hpp"
#include "fusion/imputer.hpp"
#include "fusion/parallel.hpp"
#include "fusion/rng.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fusion {

enum class Parameter { Mu, Alpha };

const char* to_string(Parameter parameter) noexcept;

// ---------------------------------------------------------------------------
// Pooling and combining rules

/// Mean, within-imputation and between-imputation variance of one parameter
/// across m completed datasets.
struct PooledMI {
    double mean = 0.0;     // alpha-bar
    double within = 0.0;   // W_m
    double between = 0.0;  // B_m, divisor m - 1
    int m = 0;
};

PooledMI pool(std::span<const EffectEstimate> estimates, Parameter parameter);

enum class RuleKind { MI, Syn, PPD, S, P };

/// `rho` is the synthetic-to-observed size ratio; required by PPD and S.
struct CombiningRule {
    RuleKind kind = RuleKind::MI;
    std::optional<double> rho;
};

const char* to_string(RuleKind kind) noexcept;  // "T_mi", "T_syn", ...
std::optional<RuleKind> parse_rule(std::string_view text);

/// MI: W + (1 + 1/m) B        Syn: (1 + 1/m) B - W
/// PPD: (rho + (1 + rho)/m) W  S: (rho + 1/m) W        P: W + B/m
double combined_variance(const PooledMI& pooled, const CombiningRule& rule);

struct VarianceReport {
    std::string method;
    Parameter parameter = Parameter::Alpha;
    double estimate = 0.0;
    double variance = 0.0;
    std::optional<Interval> interval;  // absent when negative_variance is set
    bool negative_variance = false;
};

/// A non-positive variance is flagged and reported without an interval.
VarianceReport combine(const PooledMI& pooled, const CombiningRule& rule, double gamma = 0.05);

/// Imputed-block over donor-block size, n_int / n_out.
double default_rho(const FusedDataset& data);

// ---------------------------------------------------------------------------
// Replication schemes

/// Group label in [0, G) for every row. Each source is shuffled separately
/// and dealt round-robin, so group sizes within a source differ by at most one.
std::vector<int> partition_groups(const FusedDataset& data, int groups, Seed seed);

enum class Scheme { Jackknife, Bootstrap };

/// Per-replicate estimates, each the mean over m imputations of one replicate
/// dataset (leave-one-group-out for the jackknife, a resample for the bootstrap).
struct ReplicateSet {
    Scheme scheme = Scheme::Jackknife;
    int m = 1;
    std::vector<double> mu;
    std::vector<double> alpha;
    std::vector<Seed> seeds;
    std::size_t rejected_resamples = 0;

    std::size_t size() const { return alpha.size(); }
    std::span<const double> values(Parameter parameter) const
    {
        return parameter == Parameter::Mu ? std::span<const double>(mu) : std::span<const double>(alpha);
    }
};

struct ReplicationEstimate {
    double estimate = 0.0;
    double variance = 0.0;
};

/// Mean of the leave-one-group-out estimates and (G-1)/G times their sum of
/// squared deviations.
ReplicationEstimate jackknife_combine(std::span<const double> leave_group_out);

/// Mean of the resample estimates and their sample variance (divisor B-1).
ReplicationEstimate bootstrap_combine(std::span<const double> resample_estimates);

/// G * mean - (G - 1) * theta_(-g) for every group.
std::vector<double> pseudovalues(std::span<const double> leave_group_out);
/// Throws Error(Config) for a bootstrap replicate set.
std::vector<double> pseudovalues(const ReplicateSet& replicates, Parameter parameter);

struct ReplicationOptions {
    double gamma = 0.05;
    Execution execution = Execution::Serial;
    std::optional<std::size_t> outcome_column;
    bool stratified_bootstrap = false;
    int max_consecutive_rejections = 100;
};

struct ReplicationResult {
    VarianceReport mu;
    VarianceReport alpha;
    ReplicateSet replicates;

    const VarianceReport& report(Parameter parameter) const
    {
        return parameter == Parameter::Mu ? mu : alpha;
    }
};

struct EffectMean {
    double mu = 0.0;
    double alpha = 0.0;
};

/// Mean effect over m imputations of one dataset, refitting the imputation
/// model on that dataset first. Imputation j uses seed.derive("imputation", j).
EffectMean mean_effect(const FusedDataset& data, std::span<const ConditionalModelSpec> specs, int m,
                       Seed seed, std::optional<std::size_t> outcome_column = std::nullopt);

/// Method labels carried by the reports, e.g. "jackknife(G=25,m=50)".
std::string jackknife_label(int groups, int m);
std::string bootstrap_label(int resamples, int m, bool stratified);

/// Delete-a-group jackknife with m imputations inside every replicate.
ReplicationResult jackknife(const FusedDataset& data, std::span<const ConditionalModelSpec> specs,
                            int groups, int m, Seed seed, const ReplicationOptions& options = {});

/// Row bootstrap of the whole fused file (stratified by source on request)
/// with m imputations inside every resample. Resamples without both sources
/// or without both treatment arms are redrawn.
ReplicationResult bootstrap(const FusedDataset& data, std::span<const ConditionalModelSpec> specs,
                            int resamples, int m, Seed seed, const ReplicationOptions& options = {});

struct RulesResult {
    std::vector<EffectEstimate> estimates;
    PooledMI mu;
    PooledMI alpha;
    double rho = 0.0;
    std::vector<VarianceReport> reports;  // mu and alpha for every requested rule
};

/// Fits once, draws m imputations of the full file and applies the requested
/// combining rules to both parameters. `rho` defaults to default_rho(data).
RulesResult combining_rules(const FusedDataset& data, std::span<const ConditionalModelSpec> specs,
                            int m, Seed seed, std::span<const RuleKind> rules,
                            std::optional<double> rho = std::nullopt,
                            const ReplicationOptions& options = {});

}  // namespace fusion
