#pragma once

#include "fusion/analytic.hpp"
#include "fusion/dataset.hpp"
#include "fusion/imputer.hpp"
#include "fusion/parallel.hpp"
#include "fusion/replication.hpp"
#include "fusion/rng.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fusion {

enum class ScenarioId { Primary, ReducedOutcomes, DropX3, NoCovariates, DifferentConditionals, Pathway };

const char* to_string(ScenarioId id) noexcept;
std::optional<ScenarioId> parse_scenario(std::string_view text);

/// Which outcomes-source rows ReducedOutcomes keeps relative to the threshold.
enum class ReducedSide { AtLeast, Below };

struct JackknifeConfig {
    int groups = 25;
    int m = 50;
};

struct BootstrapConfig {
    int resamples = 250;
    int m = 10;
    bool stratified = false;
};

struct MethodConfig {
    std::vector<RuleKind> rules;
    int rules_m = 200;
    std::optional<double> rho;
    std::vector<JackknifeConfig> jackknife;
    std::vector<BootstrapConfig> bootstrap;

    bool empty() const { return rules.empty() && jackknife.empty() && bootstrap.empty(); }
};

struct ScenarioSpec {
    ScenarioId id = ScenarioId::Primary;
    int pathway_example = 0;  // 1..6 when id == Pathway
    std::size_t n_int_base = 724;
    std::size_t n_out = 500;
    double treatment_probability = 0.5;
    double correlation = 0.5;
    double treatment_shift = 0.5;  // added to X3 and X4 of treated rows
    double truncation = -0.5;      // intervention rows need X1 >= truncation
    double outcome_coef_int = 0.5;
    double outcome_coef_out = 0.5;
    ReducedSide reduced_side = ReducedSide::AtLeast;
    bool empirical_transform = true;
    int replications = 500;
    MethodConfig methods;
    double gamma = 0.05;
    Seed seed{};
};

/// Defaults for a scenario: DifferentConditionals raises the outcomes-source
/// coefficients to 0.6, everything else keeps the primary settings.
ScenarioSpec make_scenario(ScenarioId id);

/// Throws Error(Config) for an unusable spec.
void validate(const ScenarioSpec& spec);

struct SimulatedPair {
    Table outcomes;      // X1..X4, Y
    Table intervention;  // Z, X1..X4 (Y withheld)
    std::vector<double> latent_outcome;  // the withheld Y of every intervention row
};

/// Column roles of the simulated files.
std::vector<ColumnSchema> simulation_schema();

SimulatedPair generate_pair(const ScenarioSpec& spec, Seed seed);
FusedDataset fuse(const SimulatedPair& pair);

/// Outcome model used for the scenario: DropX3 omits X3, NoCovariates keeps
/// only X3 and X4. Treatment never enters.
std::vector<ConditionalModelSpec> imputation_specs(const ScenarioSpec& spec);

struct TruthValues {
    double mu = 0.0;
    double alpha = 0.0;
};

/// Closed-form population values of the intervention-source regression.
TruthValues truth(const ScenarioSpec& spec);

struct Metrics {
    double bias = 0.0;
    double rmse = 0.0;
    std::optional<double> coverage;  // absent when any variance is NaN
    double mean_variance = 0.0;      // NaN under the same condition
};

Metrics metrics(std::span<const double> estimates, std::span<const double> variances, double truth,
                double gamma);

struct StudyRow {
    std::string method;
    Parameter parameter = Parameter::Alpha;
    Metrics result;
    std::size_t used = 0;              // replications aggregated
    std::size_t negative_variance = 0; // replications flagged by the rule
};

struct StudyResult {
    ScenarioId scenario = ScenarioId::Primary;
    TruthValues truth;
    int replications = 0;
    std::size_t failed = 0;
    std::vector<std::string> failures;  // first message of each failing replication
    std::vector<StudyRow> rows;
    double seconds = 0.0;

    const StudyRow* find(std::string_view method, Parameter parameter) const;
};

/// Labels in the order run_study reports them.
std::vector<std::string> method_labels(const MethodConfig& methods);

/// Replication r draws its data from seed.derive("replication", r) and every
/// method from that stream's derive(method label). A replication that fails
/// with a data or numerical error is skipped; more than 1% failures is an error.
StudyResult run_study(const ScenarioSpec& spec, Execution execution = Execution::Serial);

// ---------------------------------------------------------------------------
// Causal-pathway Monte Carlo

struct PathwayMonteCarlo {
    std::size_t n = 0;          // rows per source
    double phi1_tilde = 0.0;    // theta_hat . phi_hat
    double phi1_tilde_se = 0.0; // delta method, independent samples
    double phi1 = 0.0;          // arm difference of the intervention-source outcome
    double phi1_se = 0.0;
};

/// Draws an outcomes sample (Z = 0) and an intervention sample (Z ~ Bern(p)),
/// n rows each, from the example's structural equations.
PathwayMonteCarlo pathway_monte_carlo(const PathwayParams& params, std::size_t n, Seed seed,
                                      double treatment_probability = 0.5);

/// Reproducible parameter set: coefficients in [0.3, 1], variances in [0.5, 2].
PathwayParams random_pathway_params(int example, Seed seed);

}  // namespace fusion
