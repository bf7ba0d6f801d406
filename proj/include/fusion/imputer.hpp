#pragma once

#include "fusion/dataset.hpp"
#include "fusion/parallel.hpp"
#include "fusion/rng.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fusion {

/// Rank-based map between a continuous variable and standard-normal scores.
///
/// Observed values are sorted; ties share their average rank r and map to the
/// score Phi^-1((r - 0.5) / n). Between order statistics both directions
/// interpolate linearly; beyond the extremes they are held constant, so
/// inverse() always lands in [min, max] of the observed values.
class EmpiricalTransform {
public:
    /// Throws Error(Numerical) when fewer than two distinct values are given.
    static EmpiricalTransform fit(std::span<const double> observed);

    double forward(double value) const;
    double inverse(double score) const;

    double min() const { return values_.front(); }
    double max() const { return values_.back(); }
    std::span<const double> support() const { return values_; }
    std::span<const double> scores() const { return scores_; }

private:
    std::vector<double> values_;  // distinct, ascending
    std::vector<double> scores_;  // strictly ascending
};

/// Latent-Gaussian representation of a binary or ordinal variable.
///
/// With cumulative level frequencies F_k, level k is scored at
/// Phi^-1((F_{k-1} + F_k) / 2) and a latent draw t is mapped back to the first
/// level whose cut point Phi^-1(F_k) is >= t.
class LatentThresholds {
public:
    /// Throws Error(Numerical) when the variable shows a single level.
    static LatentThresholds fit(std::span<const double> observed);

    double score(double level) const;
    double level_for(double latent) const;

    std::span<const double> levels() const { return levels_; }
    std::span<const double> cut_points() const { return cuts_; }

private:
    std::vector<double> levels_;
    std::vector<double> level_scores_;
    std::vector<double> cuts_;  // levels_.size() - 1 entries
};

/// One conditional model of the sequential factorization: target given
/// predictors. The treatment column can never appear here.
struct ConditionalModelSpec {
    std::string target;
    std::vector<std::string> predictors;
    bool intercept = true;
    /// Continuous targets only: regress on empirical normal scores (default)
    /// or on the raw scale.
    bool empirical_transform = true;
};

struct PosteriorDraw {
    Eigen::VectorXd coefficients;  // intercept first when present
    double residual_variance = 1.0;
};

enum class TargetScale { Raw, Empirical, Latent };

/// Sufficient statistics of one fitted conditional.
struct FittedConditional {
    ConditionalModelSpec spec;
    std::size_t target = 0;
    std::vector<std::size_t> predictors;
    TargetScale scale = TargetScale::Raw;
    std::optional<EmpiricalTransform> transform;
    std::optional<LatentThresholds> thresholds;

    Eigen::MatrixXd cross_product;  // X'X
    Eigen::MatrixXd chol_upper;     // R with R'R = X'X
    Eigen::VectorXd coefficients;   // least-squares solution
    double rss = 0.0;
    int df = 0;
    std::size_t fit_rows = 0;

    std::size_t parameter_count() const { return predictors.size() + (spec.intercept ? 1 : 0); }
};

class ImputationModel {
public:
    explicit ImputationModel(std::vector<FittedConditional> conditionals)
        : conditionals_(std::move(conditionals)) {}

    const std::vector<FittedConditional>& conditionals() const { return conditionals_; }
    const FittedConditional* find(std::size_t target_column) const;

private:
    std::vector<FittedConditional> conditionals_;
};

/// Fits each conditional, in the given order, on the rows where its target
/// and all its predictors are observed. A predictor with missing cells must be
/// the target of an earlier conditional.
ImputationModel fit(const FusedDataset& data, std::span<const ConditionalModelSpec> specs);

/// sigma^2 = RSS / chi2(df), beta ~ N(beta_hat, sigma^2 (X'X)^-1).
PosteriorDraw draw_parameters(const FittedConditional& conditional, Engine& engine);
std::vector<PosteriorDraw> draw_parameters(const ImputationModel& model, Seed seed);

/// One proper imputation: for every conditional in order, draw parameters,
/// then draw each missing target cell from its predictive distribution on the
/// modelling scale and map it back. Observed cells are never touched.
FusedDataset impute_once(const FusedDataset& data, const ImputationModel& model, Seed seed);

/// m independent imputations; imputation k uses seed.derive("imputation", k).
std::vector<FusedDataset> impute_m(const FusedDataset& data, const ImputationModel& model, int m,
                                   Seed seed, Execution execution = Execution::Serial);

/// Default specs: one conditional per column with missing cells, ordered by
/// ascending missingness, each using every fully observed non-treatment column
/// plus the targets of earlier conditionals.
std::vector<ConditionalModelSpec> default_specs(const FusedDataset& data);

}  // namespace fusion
