#pragma once

#include "fusion/dataset.hpp"

#include <cstddef>
#include <optional>

namespace fusion {

/// Fit of E[Y | Z] = mu + alpha Z on the intervention rows of one completed
/// dataset. Variances are the homoskedastic OLS sampling variances.
struct EffectEstimate {
    double mu_hat = 0.0;
    double alpha_hat = 0.0;
    double var_mu = 0.0;
    double var_alpha = 0.0;
    std::size_t n_used = 0;
};

/// Only intervention-source rows enter the fit. `outcome_column` defaults to
/// the first Outcome column of the schema.
EffectEstimate estimate_effect(const FusedDataset& completed,
                               std::optional<std::size_t> outcome_column = std::nullopt);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double x) const { return lower <= x && x <= upper; }
};

/// Wald interval est -/+ z_{1-gamma/2} sqrt(var), normal reference.
Interval confidence_interval(double estimate, double variance, double gamma);

}  // namespace fusion
