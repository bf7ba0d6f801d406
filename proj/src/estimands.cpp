#include "fusion/estimands.hpp"

#include "fusion/error.hpp"
#include "fusion/normal.hpp"

#include <cmath>
#include <fmt/format.h>

namespace fusion {

EffectEstimate estimate_effect(const FusedDataset& completed, std::optional<std::size_t> outcome_column)
{
    std::size_t y_col = 0;
    if (outcome_column) {
        y_col = *outcome_column;
    } else {
        const auto outcomes = completed.outcome_columns();
        y_col = outcomes.front();
    }
    const std::size_t z_col = completed.treatment_column();
    if (completed.n_int() == 0) throw Error(ErrorKind::Data, "estimate_effect: no intervention rows");

    const auto y = completed.column(y_col);
    const auto y_mask = completed.column_mask(y_col);
    const auto z = completed.column(z_col);

    // two-pass arm means, then pooled residual sum of squares
    double sum[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
    for (std::size_t r = completed.n_out(); r < completed.rows(); ++r) {
        if (y_mask[r])
            throw Error(ErrorKind::Data,
                        fmt::format("estimate_effect: outcome '{}' still missing on intervention rows",
                                    completed.schema()[y_col].name));
        const int arm = z[r] != 0.0;
        sum[arm] += y[r];
        ++count[arm];
    }
    if (count[0] == 0 || count[1] == 0)
        throw Error(ErrorKind::Data, "estimate_effect: both treatment arms must be present");
    const std::size_t n = count[0] + count[1];
    if (n <= 2) throw Error(ErrorKind::Data, "estimate_effect: need more than two intervention rows");

    const double mean0 = sum[0] / static_cast<double>(count[0]);
    const double mean1 = sum[1] / static_cast<double>(count[1]);
    double rss = 0.0;
    for (std::size_t r = completed.n_out(); r < completed.rows(); ++r) {
        const double e = y[r] - (z[r] != 0.0 ? mean1 : mean0);
        rss += e * e;
    }
    const double sigma2 = rss / static_cast<double>(n - 2);

    EffectEstimate est;
    est.mu_hat = mean0;
    est.alpha_hat = mean1 - mean0;
    est.var_mu = sigma2 / static_cast<double>(count[0]);
    est.var_alpha = sigma2 * (1.0 / static_cast<double>(count[0]) + 1.0 / static_cast<double>(count[1]));
    est.n_used = n;
    return est;
}

Interval confidence_interval(double estimate, double variance, double gamma)
{
    if (!(gamma > 0.0 && gamma < 1.0))
        throw Error(ErrorKind::Config, fmt::format("confidence level gamma={} outside (0, 1)", gamma));
    if (variance < 0.0) throw Error(ErrorKind::Numerical, "confidence_interval: negative variance");
    const double half = normal_quantile(1.0 - gamma / 2.0) * std::sqrt(variance);
    return Interval{estimate - half, estimate + half};
}

}  // namespace fusion
