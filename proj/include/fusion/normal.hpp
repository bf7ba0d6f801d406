#pragma once

namespace fusion {

double normal_pdf(double x);
double normal_cdf(double x);
/// Standard-normal quantile; p must lie in (0, 1).
double normal_quantile(double p);

}  // namespace fusion
