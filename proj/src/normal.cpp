#include "fusion/normal.hpp"

#include "fusion/error.hpp"

#include <boost/math/distributions/normal.hpp>

namespace fusion {

namespace {
const boost::math::normal_distribution<double> standard_normal{};
}

double normal_pdf(double x) { return boost::math::pdf(standard_normal, x); }

double normal_cdf(double x) { return boost::math::cdf(standard_normal, x); }

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::Config, "normal quantile needs p in (0, 1)");
    return boost::math::quantile(standard_normal, p);
}

}  // namespace fusion
