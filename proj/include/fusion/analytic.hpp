#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fusion {

/// Coefficients and error variances of one of the six causal-pathway
/// examples, keyed by name ("beta2", "sigma2_u", ...).
struct PathwayParams {
    int example = 1;
    std::map<std::string, double, std::less<>> values;

    double at(std::string_view name) const;
};

/// Names every example requires, in a fixed order.
const std::vector<std::string>& required_fields(int example);

struct FieldCheck {
    std::vector<std::string> missing;
    std::vector<std::string> unexpected;
    std::vector<std::string> nonpositive_variances;

    bool ok() const { return missing.empty() && unexpected.empty() && nonpositive_variances.empty(); }
};

FieldCheck check_fields(const PathwayParams& params);
/// Throws Error(Config) naming every missing, unexpected or invalid field.
void validate(const PathwayParams& params);

struct PathwayAnalysis {
    int example = 1;
    double phi1 = 0.0;        // true effect of Z on Y
    double phi1_tilde = 0.0;  // product-of-estimates (data fusion) estimand
    double raw_bias = 0.0;    // phi1_tilde - phi1
    double scaled_bias = 0.0; // raw_bias / phi1; +-inf or NaN when phi1 == 0
    double portion = 0.0;     // 1 + scaled_bias
    bool infinite = false;    // phi1 == 0
    std::optional<std::string> constant_name;  // "c", "c1" or "c2"
    std::optional<double> constant;
};

PathwayAnalysis analyze_pathway(const PathwayParams& params);

inline double product_of_estimates(double theta2, double phi1) { return theta2 * phi1; }

}  // namespace fusion
