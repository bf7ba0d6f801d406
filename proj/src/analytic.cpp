#include "fusion/analytic.hpp"

#include "fusion/error.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <limits>

namespace fusion {

namespace {

const std::vector<std::vector<std::string>> kRequired = {
    {"phi0", "phi1", "theta0", "theta1", "theta2", "sigma2_x", "sigma2_y"},
    {"alpha0", "beta0", "beta1", "beta2", "gamma0", "gamma1", "gamma2", "sigma2_u", "sigma2_x", "sigma2_y"},
    {"alpha0", "beta0", "beta1", "beta2", "gamma0", "gamma1", "sigma2_u", "sigma2_x", "sigma2_y"},
    {"beta0", "beta2", "beta3", "gamma0", "sigma2_x", "sigma2_y"},
    {"alpha0", "beta0", "beta1", "beta2", "gamma0", "gamma1", "gamma2", "gamma3", "sigma2_u", "sigma2_x",
     "sigma2_y"},
    {"alpha0", "beta0", "beta1", "beta2", "gamma0", "gamma1", "gamma2", "sigma2_1", "sigma2_2", "sigma2_y"},
};

bool is_variance(std::string_view name) { return name.starts_with("sigma2_"); }

// sigma2_u-weighted attenuation shared by examples 2, 3 and 5
double confounder_slope(const PathwayParams& p)
{
    const double b1 = p.at("beta1");
    const double su = p.at("sigma2_u");
    return b1 * su / (b1 * b1 * su + p.at("sigma2_x"));
}

}  // namespace

double PathwayParams::at(std::string_view name) const
{
    const auto it = values.find(name);
    if (it == values.end())
        throw Error(ErrorKind::Config, fmt::format("example {}: parameter '{}' not supplied", example, name));
    return it->second;
}

const std::vector<std::string>& required_fields(int example)
{
    if (example < 1 || example > 6)
        throw Error(ErrorKind::Config, fmt::format("pathway example must be 1..6, got {}", example));
    return kRequired[static_cast<std::size_t>(example - 1)];
}

FieldCheck check_fields(const PathwayParams& params)
{
    const auto& need = required_fields(params.example);
    FieldCheck check;
    for (const auto& name : need) {
        const auto it = params.values.find(name);
        if (it == params.values.end()) check.missing.push_back(name);
        else if (!std::isfinite(it->second) || (is_variance(name) && !(it->second > 0.0)))
            check.nonpositive_variances.push_back(name);
    }
    for (const auto& [name, value] : params.values)
        if (std::find(need.begin(), need.end(), name) == need.end()) check.unexpected.push_back(name);
    return check;
}

void validate(const PathwayParams& params)
{
    const auto check = check_fields(params);
    if (check.ok()) return;
    std::vector<std::string> parts;
    if (!check.missing.empty()) parts.push_back(fmt::format("missing [{}]", fmt::join(check.missing, ", ")));
    if (!check.unexpected.empty())
        parts.push_back(fmt::format("unexpected [{}]", fmt::join(check.unexpected, ", ")));
    if (!check.nonpositive_variances.empty())
        parts.push_back(fmt::format("invalid (non-finite or variance <= 0) [{}]",
                                    fmt::join(check.nonpositive_variances, ", ")));
    throw Error(ErrorKind::Config,
                fmt::format("pathway example {} parameters: {}", params.example, fmt::join(parts, "; ")));
}

PathwayAnalysis analyze_pathway(const PathwayParams& p)
{
    validate(p);
    PathwayAnalysis a;
    a.example = p.example;
    switch (p.example) {
    case 1:
        a.phi1 = p.at("theta1") + p.at("theta2") * p.at("phi1");
        a.phi1_tilde = product_of_estimates(p.at("theta2"), p.at("phi1"));
        break;
    case 2: {
        const double c = confounder_slope(p);
        a.constant_name = "c";
        a.constant = c;
        a.phi1 = p.at("beta2") * p.at("gamma2");
        a.phi1_tilde = p.at("beta2") * (p.at("gamma1") * c + p.at("gamma2"));
        break;
    }
    case 3: {
        const double c1 = p.at("gamma1") * confounder_slope(p);
        a.constant_name = "c1";
        a.constant = c1;
        a.phi1 = 0.0;
        a.phi1_tilde = p.at("beta2") * c1;
        break;
    }
    case 4: {
        const double b3 = p.at("beta3");
        const double sy = p.at("sigma2_y");
        const double c2 = b3 * sy / (b3 * b3 * sy + p.at("sigma2_x"));
        a.constant_name = "c2";
        a.constant = c2;
        a.phi1 = 0.0;
        a.phi1_tilde = c2 * p.at("beta2");
        break;
    }
    case 5: {
        const double c1 = p.at("gamma1") * confounder_slope(p);
        a.constant_name = "c1";
        a.constant = c1;
        a.phi1 = p.at("gamma3") + p.at("beta2") * p.at("gamma2");
        a.phi1_tilde = (c1 + p.at("gamma2")) * p.at("beta2");
        break;
    }
    case 6:
        // Z moves only the second surrogate, so the inner product collapses.
        a.phi1 = p.at("gamma2") * p.at("beta2");
        a.phi1_tilde = p.at("beta2") * p.at("gamma2");
        break;
    default: break;
    }
    a.raw_bias = a.phi1_tilde - a.phi1;
    if (a.phi1 == 0.0) {
        a.infinite = true;
        a.scaled_bias = a.raw_bias == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                          : std::copysign(std::numeric_limits<double>::infinity(), a.raw_bias);
    } else {
        a.scaled_bias = a.raw_bias / a.phi1;
    }
    a.portion = 1.0 + a.scaled_bias;
    return a;
}

}  // namespace fusion
