#include "fusion/simlab.hpp"

#include "fusion/error.hpp"
#include "fusion/normal.hpp"

#include <Eigen/Dense>
#include <array>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <random>

namespace fusion {

namespace {

constexpr std::array<const char*, 4> kX = {"X1", "X2", "X3", "X4"};

struct ScenarioName {
    ScenarioId id;
    const char* name;
};

constexpr std::array<ScenarioName, 6> kScenarioNames = {{
    {ScenarioId::Primary, "primary"},
    {ScenarioId::ReducedOutcomes, "reduced_outcomes"},
    {ScenarioId::DropX3, "drop_x3"},
    {ScenarioId::NoCovariates, "no_covariates"},
    {ScenarioId::DifferentConditionals, "different_conditionals"},
    {ScenarioId::Pathway, "pathway"},
}};

}  // namespace

const char* to_string(ScenarioId id) noexcept
{
    for (const auto& entry : kScenarioNames)
        if (entry.id == id) return entry.name;
    return "?";
}

std::optional<ScenarioId> parse_scenario(std::string_view text)
{
    for (const auto& entry : kScenarioNames)
        if (text == entry.name) return entry.id;
    return std::nullopt;
}

ScenarioSpec make_scenario(ScenarioId id)
{
    ScenarioSpec spec;
    spec.id = id;
    if (id == ScenarioId::DifferentConditionals) spec.outcome_coef_out = 0.6;
    return spec;
}

void validate(const ScenarioSpec& spec)
{
    const auto fail = [](std::string message) { throw Error(ErrorKind::Config, std::move(message)); };
    if (!(spec.treatment_probability > 0.0 && spec.treatment_probability < 1.0))
        fail(fmt::format("treatment probability must lie in (0, 1), got {}", spec.treatment_probability));
    if (spec.replications < 1) fail(fmt::format("replications must be >= 1, got {}", spec.replications));
    if (!(spec.correlation >= 0.0 && spec.correlation < 1.0))
        fail(fmt::format("correlation must lie in [0, 1), got {}", spec.correlation));
    for (double v : {spec.treatment_shift, spec.truncation, spec.outcome_coef_int, spec.outcome_coef_out})
        if (!std::isfinite(v)) fail("scenario coefficients must be finite");
    if (spec.n_int_base < 4 || spec.n_out < 4) fail("sample sizes must be at least 4");
    if (!(spec.gamma > 0.0 && spec.gamma < 1.0)) fail(fmt::format("gamma must lie in (0, 1), got {}", spec.gamma));
    if (spec.id == ScenarioId::Pathway && (spec.pathway_example < 1 || spec.pathway_example > 6))
        fail(fmt::format("pathway example must be 1..6, got {}", spec.pathway_example));
    if (spec.methods.rules_m < 2 && !spec.methods.rules.empty()) fail("combining rules need m >= 2");
    for (const auto& j : spec.methods.jackknife)
        if (j.groups < 2 || j.m < 1) fail(fmt::format("invalid jackknife G={} m={}", j.groups, j.m));
    for (const auto& b : spec.methods.bootstrap)
        if (b.resamples < 2 || b.m < 1) fail(fmt::format("invalid bootstrap B={} m={}", b.resamples, b.m));
}

std::vector<ColumnSchema> simulation_schema()
{
    std::vector<ColumnSchema> schema{{"Z", VariableRole::Treatment, ColumnKind::Binary}};
    for (const char* x : kX) schema.push_back({x, VariableRole::Intermediate, ColumnKind::Continuous});
    schema.push_back({"Y", VariableRole::Outcome, ColumnKind::Continuous});
    return schema;
}

SimulatedPair generate_pair(const ScenarioSpec& spec, Seed seed)
{
    validate(spec);
    const double a = std::sqrt(spec.correlation);
    const double b = std::sqrt(1.0 - spec.correlation);
    std::normal_distribution<double> normal;
    std::bernoulli_distribution treated(spec.treatment_probability);

    const auto draw_w = [&](Engine& engine) {
        std::array<double, 4> w{};
        const double shared = normal(engine);
        for (auto& v : w) v = a * shared + b * normal(engine);
        return w;
    };

    std::vector<std::vector<std::optional<double>>> icols(5), ocols(5);
    SimulatedPair pair;

    Engine ie = make_engine(seed.derive("intervention"));
    for (std::size_t i = 0; i < spec.n_int_base; ++i) {
        auto x = draw_w(ie);
        const double z = treated(ie) ? 1.0 : 0.0;
        x[2] += spec.treatment_shift * z;
        x[3] += spec.treatment_shift * z;
        const double y = spec.outcome_coef_int * (x[0] + x[1] + x[2] + x[3]) + normal(ie);
        if (x[0] < spec.truncation) continue;
        icols[0].push_back(z);
        for (int j = 0; j < 4; ++j) icols[static_cast<std::size_t>(j) + 1].push_back(x[static_cast<std::size_t>(j)]);
        pair.latent_outcome.push_back(y);
    }

    Engine oe = make_engine(seed.derive("outcomes"));
    for (std::size_t i = 0; i < spec.n_out; ++i) {
        const auto x = draw_w(oe);
        const double y = spec.outcome_coef_out * (x[0] + x[1] + x[2] + x[3]) + normal(oe);
        if (spec.id == ScenarioId::ReducedOutcomes) {
            const bool at_least = x[0] >= spec.truncation;
            if (at_least != (spec.reduced_side == ReducedSide::AtLeast)) continue;
        }
        for (int j = 0; j < 4; ++j) ocols[static_cast<std::size_t>(j)].push_back(x[static_cast<std::size_t>(j)]);
        ocols[4].push_back(y);
    }

    pair.intervention.add("Z", std::move(icols[0]));
    for (std::size_t j = 0; j < 4; ++j) {
        pair.intervention.add(kX[j], std::move(icols[j + 1]));
        pair.outcomes.add(kX[j], std::move(ocols[j]));
    }
    pair.outcomes.add("Y", std::move(ocols[4]));
    return pair;
}

FusedDataset fuse(const SimulatedPair& pair)
{
    const auto schema = simulation_schema();
    return concatenate(pair.outcomes, pair.intervention, schema);
}

std::vector<ConditionalModelSpec> imputation_specs(const ScenarioSpec& spec)
{
    ConditionalModelSpec model;
    model.target = "Y";
    model.empirical_transform = spec.empirical_transform;
    switch (spec.id) {
    case ScenarioId::DropX3: model.predictors = {"X1", "X2", "X4"}; break;
    case ScenarioId::NoCovariates: model.predictors = {"X3", "X4"}; break;
    default: model.predictors = {"X1", "X2", "X3", "X4"}; break;
    }
    return {model};
}

TruthValues truth(const ScenarioSpec& spec)
{
    if (spec.id == ScenarioId::Pathway)
        throw Error(ErrorKind::Config, "pathway scenarios take their truth from the closed-form analysis");
    // E[X1 | X1 >= t] is the inverse Mills ratio; the other coordinates regress on X1 with slope rho.
    const double t = spec.truncation;
    const double mills = normal_pdf(t) / (1.0 - normal_cdf(t));
    TruthValues out;
    out.mu = spec.outcome_coef_int * (1.0 + 3.0 * spec.correlation) * mills;
    out.alpha = spec.outcome_coef_int * 2.0 * spec.treatment_shift;
    return out;
}

Metrics metrics(std::span<const double> estimates, std::span<const double> variances, double truth,
                double gamma)
{
    if (estimates.empty()) throw Error(ErrorKind::Config, "metrics: no estimates");
    if (variances.size() != estimates.size())
        throw Error(ErrorKind::Config, "metrics: estimates and variances differ in length");
    Metrics out;
    double squares = 0.0;
    for (double e : estimates) {
        out.bias += e - truth;
        squares += (e - truth) * (e - truth);
    }
    const auto n = static_cast<double>(estimates.size());
    out.bias /= n;
    out.rmse = std::sqrt(squares / n);

    std::size_t hits = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        out.mean_variance += variances[i];
        if (std::isnan(variances[i])) return out;
        if (confidence_interval(estimates[i], variances[i], gamma).contains(truth)) ++hits;
    }
    out.coverage = static_cast<double>(hits) / n;
    out.mean_variance /= n;
    return out;
}

const StudyRow* StudyResult::find(std::string_view method, Parameter parameter) const
{
    for (const auto& row : rows)
        if (row.method == method && row.parameter == parameter) return &row;
    return nullptr;
}

std::vector<std::string> method_labels(const MethodConfig& methods)
{
    std::vector<std::string> labels;
    for (RuleKind k : methods.rules) labels.emplace_back(to_string(k));
    for (const auto& j : methods.jackknife) labels.push_back(jackknife_label(j.groups, j.m));
    for (const auto& b : methods.bootstrap) labels.push_back(bootstrap_label(b.resamples, b.m, b.stratified));
    return labels;
}

namespace {

// Reports of one replication, two per method label (mu then alpha).
using ReplicationReports = std::vector<VarianceReport>;

ReplicationReports run_replication(const ScenarioSpec& spec, std::span<const ConditionalModelSpec> specs,
                                   Seed seed)
{
    const FusedDataset data = fuse(generate_pair(spec, seed.derive("data")));
    ReplicationOptions options;
    options.gamma = spec.gamma;
    ReplicationReports out;

    const auto& methods = spec.methods;
    if (!methods.rules.empty()) {
        auto rules = combining_rules(data, specs, methods.rules_m, seed.derive("rules"), methods.rules,
                                     methods.rho, options);
        for (auto& r : rules.reports) out.push_back(std::move(r));
    }
    for (const auto& j : methods.jackknife) {
        const auto label = jackknife_label(j.groups, j.m);
        auto res = jackknife(data, specs, j.groups, j.m, seed.derive(label), options);
        out.push_back(std::move(res.mu));
        out.push_back(std::move(res.alpha));
    }
    for (const auto& b : methods.bootstrap) {
        const auto label = bootstrap_label(b.resamples, b.m, b.stratified);
        ReplicationOptions boot = options;
        boot.stratified_bootstrap = b.stratified;
        auto res = bootstrap(data, specs, b.resamples, b.m, seed.derive(label), boot);
        out.push_back(std::move(res.mu));
        out.push_back(std::move(res.alpha));
    }
    return out;
}

}  // namespace

StudyResult run_study(const ScenarioSpec& spec, Execution execution)
{
    validate(spec);
    if (spec.id == ScenarioId::Pathway)
        throw Error(ErrorKind::Config, "run_study covers the fusion scenarios; use pathway_monte_carlo");
    if (spec.methods.empty()) throw Error(ErrorKind::Config, "no variance methods configured");

    const auto start = std::chrono::steady_clock::now();
    const auto specs = imputation_specs(spec);
    const auto labels = method_labels(spec.methods);
    const auto reps = static_cast<std::size_t>(spec.replications);

    std::vector<std::optional<ReplicationReports>> results(reps);
    std::vector<std::string> errors(reps);
    for_each_index(reps, execution, [&](std::size_t r) {
        try {
            results[r] = run_replication(spec, specs, spec.seed.derive("replication", r));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Schema) throw;
            errors[r] = fmt::format("replication {}: {}", r, e.what());
        }
    });

    StudyResult study;
    study.scenario = spec.id;
    study.truth = truth(spec);
    study.replications = spec.replications;
    for (const auto& message : errors)
        if (!message.empty()) study.failures.push_back(message);
    study.failed = study.failures.size();
    if (static_cast<double>(study.failed) > 0.01 * static_cast<double>(reps))
        throw Error(ErrorKind::Numerical, fmt::format("{} of {} replications failed; first: {}", study.failed,
                                                      reps, study.failures.front()));

    for (std::size_t k = 0; k < labels.size(); ++k) {
        for (Parameter p : {Parameter::Mu, Parameter::Alpha}) {
            const std::size_t slot = 2 * k + (p == Parameter::Alpha ? 1 : 0);
            std::vector<double> est, var;
            StudyRow row;
            row.method = labels[k];
            row.parameter = p;
            for (const auto& res : results) {
                if (!res) continue;
                const auto& report = (*res)[slot];
                est.push_back(report.estimate);
                var.push_back(report.negative_variance ? std::nan("") : report.variance);
                if (report.negative_variance) ++row.negative_variance;
            }
            row.used = est.size();
            row.result = metrics(est, var, p == Parameter::Mu ? study.truth.mu : study.truth.alpha, spec.gamma);
            study.rows.push_back(std::move(row));
        }
    }
    study.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return study;
}

// ---------------------------------------------------------------------------

namespace {

struct Unit {
    Eigen::VectorXd x;  // surrogates
    double y = 0.0;
};

class PathwaySampler {
public:
    explicit PathwaySampler(const PathwayParams& p) : p_(p), example_(p.example)
    {
        for (const auto& [name, value] : p.values) {
            if (name.starts_with("sigma2_")) sd_[name.substr(7)] = std::sqrt(value);
        }
    }

    int surrogates() const { return example_ == 6 ? 2 : 1; }

    Unit draw(double z, Engine& e)
    {
        const auto v = [this](const char* name) { return p_.at(name); };
        const auto noise = [&](const char* which) { return sd_.find(which)->second * normal_(e); };
        Unit u;
        u.x.resize(surrogates());
        switch (example_) {
        case 1: {
            const double x = v("phi0") + v("phi1") * z + noise("x");
            u.x(0) = x;
            u.y = v("theta0") + v("theta1") * z + v("theta2") * x + noise("y");
            break;
        }
        case 2:
        case 3:
        case 5: {
            const double uc = v("alpha0") + noise("u");
            const double x = v("beta0") + v("beta1") * uc + v("beta2") * z + noise("x");
            u.x(0) = x;
            u.y = v("gamma0") + v("gamma1") * uc + noise("y");
            if (example_ != 3) u.y += v("gamma2") * x;
            if (example_ == 5) u.y += v("gamma3") * z;
            break;
        }
        case 4: {
            u.y = v("gamma0") + noise("y");
            u.x(0) = v("beta0") + v("beta2") * z + v("beta3") * u.y + noise("x");
            break;
        }
        case 6: {
            const double x1 = v("alpha0") + noise("1");
            const double x2 = v("beta0") + v("beta1") * x1 + v("beta2") * z + noise("2");
            u.x(0) = x1;
            u.x(1) = x2;
            u.y = v("gamma0") + v("gamma1") * x1 + v("gamma2") * x2 + noise("y");
            break;
        }
        default: break;
        }
        return u;
    }

private:
    const PathwayParams& p_;
    int example_;
    std::map<std::string, double, std::less<>> sd_;
    std::normal_distribution<double> normal_;
};

}  // namespace

PathwayMonteCarlo pathway_monte_carlo(const PathwayParams& params, std::size_t n, Seed seed,
                                      double treatment_probability)
{
    validate(params);
    if (n < 10) throw Error(ErrorKind::Config, "pathway Monte Carlo needs at least 10 rows per source");
    PathwaySampler sampler(params);
    const int k = sampler.surrogates();

    // Outcomes source: regress Y on the surrogates with Z held at 0.
    Engine oe = make_engine(seed.derive("outcomes"));
    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), k + 1);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        const Unit u = sampler.draw(0.0, oe);
        design(i, 0) = 1.0;
        design.row(i).tail(k) = u.x.transpose();
        y(i) = u.y;
    }
    const Eigen::MatrixXd xtx = design.transpose() * design;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    const Eigen::VectorXd coef = ldlt.solve(design.transpose() * y);
    const double sigma2 = (y - design * coef).squaredNorm() / static_cast<double>(static_cast<int>(n) - k - 1);
    const Eigen::MatrixXd cov_coef = sigma2 * ldlt.solve(Eigen::MatrixXd::Identity(k + 1, k + 1));
    const Eigen::VectorXd theta = coef.tail(k);
    const Eigen::MatrixXd cov_theta = cov_coef.bottomRightCorner(k, k);

    // Intervention source: arm differences of the surrogates and of the outcome.
    Engine ie = make_engine(seed.derive("intervention"));
    std::bernoulli_distribution treated(treatment_probability);
    std::array<std::vector<Unit>, 2> arms;
    for (std::size_t i = 0; i < n; ++i) {
        const int z = treated(ie) ? 1 : 0;
        arms[static_cast<std::size_t>(z)].push_back(sampler.draw(z, ie));
    }
    if (arms[0].size() < 2 || arms[1].size() < 2)
        throw Error(ErrorKind::Data, "pathway Monte Carlo drew a near-empty treatment arm");

    std::array<Eigen::VectorXd, 2> mean_x;
    std::array<double, 2> mean_y{};
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(k, k);
    double scatter_y = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
        mean_x[a] = Eigen::VectorXd::Zero(k);
        for (const auto& u : arms[a]) {
            mean_x[a] += u.x;
            mean_y[a] += u.y;
        }
        const auto na = static_cast<double>(arms[a].size());
        mean_x[a] /= na;
        mean_y[a] /= na;
        for (const auto& u : arms[a]) {
            const Eigen::VectorXd d = u.x - mean_x[a];
            scatter += d * d.transpose();
            scatter_y += (u.y - mean_y[a]) * (u.y - mean_y[a]);
        }
    }
    const double dof = static_cast<double>(n) - 2.0;
    const double inv_n = 1.0 / static_cast<double>(arms[0].size()) + 1.0 / static_cast<double>(arms[1].size());
    const Eigen::VectorXd phi = mean_x[1] - mean_x[0];
    const Eigen::MatrixXd cov_phi = scatter / dof * inv_n;

    PathwayMonteCarlo out;
    out.n = n;
    out.phi1_tilde = theta.dot(phi);
    out.phi1_tilde_se = std::sqrt(phi.dot(cov_theta * phi) + theta.dot(cov_phi * theta));
    out.phi1 = mean_y[1] - mean_y[0];
    out.phi1_se = std::sqrt(scatter_y / dof * inv_n);
    return out;
}

PathwayParams random_pathway_params(int example, Seed seed)
{
    PathwayParams params;
    params.example = example;
    Engine engine = make_engine(seed);
    std::uniform_real_distribution<double> coefficient(0.3, 1.0);
    std::uniform_real_distribution<double> variance(0.5, 2.0);
    for (const auto& name : required_fields(example))
        params.values[name] = name.starts_with("sigma2_") ? variance(engine) : coefficient(engine);
    return params;
}

}  // namespace fusion
