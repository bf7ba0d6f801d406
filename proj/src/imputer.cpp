#include "fusion/imputer.hpp"

#include "fusion/error.hpp"
#include "fusion/normal.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <map>
#include <random>
#include <set>

namespace fusion {

EmpiricalTransform EmpiricalTransform::fit(std::span<const double> observed)
{
    std::vector<double> sorted(observed.begin(), observed.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());

    EmpiricalTransform t;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        // ranks i+1 .. j share their average
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        t.values_.push_back(sorted[i]);
        t.scores_.push_back(normal_quantile((rank - 0.5) / n));
        i = j;
    }
    if (t.values_.size() < 2)
        throw Error(ErrorKind::Numerical, "empirical transform: target shows no variation");
    return t;
}

namespace {

// Piecewise-linear map through (xs, ys), constant outside [xs.front(), xs.back()].
double interpolate(std::span<const double> xs, std::span<const double> ys, double x)
{
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
    const std::size_t lo = hi - 1;
    const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + w * (ys[hi] - ys[lo]);
}

}  // namespace

double EmpiricalTransform::forward(double value) const { return interpolate(values_, scores_, value); }

double EmpiricalTransform::inverse(double score) const { return interpolate(scores_, values_, score); }

LatentThresholds LatentThresholds::fit(std::span<const double> observed)
{
    std::map<double, std::size_t> counts;
    for (double v : observed) ++counts[v];
    if (counts.size() < 2)
        throw Error(ErrorKind::Numerical, "latent thresholds: degenerate target, no variation");

    LatentThresholds t;
    const auto n = static_cast<double>(observed.size());
    double cumulative = 0.0;
    std::size_t k = 0;
    for (const auto& [level, count] : counts) {
        const double previous = cumulative;
        cumulative += static_cast<double>(count) / n;
        t.levels_.push_back(level);
        t.level_scores_.push_back(normal_quantile(0.5 * (previous + cumulative)));
        if (++k < counts.size()) t.cuts_.push_back(normal_quantile(cumulative));
    }
    return t;
}

double LatentThresholds::score(double level) const
{
    const auto it = std::lower_bound(levels_.begin(), levels_.end(), level);
    if (it == levels_.end() || *it != level)
        throw Error(ErrorKind::Data, fmt::format("latent thresholds: unseen level {}", level));
    return level_scores_[static_cast<std::size_t>(it - levels_.begin())];
}

double LatentThresholds::level_for(double latent) const
{
    const auto k = static_cast<std::size_t>(std::lower_bound(cuts_.begin(), cuts_.end(), latent) - cuts_.begin());
    return levels_[k];
}

const FittedConditional* ImputationModel::find(std::size_t target_column) const
{
    for (const auto& c : conditionals_)
        if (c.target == target_column) return &c;
    return nullptr;
}

namespace {

FittedConditional fit_one(const FusedDataset& data, const ConditionalModelSpec& spec,
                          const std::set<std::size_t>& earlier_targets)
{
    FittedConditional fc;
    fc.spec = spec;
    fc.target = data.column_index(spec.target);
    const auto& target_schema = data.schema()[fc.target];
    if (target_schema.role == VariableRole::Treatment)
        throw Error(ErrorKind::Config, fmt::format("treatment column '{}' cannot be imputed", spec.target));

    std::set<std::size_t> seen;
    for (const auto& name : spec.predictors) {
        const std::size_t c = data.column_index(name);
        if (data.schema()[c].role == VariableRole::Treatment)
            throw Error(ErrorKind::Config,
                        fmt::format("treatment column '{}' cannot be an imputation predictor", name));
        if (c == fc.target)
            throw Error(ErrorKind::Config, fmt::format("'{}' is both target and predictor", name));
        if (!seen.insert(c).second)
            throw Error(ErrorKind::Config, fmt::format("predictor '{}' listed twice", name));
        if (data.missing_count(c) > 0 && !earlier_targets.contains(c))
            throw Error(ErrorKind::Config,
                        fmt::format("predictor '{}' has missing cells but is not imputed before '{}'",
                                    name, spec.target));
        fc.predictors.push_back(c);
    }

    const std::size_t p = fc.parameter_count();
    if (p == 0) throw Error(ErrorKind::Config, fmt::format("conditional for '{}' has no terms", spec.target));

    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        if (data.missing(r, fc.target)) continue;
        if (std::any_of(fc.predictors.begin(), fc.predictors.end(),
                        [&](std::size_t c) { return data.missing(r, c); }))
            continue;
        rows.push_back(r);
    }
    if (rows.size() < p + 10)
        throw Error(ErrorKind::Data,
                    fmt::format("conditional for '{}': {} usable rows, need at least {}", spec.target,
                                rows.size(), p + 10));

    std::vector<double> y_raw(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) y_raw[i] = data.value(rows[i], fc.target);

    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    if (target_schema.kind == ColumnKind::Continuous) {
        if (spec.empirical_transform) {
            fc.scale = TargetScale::Empirical;
            fc.transform = EmpiricalTransform::fit(y_raw);
            for (std::size_t i = 0; i < rows.size(); ++i)
                y[static_cast<Eigen::Index>(i)] = fc.transform->forward(y_raw[i]);
        } else {
            fc.scale = TargetScale::Raw;
            if (std::all_of(y_raw.begin(), y_raw.end(), [&](double v) { return v == y_raw.front(); }))
                throw Error(ErrorKind::Numerical,
                            fmt::format("conditional for '{}': degenerate target, no variation", spec.target));
            for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = y_raw[i];
        }
    } else {
        fc.scale = TargetScale::Latent;
        fc.thresholds = LatentThresholds::fit(y_raw);
        for (std::size_t i = 0; i < rows.size(); ++i)
            y[static_cast<Eigen::Index>(i)] = fc.thresholds->score(y_raw[i]);
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Eigen::Index k = 0;
        const auto row = static_cast<Eigen::Index>(i);
        if (spec.intercept) x(row, k++) = 1.0;
        for (std::size_t c : fc.predictors) x(row, k++) = data.value(rows[i], c);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < static_cast<Eigen::Index>(p)) {
        std::vector<std::string> offending;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < static_cast<Eigen::Index>(p); ++k) {
            const auto term = static_cast<std::size_t>(perm[k]);
            if (spec.intercept && term == 0) offending.push_back("(intercept)");
            else offending.push_back(spec.predictors[term - (spec.intercept ? 1 : 0)]);
        }
        throw Error(ErrorKind::Numerical,
                    fmt::format("conditional for '{}': rank-deficient predictors ({})", spec.target,
                                fmt::join(offending, ", ")));
    }

    fc.coefficients = qr.solve(y);
    fc.rss = (y - x * fc.coefficients).squaredNorm();
    fc.cross_product = x.transpose() * x;
    Eigen::LLT<Eigen::MatrixXd> llt(fc.cross_product);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::Numerical,
                    fmt::format("conditional for '{}': cross-product not positive definite", spec.target));
    fc.chol_upper = llt.matrixU();
    fc.fit_rows = rows.size();
    fc.df = static_cast<int>(rows.size() - p);
    if (!(fc.rss > 0.0))
        throw Error(ErrorKind::Numerical,
                    fmt::format("conditional for '{}': exact fit leaves no residual variance", spec.target));
    return fc;
}

}  // namespace

ImputationModel fit(const FusedDataset& data, std::span<const ConditionalModelSpec> specs)
{
    std::vector<FittedConditional> out;
    std::set<std::size_t> targets;
    for (const auto& spec : specs) {
        out.push_back(fit_one(data, spec, targets));
        if (!targets.insert(out.back().target).second)
            throw Error(ErrorKind::Config, fmt::format("'{}' is the target of two conditionals", spec.target));
    }
    return ImputationModel(std::move(out));
}

PosteriorDraw draw_parameters(const FittedConditional& conditional, Engine& engine)
{
    std::chi_squared_distribution<double> chi2(conditional.df);
    std::normal_distribution<double> normal;
    PosteriorDraw draw;
    draw.residual_variance = conditional.rss / chi2(engine);
    Eigen::VectorXd z(conditional.coefficients.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(engine);
    draw.coefficients = conditional.coefficients +
                        std::sqrt(draw.residual_variance) *
                            conditional.chol_upper.triangularView<Eigen::Upper>().solve(z);
    return draw;
}

std::vector<PosteriorDraw> draw_parameters(const ImputationModel& model, Seed seed)
{
    Engine engine = make_engine(seed);
    std::vector<PosteriorDraw> out;
    out.reserve(model.conditionals().size());
    for (const auto& c : model.conditionals()) out.push_back(draw_parameters(c, engine));
    return out;
}

FusedDataset impute_once(const FusedDataset& data, const ImputationModel& model, Seed seed)
{
    for (std::size_t c = 0; c < data.cols(); ++c)
        if (data.missing_count(c) > 0 && !model.find(c))
            throw Error(ErrorKind::Data,
                        fmt::format("column '{}' has missing cells but no imputation model",
                                    data.schema()[c].name));

    Engine engine = make_engine(seed);
    FusedDataset current = data;
    std::vector<std::size_t> rows;
    std::vector<double> drawn;
    for (const auto& fc : model.conditionals()) {
        const PosteriorDraw draw = draw_parameters(fc, engine);
        const double sigma = std::sqrt(draw.residual_variance);

        rows.clear();
        const auto mask = current.column_mask(fc.target);
        for (std::size_t r = 0; r < current.rows(); ++r)
            if (mask[r]) rows.push_back(r);
        if (rows.empty()) continue;

        std::vector<std::span<const double>> columns;
        for (std::size_t c : fc.predictors) {
            if (current.missing_count(c) > 0) {
                const auto pmask = current.column_mask(c);
                for (std::size_t r : rows)
                    if (pmask[r])
                        throw Error(ErrorKind::Data,
                                    fmt::format("predictor '{}' is missing where '{}' is imputed",
                                                current.schema()[c].name, fc.spec.target));
            }
            columns.push_back(current.column(c));
        }

        std::normal_distribution<double> normal;
        drawn.resize(rows.size());
        const Eigen::Index offset = fc.spec.intercept ? 1 : 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double eta = fc.spec.intercept ? draw.coefficients[0] : 0.0;
            for (std::size_t k = 0; k < columns.size(); ++k)
                eta += draw.coefficients[static_cast<Eigen::Index>(k) + offset] * columns[k][rows[i]];
            const double latent = eta + sigma * normal(engine);
            switch (fc.scale) {
            case TargetScale::Raw: drawn[i] = latent; break;
            case TargetScale::Empirical: drawn[i] = fc.transform->inverse(latent); break;
            case TargetScale::Latent: drawn[i] = fc.thresholds->level_for(latent); break;
            }
        }
        current = std::move(current).with_cells(fc.target, rows, drawn);
    }
    return current;
}

std::vector<FusedDataset> impute_m(const FusedDataset& data, const ImputationModel& model, int m,
                                   Seed seed, Execution execution)
{
    if (m < 1) throw Error(ErrorKind::Config, "impute_m: m must be at least 1");
    std::vector<std::optional<FusedDataset>> slots(static_cast<std::size_t>(m));
    for_each_index(slots.size(), execution, [&](std::size_t k) {
        slots[k] = impute_once(data, model, seed.derive("imputation", k));
    });
    std::vector<FusedDataset> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

std::vector<ConditionalModelSpec> default_specs(const FusedDataset& data)
{
    std::vector<std::size_t> targets;
    std::vector<std::string> base;
    for (std::size_t c = 0; c < data.cols(); ++c) {
        if (c == data.treatment_column()) continue;
        if (data.missing_count(c) > 0) targets.push_back(c);
        else base.push_back(data.schema()[c].name);
    }
    std::stable_sort(targets.begin(), targets.end(), [&](std::size_t a, std::size_t b) {
        return data.missing_count(a) < data.missing_count(b);
    });
    std::vector<ConditionalModelSpec> specs;
    std::vector<std::string> predictors = base;
    for (std::size_t c : targets) {
        specs.push_back(ConditionalModelSpec{data.schema()[c].name, predictors, true, true});
        predictors.push_back(data.schema()[c].name);
    }
    return specs;
}

}  // namespace fusion
