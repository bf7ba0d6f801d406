// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "fusion/analytic.hpp"
#include "fusion/cli.hpp"
#include "fusion/csv.hpp"
#include "fusion/error.hpp"
#include "fusion/estimands.hpp"
#include "fusion/imputer.hpp"
#include "fusion/normal.hpp"
#include "fusion/parallel.hpp"
#include "fusion/replication.hpp"
#include "fusion/simlab.hpp"

#include <CLI11.hpp>
#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

using namespace fusion;
namespace fs = std::filesystem;

namespace {

Execution g_execution = Execution::Serial;
int g_threads = 1;

// Sub-check collector for one criterion.
class Checks {
public:
    bool expect(bool ok, const std::string& what)
    {
        lines_.push_back(fmt::format("  [{}] {}", ok ? "ok" : "FAIL", what));
        all_ = all_ && ok;
        return ok;
    }
    void note(const std::string& what) { lines_.push_back("  " + what); }
    bool passed() const { return all_; }
    void print() const
    {
        for (const auto& l : lines_) fmt::print("{}\n", l);
    }

private:
    std::vector<std::string> lines_;
    bool all_ = true;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

double rel_err(long double got, long double want)
{
    if (want == 0.0L) return static_cast<double>(std::fabs(got));
    return static_cast<double>(std::fabs((got - want) / want));
}

std::string cover_text(const std::optional<double>& c) { return c ? fmt::format("{:.4f}", *c) : "---"; }

const StudyRow& row_of(const StudyResult& s, const std::string& method, Parameter p)
{
    const auto* r = s.find(method, p);
    if (!r) throw std::runtime_error("missing study row " + method);
    return *r;
}

void print_study(Checks& c, const StudyResult& s)
{
    c.note(fmt::format("{} R={} failed={} truth mu={:.5f} alpha={:.2f} ({:.1f}s)", to_string(s.scenario),
                       s.replications, s.failed, s.truth.mu, s.truth.alpha, s.seconds));
    for (const auto& r : s.rows)
        c.note(fmt::format("  {:<22} {:<5} bias={:+.4f} rmse={:.4f} cover={} meanvar={:.6f} neg={}", r.method,
                           to_string(r.parameter), r.result.bias, r.result.rmse, cover_text(r.result.coverage),
                           r.result.mean_variance, r.negative_variance));
}

// ---------------------------------------------------------------------------
// Shared studies

ScenarioSpec primary_spec()
{
    auto spec = make_scenario(ScenarioId::Primary);
    spec.replications = 500;
    spec.seed = Seed(20241);
    spec.methods.rules = {RuleKind::MI, RuleKind::Syn};
    spec.methods.rules_m = 200;
    spec.methods.jackknife = {{25, 1}, {25, 5}, {25, 50}, {25, 200}};
    spec.methods.bootstrap = {{250, 10, false}};
    return spec;
}

std::optional<StudyResult> g_primary;
std::map<ScenarioId, StudyResult> g_scenarios;

const StudyResult& primary_study()
{
    if (!g_primary) g_primary = run_study(primary_spec(), g_execution);
    return *g_primary;
}

const StudyResult& scenario_study(ScenarioId id)
{
    auto it = g_scenarios.find(id);
    if (it != g_scenarios.end()) return it->second;
    auto spec = make_scenario(id);
    spec.replications = 500;
    spec.seed = Seed(30000 + static_cast<std::uint64_t>(id));
    spec.methods.jackknife = {{25, 50}};
    return g_scenarios.emplace(id, run_study(spec, g_execution)).first->second;
}

// ---------------------------------------------------------------------------
// 1. combining-rule exactness

bool criterion1(Checks& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    Engine e = make_engine(Seed(1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> pick_m(2, 500);
    double worst = 0.0;
    bool flags_ok = true;
    for (int t = 0; t < 1000; ++t) {
        const double w = std::pow(10.0, -4.0 + 5.0 * unit(e));
        const double b = std::pow(10.0, -4.0 + 5.0 * unit(e));
        const int m = pick_m(e);
        const double rho = std::pow(10.0, -1.5 + 3.0 * unit(e));
        const PooledMI p{0.0, w, b, m};
        const long double W = w, B = b, M = m, R = rho;
        const std::pair<RuleKind, long double> expected[] = {
            {RuleKind::MI, (W * M + B * (M + 1)) / M},
            {RuleKind::Syn, (B * (M + 1) - W * M) / M},
            {RuleKind::PPD, W * (R * M + 1 + R) / M},
            {RuleKind::S, W * (R * M + 1) / M},
            {RuleKind::P, (W * M + B) / M},
        };
        for (const auto& [kind, want] : expected) {
            const auto report = combine(p, CombiningRule{kind, rho});
            worst = std::max(worst, rel_err(report.variance, want));
            if (kind == RuleKind::Syn)
                flags_ok = flags_ok && report.negative_variance == (want <= 0) &&
                           report.interval.has_value() == (want > 0);
        }
    }
    const double secs = seconds_since(t0);
    c.expect(worst <= 1e-12, fmt::format("5000 rule evaluations, worst relative error {:.3g} (<= 1e-12)", worst));
    c.expect(flags_ok, "T_syn flagged exactly when non-positive, interval absent when flagged");
    c.expect(secs < 1.0, fmt::format("runtime {:.3f}s < 1s", secs));
    return c.passed();
}

// ---------------------------------------------------------------------------
// 2. pseudovalue identity

bool criterion2(Checks& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    Engine e = make_engine(Seed(2));
    std::uniform_int_distribution<int> pick_g(2, 100);
    std::normal_distribution<double> normal;
    double worst_mean = 0.0, worst_var = 0.0;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> theta(static_cast<std::size_t>(pick_g(e)));
        const double centre = 3.0 * normal(e);
        for (auto& v : theta) v = centre + 0.05 * normal(e);
        const auto pv = pseudovalues(theta);
        const auto jack = jackknife_combine(theta);
        long double sum = 0.0L;
        for (double v : pv) sum += v;
        const long double g = static_cast<long double>(theta.size());
        const long double mean = sum / g;
        long double ss = 0.0L;
        for (double v : pv) ss += (v - mean) * (v - mean);
        worst_mean = std::max(worst_mean, rel_err(mean, jack.estimate));
        worst_var = std::max(worst_var, rel_err(ss / (g - 1) / g, jack.variance));
    }
    const double secs = seconds_since(t0);
    c.expect(worst_mean <= 1e-10,
             fmt::format("mean(pseudovalues) vs jackknife estimate, worst relative error {:.3g}", worst_mean));
    c.note(fmt::format("pseudovalue variance / G vs jackknife variance, worst relative error {:.3g}", worst_var));
    c.expect(secs < 1.0, fmt::format("runtime {:.3f}s < 1s", secs));
    return c.passed();
}

// ---------------------------------------------------------------------------
// 3. primary scenario at R = 500

bool criterion3(Checks& c)
{
    const auto& s = primary_study();
    print_study(c, s);
    const auto& jk50 = row_of(s, jackknife_label(25, 50), Parameter::Alpha).result;
    const auto& boot = row_of(s, bootstrap_label(250, 10, false), Parameter::Alpha).result;
    const auto& jk1 = row_of(s, jackknife_label(25, 1), Parameter::Alpha).result;
    const auto& mi = row_of(s, "T_mi", Parameter::Alpha).result;
    const auto cov = [](const Metrics& m) { return m.coverage.value_or(-1.0); };

    c.expect(s.failed == 0, fmt::format("{} failed replications", s.failed));
    c.expect(std::abs(cov(jk50) - 0.967) <= 0.03, fmt::format("3a jackknife m=50 alpha coverage {:.4f} in 0.967 +- 0.03", cov(jk50)));
    c.expect(std::abs(jk50.bias) <= 0.02, fmt::format("3a jackknife m=50 |bias_alpha| {:.4f} <= 0.02", std::abs(jk50.bias)));
    c.expect(std::abs(jk50.rmse - 0.124) <= 0.02, fmt::format("3a jackknife m=50 rMSE_alpha {:.4f} in 0.124 +- 0.02", jk50.rmse));
    c.expect(std::abs(cov(boot) - 0.9545) <= 0.03, fmt::format("3b bootstrap B=250 m=10 alpha coverage {:.4f} in 0.9545 +- 0.03", cov(boot)));
    c.expect(cov(jk1) >= 0.995, fmt::format("3c jackknife m=1 alpha coverage {:.4f} >= 0.995", cov(jk1)));
    c.expect(cov(mi) >= 0.98, fmt::format("3d T_mi alpha coverage {:.4f} >= 0.98", cov(mi)));
    c.note(fmt::format("study wall time {:.1f}s with {} thread(s)", s.seconds, g_threads));
    c.expect(s.seconds <= 1800.0, "runtime within 30 minutes");
    return c.passed();
}

// ---------------------------------------------------------------------------
// 4. model-misspecification scenarios

bool criterion4(Checks& c)
{
    const auto label = jackknife_label(25, 50);
    const auto alpha = [&](ScenarioId id) -> const Metrics& {
        const auto& s = scenario_study(id);
        print_study(c, s);
        c.expect(s.failed == 0, fmt::format("{}: {} failed replications", to_string(id), s.failed));
        return row_of(s, label, Parameter::Alpha).result;
    };
    const auto& drop = alpha(ScenarioId::DropX3);
    c.expect(std::abs(drop.bias + 0.187) <= 0.04, fmt::format("drop_x3 alpha bias {:+.4f} in -0.187 +- 0.04", drop.bias));
    c.expect(drop.coverage.value_or(1.0) <= 0.75, fmt::format("drop_x3 coverage {} <= 0.75", cover_text(drop.coverage)));
    const auto& none = alpha(ScenarioId::NoCovariates);
    c.expect(std::abs(none.bias - 0.333) <= 0.05, fmt::format("no_covariates alpha bias {:+.4f} in 0.333 +- 0.05", none.bias));
    const auto& diff = alpha(ScenarioId::DifferentConditionals);
    c.expect(std::abs(diff.bias - 0.101) <= 0.04,
             fmt::format("different_conditionals alpha bias {:+.4f} in 0.101 +- 0.04", diff.bias));
    const auto& reduced = alpha(ScenarioId::ReducedOutcomes);
    c.expect(std::abs(reduced.bias) <= 0.02, fmt::format("reduced_outcomes |alpha bias| {:.4f} <= 0.02", std::abs(reduced.bias)));
    c.expect(std::abs(reduced.coverage.value_or(-1.0) - 0.9535) <= 0.03,
             fmt::format("reduced_outcomes coverage {} in 0.9535 +- 0.03", cover_text(reduced.coverage)));
    return c.passed();
}

// ---------------------------------------------------------------------------
// 5. analytic closed forms against Monte Carlo

bool criterion5(Checks& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    for (int ex = 1; ex <= 6; ++ex) {
        const auto params = random_pathway_params(ex, Seed(5000 + static_cast<std::uint64_t>(ex)));
        const auto a = analyze_pathway(params);
        const auto mc = pathway_monte_carlo(params, 100000, Seed(5100 + static_cast<std::uint64_t>(ex)));
        const double z_tilde = (mc.phi1_tilde - a.phi1_tilde) / mc.phi1_tilde_se;
        const double z_phi = (mc.phi1 - a.phi1) / mc.phi1_se;
        c.expect(std::abs(z_tilde) <= 3.0,
                 fmt::format("example {}: Phi1_tilde closed {:.5f} mc {:.5f} (se {:.5f}, z {:+.2f})", ex, a.phi1_tilde,
                             mc.phi1_tilde, mc.phi1_tilde_se, z_tilde));
        c.expect(std::abs(z_phi) <= 3.0, fmt::format("example {}: Phi1 closed {:.5f} mc {:.5f} (se {:.5f}, z {:+.2f})", ex,
                                                     a.phi1, mc.phi1, mc.phi1_se, z_phi));
        if (ex == 6) {
            const double se = std::hypot(mc.phi1_se, mc.phi1_tilde_se);
            const double gap = mc.phi1_tilde - mc.phi1;
            c.expect(std::abs(gap) <= 3.0 * se,
                     fmt::format("example 6: |Phi1_tilde - Phi1| = {:.5f} within 3 se ({:.5f}) of 0", std::abs(gap), 3.0 * se));
            c.expect(a.raw_bias == 0.0, "example 6: closed-form difference is exactly 0");
        }
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 120.0, fmt::format("runtime {:.1f}s < 120s", secs));
    return c.passed();
}

// ---------------------------------------------------------------------------
// 6. truncated-truth oracle

bool criterion6(Checks& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::Matrix4d sigma = Eigen::Matrix4d::Constant(0.5);
    sigma.diagonal().setOnes();
    const Eigen::Matrix4d l = sigma.llt().matrixL();
    std::mt19937_64 engine(6060606);
    std::normal_distribution<double> normal;
    const std::size_t target = 10'000'000;
    std::size_t accepted = 0, drawn = 0;
    long double sum = 0.0L, sum2 = 0.0L;
    while (accepted < target) {
        Eigen::Vector4d z;
        for (int k = 0; k < 4; ++k) z[k] = normal(engine);
        const Eigen::Vector4d x = l * z;
        ++drawn;
        if (x[0] < -0.5) continue;
        const double y = 0.5 * x.sum();  // E[Y | X], the noise term has mean zero
        sum += y;
        sum2 += static_cast<long double>(y) * y;
        ++accepted;
    }
    const double mean = static_cast<double>(sum / accepted);
    const double sd = std::sqrt(static_cast<double>(sum2 / accepted) - mean * mean);
    const double se = sd / std::sqrt(static_cast<double>(accepted));
    const double closed = truth(make_scenario(ScenarioId::Primary)).mu;
    c.note(fmt::format("{} accepted of {} draws (acceptance {:.5f}, expected {:.5f})", accepted, drawn,
                       static_cast<double>(accepted) / drawn, 1.0 - normal_cdf(-0.5)));
    c.expect(std::abs(closed - 0.63645) < 5e-6, fmt::format("closed form mu {:.6f} equals 0.63645", closed));
    c.expect(std::abs(mean - 0.63645) <= 0.001,
             fmt::format("brute-force mu {:.6f} (se {:.6f}) within 0.001 of 0.63645", mean, se));
    c.note(fmt::format("runtime {:.1f}s", seconds_since(t0)));
    return c.passed();
}

// ---------------------------------------------------------------------------
// 7. property suite

FusedDataset simulated(std::uint64_t seed, ScenarioId id = ScenarioId::Primary)
{
    return fuse(generate_pair(make_scenario(id), Seed(seed)));
}

FusedDataset replace_treatment(const FusedDataset& d, const std::vector<double>& z)
{
    std::vector<std::vector<double>> values;
    std::vector<std::vector<std::uint8_t>> missing;
    for (std::size_t c = 0; c < d.cols(); ++c) {
        values.emplace_back(d.column(c).begin(), d.column(c).end());
        missing.emplace_back(d.column_mask(c).begin(), d.column_mask(c).end());
    }
    std::copy(z.begin(), z.end(), values[d.treatment_column()].begin() + static_cast<std::ptrdiff_t>(d.n_out()));
    return FusedDataset::from_columns(d.schema(), std::move(values), std::move(missing),
                                      {d.sources().begin(), d.sources().end()});
}

bool identical(const FusedDataset& a, const FusedDataset& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (std::size_t c = 0; c < a.cols(); ++c)
        for (std::size_t r = 0; r < a.rows(); ++r)
            if (a.missing(r, c) != b.missing(r, c) || !same_bits(a.value(r, c), b.value(r, c))) return false;
    return true;
}

template <class Fn>
bool throws_kind(Fn&& fn, ErrorKind kind)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.kind() == kind;
    }
    return false;
}

void properties_dataset(Checks& c)
{
    bool mask = true, zero = true;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto d = simulated(700 + s, s % 2 ? ScenarioId::ReducedOutcomes : ScenarioId::Primary);
        mask = mask && d.missing_count(d.column_index("Y")) == d.n_int() * d.outcome_columns().size();
        const auto z = d.column(d.treatment_column());
        for (auto r : d.rows_of(SourceTag::OutcomesSource)) zero = zero && z[r] == 0.0 && !d.missing(r, d.treatment_column());
    }
    c.expect(mask, "missing outcome cells == n_int x outcome columns on 50 fused files");
    c.expect(zero, "treatment is 0 and observed on every outcomes-source row");

    // order stability
    const auto pair = generate_pair(make_scenario(ScenarioId::Primary), Seed(710));
    const auto base = fuse(pair);
    std::vector<std::size_t> perm(pair.outcomes.rows());
    std::iota(perm.begin(), perm.end(), 0);
    Engine e = make_engine(Seed(711));
    std::shuffle(perm.begin(), perm.end(), e);
    Table shuffled;
    for (const auto& col : pair.outcomes.columns) {
        std::vector<std::optional<double>> cells;
        for (auto i : perm) cells.push_back(col.cells[i]);
        shuffled.add(col.name, std::move(cells));
    }
    const auto moved = concatenate(shuffled, pair.intervention, simulation_schema());
    bool stable = moved.rows() == base.rows();
    for (std::size_t i = 0; stable && i < perm.size(); ++i)
        for (std::size_t c2 = 0; c2 < base.cols(); ++c2)
            stable = stable && same_bits(moved.value(i, c2), base.value(perm[i], c2));
    for (std::size_t r = base.n_out(); stable && r < base.rows(); ++r)
        for (std::size_t c2 = 0; c2 < base.cols(); ++c2)
            stable = stable && same_bits(moved.value(r, c2), base.value(r, c2)) && moved.missing(r, c2) == base.missing(r, c2);
    c.expect(stable, "concatenate is order-stable within the outcomes block");

    // filter composition
    bool composed = true;
    std::uniform_real_distribution<double> cut(-1.5, 1.5);
    for (int t = 0; t < 20; ++t) {
        const RowFilter p{{{"X1", CompareOp::GreaterEqual, cut(e), std::nullopt}}};
        const RowFilter q{{{"X2", CompareOp::Less, cut(e) + 1.0, SourceTag::InterventionSource}}};
        const auto twice = filter_rows(filter_rows(base, p), q);
        const auto once = filter_rows(base, p && q);
        composed = composed && identical(twice, once);
    }
    c.expect(composed, "filter(filter(d, p), q) == filter(d, p && q) for 20 random predicate pairs");
}

void properties_imputer(Checks& c)
{
    bool bits = true, range = true, excluded = true;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto d = simulated(800 + s);
        const auto specs = default_specs(d);
        for (const auto& sp : specs) {
            excluded = excluded && sp.target != "Z";
            excluded = excluded && std::find(sp.predictors.begin(), sp.predictors.end(), "Z") == sp.predictors.end();
        }
        const auto model = fit(d, specs);
        const auto done = impute_once(d, model, Seed(s));
        const auto y = d.column_index("Y");
        const auto& t = *model.conditionals()[0].transform;
        for (std::size_t r = 0; r < d.rows(); ++r) {
            for (std::size_t col = 0; col < d.cols(); ++col)
                if (!d.missing(r, col)) bits = bits && same_bits(d.value(r, col), done.value(r, col));
            if (d.missing(r, y)) range = range && done.value(r, y) >= t.min() && done.value(r, y) <= t.max();
        }
        // the imputations cannot see Z: a flipped treatment leaves them unchanged
        std::vector<double> flipped;
        const auto z = d.column(d.treatment_column());
        for (auto r : d.rows_of(SourceTag::InterventionSource)) flipped.push_back(1.0 - z[r]);
        const auto other = replace_treatment(d, flipped);
        const auto done_other = impute_once(other, fit(other, specs), Seed(s));
        for (auto r : d.rows_of(SourceTag::InterventionSource))
            excluded = excluded && same_bits(done.value(r, y), done_other.value(r, y));
    }
    const auto d = simulated(820);
    const std::vector<ConditionalModelSpec> with_z{{"Y", {"X1", "Z"}, true, true}};
    const std::vector<ConditionalModelSpec> z_target{{"Z", {"X1"}, true, true}};
    excluded = excluded && throws_kind([&] { fit(d, with_z); }, ErrorKind::Config) &&
               throws_kind([&] { fit(d, z_target); }, ErrorKind::Config);
    c.expect(excluded, "treatment never enters an imputation model; flipping Z leaves every imputed value unchanged");
    c.expect(bits, "observed cells bit-identical after imputation (20 files)");
    c.expect(range, "imputed continuous values lie within the observed [min, max]");

    // between-imputation spread of alpha-hat over m = 200, averaged over 10 replications
    std::vector<double> spread;
    for (std::size_t n_out : {250u, 1000u, 4000u}) {
        auto spec = make_scenario(ScenarioId::Primary);
        spec.n_out = n_out;
        double total = 0.0;
        for (std::uint64_t r = 0; r < 10; ++r) {
            const auto data = fuse(generate_pair(spec, Seed(830 + r)));
            const std::vector<RuleKind> rules{RuleKind::MI};
            ReplicationOptions opt;
            opt.execution = g_execution;
            total += combining_rules(data, imputation_specs(spec), 200, Seed(840 + r), rules, std::nullopt, opt).alpha.between;
        }
        spread.push_back(total / 10.0);
    }
    c.expect(spread[0] > 0.0 && spread[0] > spread[1] && spread[1] > spread[2],
             fmt::format("B_m(alpha) shrinks over n_out 250/1000/4000: {:.6f} > {:.6f} > {:.6f}", spread[0], spread[1], spread[2]));
}

void properties_estimands(Checks& c)
{
    Engine e = make_engine(Seed(900));
    std::normal_distribution<double> normal;
    bool exact = true, shift = true, ignore = true;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto d = simulated(900 + s);
        const auto y = d.column_index("Y");
        const auto rows = d.rows_of(SourceTag::InterventionSource);
        const auto z = d.column(d.treatment_column());
        std::vector<double> v(rows.size());
        for (auto& x : v) x = 1.0 + normal(e);
        const auto full = d.with_cells(y, rows, v);
        long double sum[2] = {0, 0}, n[2] = {0, 0};
        for (std::size_t i = 0; i < rows.size(); ++i) {
            sum[z[rows[i]] != 0.0] += v[i];
            n[z[rows[i]] != 0.0] += 1;
        }
        const auto est = estimate_effect(full);
        exact = exact && rel_err(est.mu_hat, sum[0] / n[0]) <= 1e-10 &&
                rel_err(est.alpha_hat, sum[1] / n[1] - sum[0] / n[0]) <= 1e-10;

        auto shifted = v, scaled = v;
        for (auto& x : shifted) x += 2.5;
        for (auto& x : scaled) x *= 3.0;
        const auto a = estimate_effect(d.with_cells(y, rows, shifted));
        const auto b = estimate_effect(d.with_cells(y, rows, scaled));
        shift = shift && std::abs(a.mu_hat - est.mu_hat - 2.5) <= 1e-10 && rel_err(a.alpha_hat, est.alpha_hat) <= 1e-9 &&
                rel_err(b.alpha_hat, 3.0 * est.alpha_hat) <= 1e-10 && rel_err(b.mu_hat, 3.0 * est.mu_hat) <= 1e-10 &&
                rel_err(b.var_alpha, 9.0 * est.var_alpha) <= 1e-10 && rel_err(b.var_mu, 9.0 * est.var_mu) <= 1e-10;

        const auto out_rows = d.rows_of(SourceTag::OutcomesSource);
        const auto perturbed = full.with_cells(y, out_rows, std::vector<double>(out_rows.size(), -99.0));
        const auto p = estimate_effect(perturbed);
        ignore = ignore && same_bits(p.alpha_hat, est.alpha_hat) && same_bits(p.var_alpha, est.var_alpha);
    }
    c.expect(exact, "alpha-hat is the arm-mean difference and mu-hat the control mean (1e-10 relative)");
    c.expect(shift, "shift by c moves mu-hat only; scale by k scales estimates by k and variances by k^2");
    c.expect(ignore, "perturbing outcomes-source Y leaves the estimate bit-identical");
}

void properties_replication(Checks& c)
{
    const auto& s = primary_study();
    for (Parameter p : {Parameter::Alpha, Parameter::Mu}) {
        const double v5 = row_of(s, jackknife_label(25, 5), p).result.mean_variance;
        const double v50 = row_of(s, jackknife_label(25, 50), p).result.mean_variance;
        const double v200 = row_of(s, jackknife_label(25, 200), p).result.mean_variance;
        c.expect(v5 > v50 && v50 > v200,
                 fmt::format("mean jackknife variance of {} over {} replications: m=5 {:.6f} > m=50 {:.6f} > m=200 {:.6f}",
                             to_string(p), s.replications, v5, v50, v200));
    }

    auto boot = make_scenario(ScenarioId::Primary);
    boot.replications = 200;
    boot.seed = Seed(910);
    boot.methods.bootstrap = {{100, 1, false}, {100, 25, false}};
    const auto bs = run_study(boot, g_execution);
    for (Parameter p : {Parameter::Alpha, Parameter::Mu}) {
        const double v1 = row_of(bs, bootstrap_label(100, 1, false), p).result.mean_variance;
        const double v25 = row_of(bs, bootstrap_label(100, 25, false), p).result.mean_variance;
        c.expect(v1 - v25 > 0.0, fmt::format("bootstrap excess variance of {}: m=1 {:.6f} - m=25 {:.6f} = {:+.6f} > 0",
                                             to_string(p), v1, v25, v1 - v25));
    }

    // determinism independent of thread count
    const auto d = simulated(920);
    const auto specs = imputation_specs(make_scenario(ScenarioId::Primary));
    ReplicationOptions serial, parallel;
    parallel.execution = Execution::Parallel;
    set_thread_count(4);
    const auto j1 = jackknife(d, specs, 25, 5, Seed(921), serial);
    const auto j2 = jackknife(d, specs, 25, 5, Seed(921), parallel);
    const auto b1 = bootstrap(d, specs, 20, 3, Seed(922), serial);
    const auto b2 = bootstrap(d, specs, 20, 3, Seed(922), parallel);
    set_thread_count(g_threads);
    bool same = true;
    for (std::size_t g = 0; g < j1.replicates.size(); ++g)
        same = same && same_bits(j1.replicates.alpha[g], j2.replicates.alpha[g]) &&
               same_bits(j1.replicates.mu[g], j2.replicates.mu[g]);
    for (std::size_t g = 0; g < b1.replicates.size(); ++g)
        same = same && same_bits(b1.replicates.alpha[g], b2.replicates.alpha[g]);
    same = same && same_bits(j1.alpha.variance, j2.alpha.variance) && same_bits(b1.alpha.variance, b2.alpha.variance);
    c.expect(same, "jackknife (G=25, m=5) and bootstrap (B=20, m=3) bit-identical serial vs 4 threads");

    // negative synthetic variance
    const auto& syn = row_of(s, "T_syn", Parameter::Alpha);
    const auto flagged = combine(PooledMI{0.5, 1.0, 0.2, 10}, CombiningRule{RuleKind::Syn, std::nullopt});
    c.expect(flagged.negative_variance && !flagged.interval,
             "T_syn with (1 + 1/m)B <= W is flagged and reported without an interval");
    c.expect(syn.negative_variance == 0 || !syn.result.coverage.has_value(),
             fmt::format("primary study: T_syn flagged in {} of {} replications, coverage {}", syn.negative_variance,
                         syn.used, cover_text(syn.result.coverage)));
}

void properties_analytic(Checks& c)
{
    bool ex1 = true, ex6 = true, portion = true;
    for (int k = 0; k < 100; ++k) {
        const auto p1 = random_pathway_params(1, Seed(1000).derive(k));
        const auto a1 = analyze_pathway(p1);
        ex1 = ex1 && std::abs((a1.phi1 - a1.phi1_tilde) - p1.at("theta1")) <= 1e-15 * (1.0 + std::abs(a1.phi1));
        const auto a6 = analyze_pathway(random_pathway_params(6, Seed(1100).derive(k)));
        ex6 = ex6 && a6.phi1 == a6.phi1_tilde;
        for (int ex = 1; ex <= 6; ++ex) {
            const auto a = analyze_pathway(random_pathway_params(ex, Seed(1200).derive(static_cast<std::uint64_t>(k)).derive(static_cast<std::uint64_t>(ex))));
            if (std::isfinite(a.scaled_bias)) portion = portion && a.portion == 1.0 + a.scaled_bias;
        }
    }
    c.expect(ex1, "example 1: the fused estimand misses the true effect by exactly theta1 (100 draws)");
    c.expect(ex6, "example 6: Phi1_tilde == Phi1 exactly (100 draws)");
    c.expect(portion, "portion == 1 + scaled bias whenever finite");

    const auto ex2 = [](double s2x) {
        return PathwayParams{2, {{"alpha0", 0.1}, {"beta0", 0.2}, {"beta1", 0.8}, {"beta2", 0.6}, {"gamma0", 0.0},
                                 {"gamma1", 0.7}, {"gamma2", 0.5}, {"sigma2_u", 1.0}, {"sigma2_x", s2x}, {"sigma2_y", 1.0}}};
    };
    const double b1 = std::abs(analyze_pathway(ex2(1.0)).raw_bias);
    const double b2 = std::abs(analyze_pathway(ex2(1e2)).raw_bias);
    const double b4 = std::abs(analyze_pathway(ex2(1e4)).raw_bias);
    c.expect(b1 > b2 && b2 > b4, fmt::format("example 2: |bias| at sigma2_x 1, 1e2, 1e4: {:.3g} > {:.3g} > {:.3g}", b1, b2, b4));

    const auto ex5 = [](double gamma3) {
        return PathwayParams{5, {{"alpha0", 0.0}, {"beta0", 0.0}, {"beta1", 0.9}, {"beta2", 0.5}, {"gamma0", 0.0},
                                 {"gamma1", 0.6}, {"gamma2", 0.2}, {"gamma3", gamma3}, {"sigma2_u", 1.0},
                                 {"sigma2_x", 1.0}, {"sigma2_y", 1.0}}};
    };
    const double c1 = *analyze_pathway(ex5(0.0)).constant;
    c.expect(analyze_pathway(ex5(0.5 * c1)).raw_bias == 0.0, "example 5: gamma3 = beta2 c1 gives zero bias");
    const auto paradox = analyze_pathway(ex5(-0.3));
    c.expect(paradox.phi1 < 0.0 && paradox.phi1_tilde > 0.0,
             fmt::format("example 5 surrogate paradox: Phi1 {:+.4f} < 0 while Phi1_tilde {:+.4f} > 0", paradox.phi1,
                         paradox.phi1_tilde));
}

void properties_simlab(Checks& c, const std::vector<const StudyResult*>& studies)
{
    bool decomposition = true, coverage_range = true;
    for (const auto* s : studies)
        for (const auto& r : s->rows) {
            decomposition = decomposition && r.result.rmse * r.result.rmse >= r.result.bias * r.result.bias * (1.0 - 1e-12);
            if (r.result.coverage) coverage_range = coverage_range && *r.result.coverage >= 0.0 && *r.result.coverage <= 1.0;
        }
    c.expect(decomposition, fmt::format("rMSE^2 >= bias^2 on every row of {} studies", studies.size()));
    c.expect(coverage_range, "coverage within [0, 1]");

    const auto& s = primary_study();
    const auto& mi = row_of(s, "T_mi", Parameter::Alpha).result;
    const double bound = 3.0 * mi.rmse / std::sqrt(static_cast<double>(s.replications));
    c.expect(std::abs(mi.bias) <= bound, fmt::format("primary point estimator unbiased: |bias| {:.4f} <= 3 rMSE/sqrt(R) = {:.4f}",
                                                     std::abs(mi.bias), bound));
    const double c1 = row_of(s, jackknife_label(25, 1), Parameter::Alpha).result.coverage.value_or(-1);
    const double c50 = row_of(s, jackknife_label(25, 50), Parameter::Alpha).result.coverage.value_or(-1);
    const double c200 = row_of(s, jackknife_label(25, 200), Parameter::Alpha).result.coverage.value_or(-1);
    c.expect(c1 > c50 && c50 > c200,
             fmt::format("jackknife coverage ordering m=1 {:.4f} > m=50 {:.4f} > m=200 {:.4f}", c1, c50, c200));
    c.expect(mi.coverage.value_or(0) > 0.98, fmt::format("T_mi coverage {} > 0.98", cover_text(mi.coverage)));

    auto small = make_scenario(ScenarioId::Primary);
    small.replications = 12;
    small.seed = Seed(930);
    small.methods.rules = {RuleKind::MI};
    small.methods.rules_m = 10;
    small.methods.jackknife = {{5, 2}};
    set_thread_count(4);
    const auto a = run_study(small, Execution::Serial);
    const auto b = run_study(small, Execution::Parallel);
    set_thread_count(g_threads);
    bool same = a.rows.size() == b.rows.size();
    for (std::size_t k = 0; same && k < a.rows.size(); ++k)
        same = same_bits(a.rows[k].result.bias, b.rows[k].result.bias) &&
               same_bits(a.rows[k].result.rmse, b.rows[k].result.rmse) &&
               a.rows[k].result.coverage == b.rows[k].result.coverage;
    c.expect(same, "identical master seed gives an identical study, serial vs 4 threads");

    c.expect(throws_kind([] { cli::make_config(cli::Json::object(), cli::Mode::Fuse); }, ErrorKind::Config),
             "a run without a seed is rejected");
}

bool criterion7(Checks& c)
{
    const auto& primary = primary_study();  // shared with criterion 3, not timed here
    const auto t0 = std::chrono::steady_clock::now();
    properties_dataset(c);
    properties_imputer(c);
    properties_estimands(c);
    properties_replication(c);
    properties_analytic(c);
    std::vector<const StudyResult*> studies{&primary};
    for (const auto& [id, s] : g_scenarios) studies.push_back(&s);
    properties_simlab(c, studies);
    const double secs = seconds_since(t0);
    c.expect(secs < 300.0, fmt::format("runtime {:.1f}s < 300s (excluding the shared primary study)", secs));
    return c.passed();
}

// ---------------------------------------------------------------------------
// 8. fuse-mode CLI: synthetic CSV round trips and golden-file stability

struct Invocation {
    int code = 0;
    std::string out;
    std::string err;
};

Invocation invoke(std::vector<std::string> args)
{
    args.insert(args.begin(), "fusion");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool criterion8(Checks& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = fs::temp_directory_path() / fmt::format("fusion_acceptance_{}", ::getpid());
    fs::remove_all(dir);
    fs::create_directories(dir);

    cli::Json config = cli::Json::parse(R"({
      "mode": "fuse",
      "inputs": {"outcomes": "outcomes.csv", "intervention": "intervention.csv"},
      "schema": [
        {"name": "Z", "role": "treatment", "kind": "binary"},
        {"name": "X1", "role": "intermediate"}, {"name": "X2", "role": "intermediate"},
        {"name": "X3", "role": "intermediate"}, {"name": "X4", "role": "intermediate"},
        {"name": "Y", "role": "outcome"}
      ],
      "imputation": [{"target": "Y", "predictors": ["X1", "X2", "X3", "X4"]}],
      "methods": {"jackknife": [{"groups": 25, "m": 50}]}
    })");
    std::ofstream(dir / "fuse.json") << config.dump(2);

    const std::string label = jackknife_label(25, 50);
    const auto specs = imputation_specs(make_scenario(ScenarioId::Primary));
    int covered = 0, exits_ok = 0, matches = 0;
    const int rounds = 100;
    for (int k = 0; k < rounds; ++k) {
        const std::uint64_t seed = 8000 + static_cast<std::uint64_t>(k);
        const auto pair = generate_pair(make_scenario(ScenarioId::Primary), Seed(seed));
        write_csv((dir / "outcomes.csv").string(), pair.outcomes);
        write_csv((dir / "intervention.csv").string(), pair.intervention);
        const auto report_path = (dir / "report.txt").string();
        const auto r = invoke({"fuse", "--config", (dir / "fuse.json").string(), "--seed", std::to_string(seed),
                               "--threads", std::to_string(g_threads), "--out", report_path});
        if (r.code != 0) {
            c.note(fmt::format("round {}: exit {} {}", k, r.code, r.err));
            continue;
        }
        ++exits_ok;
        std::istringstream lines(slurp(report_path));
        std::string line;
        std::optional<cli::Json> alpha;
        while (std::getline(lines, line) && line != "--- table ---") {
            auto rec = cli::Json::parse(line);
            if (rec["record"] == "estimate" && rec["parameter"] == "alpha" && rec["method"] == label) alpha = rec;
        }
        if (!alpha) continue;
        const double lo = (*alpha)["ci_lower"].get<double>();
        const double hi = (*alpha)["ci_upper"].get<double>();
        covered += lo <= 0.5 && 0.5 <= hi;

        // the CSV trip must not perturb a single bit of the estimate
        ReplicationOptions opt;
        opt.execution = g_execution;
        const auto direct = jackknife(fuse(pair), specs, 25, 50, Seed(seed).derive(label), opt);
        matches += same_bits(direct.alpha.estimate, (*alpha)["estimate"].get<double>()) &&
                   same_bits(direct.alpha.variance, (*alpha)["variance"].get<double>());
    }
    set_thread_count(g_threads);
    fs::remove_all(dir);

    const double coverage = static_cast<double>(covered) / rounds;
    c.expect(exits_ok == rounds, fmt::format("{} of {} fuse runs exited 0", exits_ok, rounds));
    c.expect(matches == rounds, fmt::format("{} of {} reported estimates bit-identical to the in-memory pipeline", matches, rounds));
    c.expect(coverage >= 0.90, fmt::format("jackknife G=25 m=50 alpha intervals cover 0.5 in {:.2f} of rounds (>= 0.90)", coverage));

    const std::string golden = FUSION_GOLDEN_DIR;
    const auto expected = slurp(golden + "/fuse_report.txt");
    bool stable = !expected.empty();
    for (const char* threads : {"1", "2", "4"}) {
        const auto r = invoke({"fuse", "--config", golden + "/fuse.json", "--threads", threads});
        stable = stable && r.code == 0 && r.out == expected;
    }
    set_thread_count(g_threads);
    c.expect(stable, "golden fuse report reproduced byte for byte with 1, 2 and 4 threads");
    c.note(fmt::format("runtime {:.1f}s", seconds_since(t0)));
    return c.passed();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance suite"};
    std::vector<int> only;
    g_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    app.add_option("--only", only, "Run only these criteria (1-8)")->delimiter(',')->check(CLI::Range(1, 8));
    app.add_option("--threads", g_threads, "Worker threads")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    set_thread_count(g_threads);
    g_execution = g_threads > 1 ? Execution::Parallel : Execution::Serial;
    fmt::print("acceptance suite, {} thread(s)\n", g_threads);

    const std::vector<std::pair<int, std::function<bool(Checks&)>>> criteria = {
        {1, criterion1}, {2, criterion2}, {6, criterion6}, {5, criterion5},
        {3, criterion3}, {4, criterion4}, {7, criterion7}, {8, criterion8},
    };
    std::map<int, bool> results;
    for (const auto& [id, fn] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Checks checks;
        const auto t0 = std::chrono::steady_clock::now();
        bool ok = false;
        try {
            ok = fn(checks);
        } catch (const std::exception& e) {
            checks.expect(false, fmt::format("exception: {}", e.what()));
        }
        checks.print();
        fmt::print("criterion {}: {} ({:.1f}s)\n", id, ok ? "PASS" : "FAIL", seconds_since(t0));
        std::fflush(stdout);
        results[id] = ok;
    }
    int failed = 0;
    for (const auto& [id, ok] : results) failed += !ok;
    fmt::print("summary: {} passed, {} failed\n", results.size() - static_cast<std::size_t>(failed), failed);
    return failed == 0 ? 0 : 1;
}
