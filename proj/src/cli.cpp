#include "fusion/cli.hpp"

#include "fusion/analytic.hpp"
#include "fusion/csv.hpp"
#include "fusion/dataset.hpp"
#include "fusion/error.hpp"
#include "fusion/imputer.hpp"
#include "fusion/parallel.hpp"
#include "fusion/replication.hpp"
#include "fusion/simlab.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fusion::cli {

namespace {

constexpr const char* kVersion = "1.0.0";

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorKind::Config, message); }

void reject_unknown(const Json& object, std::initializer_list<std::string_view> allowed, std::string_view where)
{
    for (const auto& [key, value] : object.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) config_error(fmt::format("{}: unknown key '{}'", where, key));
    }
}

const Json& require(const Json& object, const char* key, std::string_view where)
{
    if (!object.is_object() || !object.contains(key))
        config_error(fmt::format("{}: missing required key '{}'", where, key));
    return object.at(key);
}

template <class T>
T as(const Json& value, std::string_view what)
{
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!value.is_number()) throw std::runtime_error("not a number");
        } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!value.is_number_integer()) throw std::runtime_error("not an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (value.is_number_integer() && !value.is_number_unsigned() && value.get<long long>() < 0)
                    throw std::runtime_error("negative");
            }
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!value.is_boolean()) throw std::runtime_error("not a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!value.is_string()) throw std::runtime_error("not a string");
        }
        return value.get<T>();
    } catch (const std::exception& e) {
        config_error(fmt::format("{}: expected {}, got {}", what,
                                 std::is_same_v<T, std::string> ? "a string" : "a number or flag", value.dump()));
    }
}

template <class T>
T get_or(const Json& object, const char* key, T fallback, std::string_view where)
{
    if (!object.contains(key)) return fallback;
    return as<T>(object.at(key), fmt::format("{}.{}", where, key));
}

// ---------------------------------------------------------------------------
// Record writer

void write_value(std::string& out, const Json& v)
{
    switch (v.type()) {
    case Json::value_t::object: {
        out.push_back('{');
        bool first = true;
        for (const auto& [key, item] : v.items()) {
            if (!first) out.push_back(',');
            first = false;
            out += Json(key).dump();
            out.push_back(':');
            write_value(out, item);
        }
        out.push_back('}');
        break;
    }
    case Json::value_t::array: {
        out.push_back('[');
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out.push_back(',');
            write_value(out, v[i]);
        }
        out.push_back(']');
        break;
    }
    case Json::value_t::number_float: {
        const double d = v.get<double>();
        if (std::isnan(d)) out += "\"nan\"";
        else if (std::isinf(d)) out += d > 0 ? "\"inf\"" : "\"-inf\"";
        else out += fmt::format("{:.17g}", d);
        break;
    }
    default: out += v.dump(); break;
    }
}

std::string fixed4(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    const auto s = fmt::format("{:.4f}", v);
    return s == "-0.0000" ? "0.0000" : s;
}

std::string fixed4(const std::optional<double>& v) { return v ? fixed4(*v) : "---"; }

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

// ---------------------------------------------------------------------------
// Shared config pieces

Execution execution_for(const RunConfig& config)
{
    set_thread_count(config.threads);
    return config.threads > 1 ? Execution::Parallel : Execution::Serial;
}

double gamma_of(const Json& doc)
{
    const double gamma = get_or<double>(doc, "gamma", 0.05, "config");
    if (!(gamma > 0.0 && gamma < 1.0)) config_error(fmt::format("config.gamma must lie in (0, 1), got {}", gamma));
    return gamma;
}

Json run_record(const RunConfig& config)
{
    Json echo = config.document;
    echo.erase("threads");  // parallelism never changes the results
    echo["seed"] = config.seed;
    Json rec;
    rec["record"] = "run";
    rec["mode"] = to_string(config.mode);
    rec["version"] = kVersion;
    rec["seed"] = config.seed;
    rec["config"] = std::move(echo);
    return rec;
}

MethodConfig parse_methods(const Json& doc, std::string_view where)
{
    MethodConfig methods;
    if (!doc.contains("methods")) return methods;
    const Json& m = doc.at("methods");
    if (!m.is_object()) config_error(fmt::format("{}.methods must be an object", where));
    reject_unknown(m, {"rules", "jackknife", "bootstrap"}, fmt::format("{}.methods", where));

    if (m.contains("rules")) {
        const Json& r = m.at("rules");
        reject_unknown(r, {"names", "m", "rho"}, "methods.rules");
        const Json& names = require(r, "names", "methods.rules");
        if (!names.is_array() || names.empty()) config_error("methods.rules.names must be a non-empty list");
        for (const auto& n : names) {
            const auto text = as<std::string>(n, "methods.rules.names[]");
            const auto kind = parse_rule(text);
            if (!kind) config_error(fmt::format("unknown combining rule '{}' (T_mi, T_syn, T_PPD, T_s, T_p)", text));
            methods.rules.push_back(*kind);
        }
        methods.rules_m = as<int>(require(r, "m", "methods.rules"), "methods.rules.m");
        if (r.contains("rho") && !r.at("rho").is_null()) methods.rho = as<double>(r.at("rho"), "methods.rules.rho");
    }
    if (m.contains("jackknife")) {
        for (const auto& j : m.at("jackknife")) {
            reject_unknown(j, {"groups", "m"}, "methods.jackknife[]");
            methods.jackknife.push_back({as<int>(require(j, "groups", "methods.jackknife[]"), "groups"),
                                         as<int>(require(j, "m", "methods.jackknife[]"), "m")});
        }
    }
    if (m.contains("bootstrap")) {
        for (const auto& b : m.at("bootstrap")) {
            reject_unknown(b, {"resamples", "m", "stratified"}, "methods.bootstrap[]");
            methods.bootstrap.push_back({as<int>(require(b, "resamples", "methods.bootstrap[]"), "resamples"),
                                         as<int>(require(b, "m", "methods.bootstrap[]"), "m"),
                                         get_or<bool>(b, "stratified", false, "methods.bootstrap[]")});
        }
    }
    return methods;
}

PathwayParams parse_pathway_params(const Json& block, std::string_view where)
{
    PathwayParams params;
    params.example = as<int>(require(block, "example", where), fmt::format("{}.example", where));
    const Json& values = require(block, "params", where);
    if (!values.is_object()) config_error(fmt::format("{}.params must be an object", where));
    for (const auto& [name, value] : values.items())
        params.values[name] = as<double>(value, fmt::format("{}.params.{}", where, name));
    validate(params);
    return params;
}

Json analysis_record(const PathwayAnalysis& a)
{
    Json rec;
    rec["record"] = "pathway";
    rec["example"] = a.example;
    rec["phi1"] = a.phi1;
    rec["phi1_tilde"] = a.phi1_tilde;
    rec["raw_bias"] = a.raw_bias;
    rec["scaled_bias"] = a.scaled_bias;
    rec["portion"] = a.portion;
    rec["infinite"] = a.infinite;
    if (a.constant) rec[*a.constant_name] = *a.constant;
    return rec;
}

Json monte_carlo_record(const PathwayMonteCarlo& mc, const PathwayAnalysis& a)
{
    Json rec;
    rec["record"] = "monte_carlo";
    rec["n"] = mc.n;
    rec["phi1_tilde"] = mc.phi1_tilde;
    rec["phi1_tilde_se"] = mc.phi1_tilde_se;
    rec["phi1"] = mc.phi1;
    rec["phi1_se"] = mc.phi1_se;
    rec["z_phi1_tilde"] = (mc.phi1_tilde - a.phi1_tilde) / mc.phi1_tilde_se;
    rec["z_phi1"] = (mc.phi1 - a.phi1) / mc.phi1_se;
    return rec;
}

void pathway_table(Report& report, const PathwayAnalysis& a, const std::optional<PathwayMonteCarlo>& mc)
{
    report.set_header({"quantity", "closed form", "monte carlo", "mc s.e."});
    const auto mc_cell = [&mc](double PathwayMonteCarlo::*field) { return mc ? fixed4((*mc).*field) : std::string("---"); };
    report.add_row({"Phi1", fixed4(a.phi1), mc_cell(&PathwayMonteCarlo::phi1), mc_cell(&PathwayMonteCarlo::phi1_se)});
    report.add_row({"Phi1_tilde", fixed4(a.phi1_tilde), mc_cell(&PathwayMonteCarlo::phi1_tilde),
                    mc_cell(&PathwayMonteCarlo::phi1_tilde_se)});
    report.add_row({"raw bias", fixed4(a.raw_bias), mc ? fixed4(mc->phi1_tilde - mc->phi1) : "---", "---"});
    report.add_row({"scaled bias", fixed4(a.scaled_bias), "---", "---"});
    report.add_row({"portion", fixed4(a.portion), "---", "---"});
    if (a.constant) report.add_row({*a.constant_name, fixed4(*a.constant), "---", "---"});
}

// ---------------------------------------------------------------------------
// Fuse helpers

VariableRole parse_role(const std::string& s)
{
    for (auto r : {VariableRole::Treatment, VariableRole::Covariate, VariableRole::Intermediate, VariableRole::Outcome})
        if (s == to_string(r)) return r;
    throw Error(ErrorKind::Schema, fmt::format("unknown role '{}'", s));
}

ColumnKind parse_kind(const std::string& s)
{
    for (auto k : {ColumnKind::Continuous, ColumnKind::Binary, ColumnKind::OrderedCategorical})
        if (s == to_string(k)) return k;
    throw Error(ErrorKind::Schema, fmt::format("unknown kind '{}'", s));
}

std::vector<ColumnSchema> parse_schema(const Json& doc)
{
    const Json& list = require(doc, "schema", "config");
    if (!list.is_array() || list.empty()) throw Error(ErrorKind::Schema, "config.schema must be a non-empty list");
    std::vector<ColumnSchema> schema;
    for (const auto& c : list) {
        reject_unknown(c, {"name", "role", "kind", "levels"}, "schema[]");
        ColumnSchema col;
        col.name = as<std::string>(require(c, "name", "schema[]"), "schema[].name");
        col.role = parse_role(as<std::string>(require(c, "role", "schema[]"), "schema[].role"));
        col.kind = parse_kind(get_or<std::string>(c, "kind", "continuous", "schema[]"));
        col.levels = get_or<int>(c, "levels", 2, "schema[]");
        schema.push_back(std::move(col));
    }
    validate_schema(schema);
    return schema;
}

std::string resolve(const RunConfig& config, const std::string& path)
{
    const std::filesystem::path p(path);
    return p.is_absolute() ? path : (std::filesystem::path(config.base_dir) / p).string();
}

RowFilter parse_filters(const Json& doc)
{
    RowFilter filter;
    if (!doc.contains("filters")) return filter;
    for (const auto& f : doc.at("filters")) {
        reject_unknown(f, {"column", "op", "value", "source"}, "filters[]");
        FilterClause clause;
        clause.column = as<std::string>(require(f, "column", "filters[]"), "filters[].column");
        const auto op_text = as<std::string>(require(f, "op", "filters[]"), "filters[].op");
        const auto op = parse_compare_op(op_text);
        if (!op) config_error(fmt::format("filters[]: unknown operator '{}'", op_text));
        clause.op = *op;
        clause.value = as<double>(require(f, "value", "filters[]"), "filters[].value");
        if (f.contains("source")) {
            const auto s = as<std::string>(f.at("source"), "filters[].source");
            if (s == "outcomes") clause.scope = SourceTag::OutcomesSource;
            else if (s == "intervention") clause.scope = SourceTag::InterventionSource;
            else config_error(fmt::format("filters[].source must be 'outcomes' or 'intervention', got '{}'", s));
        }
        filter.clauses.push_back(std::move(clause));
    }
    return filter;
}

std::vector<ConditionalModelSpec> parse_imputation(const Json& doc, const FusedDataset& data)
{
    if (!doc.contains("imputation")) return default_specs(data);
    std::vector<ConditionalModelSpec> specs;
    for (const auto& s : doc.at("imputation")) {
        reject_unknown(s, {"target", "predictors", "intercept", "empirical_transform"}, "imputation[]");
        ConditionalModelSpec spec;
        spec.target = as<std::string>(require(s, "target", "imputation[]"), "imputation[].target");
        for (const auto& p : require(s, "predictors", "imputation[]"))
            spec.predictors.push_back(as<std::string>(p, "imputation[].predictors[]"));
        spec.intercept = get_or<bool>(s, "intercept", true, "imputation[]");
        spec.empirical_transform = get_or<bool>(s, "empirical_transform", true, "imputation[]");
        specs.push_back(std::move(spec));
    }
    return specs;
}

Json estimate_record(const VarianceReport& r)
{
    Json rec;
    rec["record"] = "estimate";
    rec["method"] = r.method;
    rec["parameter"] = to_string(r.parameter);
    rec["estimate"] = r.estimate;
    rec["variance"] = r.variance;
    rec["ci_lower"] = r.interval ? Json(r.interval->lower) : Json(nullptr);
    rec["ci_upper"] = r.interval ? Json(r.interval->upper) : Json(nullptr);
    rec["negative_variance"] = r.negative_variance;
    return rec;
}

void estimate_row(Report& report, const VarianceReport& r)
{
    const bool ok = !r.negative_variance;
    report.add_row({r.method, to_string(r.parameter), fixed4(r.estimate), ok ? fixed4(std::sqrt(r.variance)) : "---",
                    r.interval ? fixed4(r.interval->lower) : "---", r.interval ? fixed4(r.interval->upper) : "---"});
}

}  // namespace

const char* to_string(Mode mode) noexcept
{
    switch (mode) {
    case Mode::Fuse: return "fuse";
    case Mode::Simulate: return "simulate";
    case Mode::Pathway: return "pathway";
    }
    return "?";
}

RunConfig make_config(Json document, Mode mode, std::optional<std::uint64_t> seed, std::optional<int> threads,
                      std::string base_dir)
{
    if (!document.is_object()) config_error("config must be a JSON object");
    if (document.contains("mode")) {
        const auto text = as<std::string>(document.at("mode"), "config.mode");
        if (text != to_string(mode))
            config_error(fmt::format("config.mode is '{}' but the '{}' subcommand was used", text, to_string(mode)));
    }
    RunConfig config;
    config.mode = mode;
    config.base_dir = std::move(base_dir);
    if (seed) config.seed = *seed;
    else if (document.contains("seed")) config.seed = as<std::uint64_t>(document.at("seed"), "config.seed");
    else config_error("a seed is required (config 'seed' or --seed)");
    config.threads = threads ? *threads : get_or<int>(document, "threads", 1, "config");
    if (config.threads < 1) config_error(fmt::format("threads must be >= 1, got {}", config.threads));
    document["seed"] = config.seed;
    config.document = std::move(document);
    return config;
}

RunConfig load_config(const std::string& path, Mode mode, std::optional<std::uint64_t> seed,
                      std::optional<int> threads)
{
    std::ifstream in(path);
    if (!in) config_error(fmt::format("cannot open config '{}'", path));
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        config_error(fmt::format("config '{}' is not valid JSON: {}", path, e.what()));
    }
    const auto dir = std::filesystem::path(path).parent_path();
    return make_config(std::move(doc), mode, seed, threads, dir.empty() ? "." : dir.string());
}

std::string dump_line(const Json& value)
{
    std::string out;
    write_value(out, value);
    return out;
}

std::string Report::render() const
{
    std::string out;
    for (const auto& r : records_) {
        out += dump_line(r);
        out.push_back('\n');
    }
    out += "--- table ---\n";
    std::vector<std::size_t> width(header_.size(), 0);
    const auto measure = [&width](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) width[i] = std::max(width[i], row[i].size());
    };
    measure(header_);
    for (const auto& row : rows_) measure(row);
    const auto line = [&](const std::vector<std::string>& row) {
        std::string text;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) text += " | ";
            text += i == 0 ? fmt::format("{:<{}}", row[i], width[i]) : fmt::format("{:>{}}", row[i], width[i]);
        }
        while (!text.empty() && text.back() == ' ') text.pop_back();
        return text + "\n";
    };
    out += line(header_);
    for (const auto& row : rows_) out += line(row);
    out += "--- end table ---\n";
    return out;
}

Report run_fuse(const RunConfig& config)
{
    const Json& doc = config.document;
    reject_unknown(doc, {"mode", "seed", "threads", "gamma", "inputs", "schema", "imputation", "filters", "methods",
                         "outcome"},
                   "config");
    const double gamma = gamma_of(doc);
    const auto schema = parse_schema(doc);
    const Json& inputs = require(doc, "inputs", "config");
    reject_unknown(inputs, {"outcomes", "intervention"}, "config.inputs");
    const Table outcomes = read_csv(resolve(config, as<std::string>(require(inputs, "outcomes", "inputs"), "inputs.outcomes")));
    const Table intervention =
        read_csv(resolve(config, as<std::string>(require(inputs, "intervention", "inputs"), "inputs.intervention")));
    const MethodConfig methods = parse_methods(doc, "config");
    if (methods.empty()) config_error("config.methods: configure at least one of rules, jackknife, bootstrap");
    const RowFilter filter = parse_filters(doc);

    std::vector<Diagnostic> diagnostics;
    FusedDataset data = concatenate(outcomes, intervention, schema, &diagnostics);
    if (!filter.clauses.empty()) data = filter_rows(data, filter);
    for (auto& d : validate_for_fusion(data)) diagnostics.push_back(std::move(d));

    ReplicationOptions options;
    options.gamma = gamma;
    options.execution = execution_for(config);
    if (doc.contains("outcome")) options.outcome_column = data.column_index(as<std::string>(doc.at("outcome"), "config.outcome"));
    const auto specs = parse_imputation(doc, data);
    const ImputationModel model = fit(data, specs);  // surfaces model errors before any replicate runs
    const Seed master(config.seed);

    Report report;
    report.add(run_record(config));
    for (const auto& d : diagnostics)
        report.add(Json{{"record", "diagnostic"}, {"code", d.code}, {"column", d.column}, {"message", d.message}});
    Json imputed = Json::object();
    for (std::size_t c = 0; c < data.cols(); ++c)
        if (data.missing_count(c) > 0) imputed[data.schema()[c].name] = data.missing_count(c);
    report.add(Json{{"record", "data"}, {"n_out", data.n_out()}, {"n_int", data.n_int()}, {"imputed_cells", imputed}});
    for (const auto& fc : model.conditionals()) {
        const char* scale = fc.scale == TargetScale::Raw ? "raw" : fc.scale == TargetScale::Empirical ? "empirical" : "latent";
        report.add(Json{{"record", "model"}, {"target", fc.spec.target}, {"predictors", fc.spec.predictors},
                        {"scale", scale}, {"fit_rows", fc.fit_rows}, {"df", fc.df}});
    }

    report.set_header({"method", "parameter", "estimate", "std.err", "lower", "upper"});
    if (!methods.rules.empty()) {
        const auto res = combining_rules(data, specs, methods.rules_m, master.derive("rules"), methods.rules,
                                         methods.rho, options);
        for (Parameter p : {Parameter::Mu, Parameter::Alpha}) {
            const PooledMI& pooled = p == Parameter::Mu ? res.mu : res.alpha;
            report.add(Json{{"record", "pooled"}, {"parameter", to_string(p)}, {"mean", pooled.mean},
                            {"within", pooled.within}, {"between", pooled.between}, {"m", pooled.m}, {"rho", res.rho}});
        }
        for (const auto& r : res.reports) {
            report.add(estimate_record(r));
            estimate_row(report, r);
        }
    }
    const auto replicate_records = [&](const ReplicationResult& res) {
        for (const auto* r : {&res.mu, &res.alpha}) {
            Json rec = estimate_record(*r);
            rec["replicates"] = res.replicates.size();
            rec["m"] = res.replicates.m;
            report.add(std::move(rec));
            estimate_row(report, *r);
        }
    };
    for (const auto& j : methods.jackknife) {
        const auto res = jackknife(data, specs, j.groups, j.m, master.derive(jackknife_label(j.groups, j.m)), options);
        replicate_records(res);
    }
    for (const auto& b : methods.bootstrap) {
        ReplicationOptions boot = options;
        boot.stratified_bootstrap = b.stratified;
        const auto label = bootstrap_label(b.resamples, b.m, b.stratified);
        const auto res = bootstrap(data, specs, b.resamples, b.m, master.derive(label), boot);
        replicate_records(res);
        if (res.replicates.rejected_resamples > 0)
            report.add(Json{{"record", "diagnostic"}, {"code", "rejected_resamples"}, {"column", ""},
                            {"message", fmt::format("{}: {} degenerate resamples redrawn", label,
                                                    res.replicates.rejected_resamples)}});
    }
    return report;
}

Report run_simulate(const RunConfig& config)
{
    const Json& doc = config.document;
    reject_unknown(doc, {"mode", "seed", "threads", "gamma", "scenario", "replications", "n_int_base", "n_out",
                         "treatment_probability", "correlation", "treatment_shift", "truncation", "outcome_coef_int",
                         "outcome_coef_out", "reduced_side", "empirical_transform", "methods", "pathway"},
                   "config");
    const auto name = as<std::string>(require(doc, "scenario", "config"), "config.scenario");
    const auto id = parse_scenario(name);
    if (!id)
        config_error(fmt::format("unknown scenario '{}' (primary, reduced_outcomes, drop_x3, no_covariates, "
                                 "different_conditionals, pathway)",
                                 name));
    Report report;
    report.add(run_record(config));

    if (*id == ScenarioId::Pathway) {
        const Json& block = require(doc, "pathway", "config");
        reject_unknown(block, {"example", "params", "n", "treatment_probability"}, "config.pathway");
        const auto params = parse_pathway_params(block, "config.pathway");
        const auto n = get_or<std::size_t>(block, "n", 100000, "config.pathway");
        const double p = get_or<double>(block, "treatment_probability", 0.5, "config.pathway");
        if (!(p > 0.0 && p < 1.0)) config_error("config.pathway.treatment_probability must lie in (0, 1)");
        const auto analysis = analyze_pathway(params);
        const auto mc = pathway_monte_carlo(params, n, Seed(config.seed), p);
        report.add(analysis_record(analysis));
        report.add(monte_carlo_record(mc, analysis));
        pathway_table(report, analysis, mc);
        return report;
    }

    ScenarioSpec spec = make_scenario(*id);
    spec.replications = as<int>(require(doc, "replications", "config"), "config.replications");
    spec.n_int_base = get_or<std::size_t>(doc, "n_int_base", spec.n_int_base, "config");
    spec.n_out = get_or<std::size_t>(doc, "n_out", spec.n_out, "config");
    spec.treatment_probability = get_or<double>(doc, "treatment_probability", spec.treatment_probability, "config");
    spec.correlation = get_or<double>(doc, "correlation", spec.correlation, "config");
    spec.treatment_shift = get_or<double>(doc, "treatment_shift", spec.treatment_shift, "config");
    spec.truncation = get_or<double>(doc, "truncation", spec.truncation, "config");
    spec.outcome_coef_int = get_or<double>(doc, "outcome_coef_int", spec.outcome_coef_int, "config");
    spec.outcome_coef_out = get_or<double>(doc, "outcome_coef_out", spec.outcome_coef_out, "config");
    spec.empirical_transform = get_or<bool>(doc, "empirical_transform", spec.empirical_transform, "config");
    const auto side = get_or<std::string>(doc, "reduced_side", "at_least", "config");
    if (side == "at_least") spec.reduced_side = ReducedSide::AtLeast;
    else if (side == "below") spec.reduced_side = ReducedSide::Below;
    else config_error(fmt::format("config.reduced_side must be 'at_least' or 'below', got '{}'", side));
    spec.gamma = gamma_of(doc);
    spec.methods = parse_methods(doc, "config");
    if (spec.methods.empty()) config_error("config.methods: configure at least one of rules, jackknife, bootstrap");
    spec.seed = Seed(config.seed);
    validate(spec);

    const StudyResult study = run_study(spec, execution_for(config));
    report.add(Json{{"record", "truth"}, {"mu", study.truth.mu}, {"alpha", study.truth.alpha}});
    for (const auto& message : study.failures)
        report.add(Json{{"record", "diagnostic"}, {"code", "replication_failed"}, {"column", ""}, {"message", message}});
    for (const auto& row : study.rows)
        report.add(Json{{"record", "study"},
                        {"method", row.method},
                        {"parameter", to_string(row.parameter)},
                        {"bias", row.result.bias},
                        {"rmse", row.result.rmse},
                        {"coverage", optional_number(row.result.coverage)},
                        {"mean_variance", optional_number(row.result.coverage ? std::optional<double>(row.result.mean_variance) : std::nullopt)},
                        {"used", row.used},
                        {"negative_variance", row.negative_variance}});
    report.add(Json{{"record", "summary"}, {"replications", study.replications}, {"failed", study.failed}});

    report.set_header({"method", "mu bias", "mu rMSE", "mu cover", "alpha bias", "alpha rMSE", "alpha cover"});
    for (std::size_t i = 0; i + 1 < study.rows.size(); i += 2) {
        const auto& mu = study.rows[i].result;
        const auto& alpha = study.rows[i + 1].result;
        report.add_row({study.rows[i].method, fixed4(mu.bias), fixed4(mu.rmse), fixed4(mu.coverage), fixed4(alpha.bias),
                        fixed4(alpha.rmse), fixed4(alpha.coverage)});
    }
    return report;
}

Report run_pathway(const RunConfig& config)
{
    const Json& doc = config.document;
    reject_unknown(doc, {"mode", "seed", "threads", "example", "params", "monte_carlo"}, "config");
    const auto params = parse_pathway_params(doc, "config");
    const auto analysis = analyze_pathway(params);
    Report report;
    report.add(run_record(config));
    report.add(analysis_record(analysis));
    std::optional<PathwayMonteCarlo> mc;
    if (doc.contains("monte_carlo")) {
        const Json& block = doc.at("monte_carlo");
        reject_unknown(block, {"n", "treatment_probability"}, "config.monte_carlo");
        const auto n = get_or<std::size_t>(block, "n", 100000, "config.monte_carlo");
        const double p = get_or<double>(block, "treatment_probability", 0.5, "config.monte_carlo");
        if (!(p > 0.0 && p < 1.0)) config_error("config.monte_carlo.treatment_probability must lie in (0, 1)");
        mc = pathway_monte_carlo(params, n, Seed(config.seed), p);
        report.add(monte_carlo_record(*mc, analysis));
    }
    pathway_table(report, analysis, mc);
    return report;
}

Report run(const RunConfig& config)
{
    switch (config.mode) {
    case Mode::Fuse: return run_fuse(config);
    case Mode::Simulate: return run_simulate(config);
    case Mode::Pathway: return run_pathway(config);
    }
    config_error("unknown mode");
}

namespace {

void print_error(std::ostream& err, std::string_view kind, std::string_view message)
{
    err << dump_line(Json{{"error", kind}, {"message", message}}) << '\n';
}

void write_output(const std::string& text, const std::string& path, std::ostream& out)
{
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) config_error(fmt::format("cannot write '{}'", path));
    file << text;
}

}  // namespace

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Long-term treatment effects by fusing intervention and outcomes datasets"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    struct Options {
        std::string config;
        std::optional<std::uint64_t> seed;
        std::optional<int> threads;
        std::string out;
    };
    Options opts;
    std::vector<std::pair<CLI::App*, Mode>> runs;
    for (auto [name, mode, help] : {std::tuple{"fuse", Mode::Fuse, "Fuse two CSV files, impute and estimate"},
                                    std::tuple{"simulate", Mode::Simulate, "Run a repeated-replication study"},
                                    std::tuple{"pathway", Mode::Pathway, "Closed-form causal-pathway analysis"}}) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config, "JSON run configuration")->required();
        sub->add_option("--seed", opts.seed, "Master seed (overrides the config)");
        sub->add_option("--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", opts.out, "Report path (default: stdout)");
        runs.emplace_back(sub, mode);
    }

    std::string scenario = "primary";
    std::string outcomes_path;
    std::string intervention_path;
    std::uint64_t generate_seed = 0;
    auto* generate = app.add_subcommand("generate", "Write one simulated dataset pair as CSV");
    generate->add_option("--scenario", scenario, "Scenario name")->capture_default_str();
    generate->add_option("--seed", generate_seed, "Seed")->required();
    generate->add_option("--outcomes", outcomes_path, "Outcomes CSV path")->required();
    generate->add_option("--intervention", intervention_path, "Intervention CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        print_error(err, "config", e.what());
        return exit_code(ErrorKind::Config);
    }

    try {
        if (generate->parsed()) {
            const auto id = parse_scenario(scenario);
            if (!id || *id == ScenarioId::Pathway) config_error(fmt::format("cannot generate scenario '{}'", scenario));
            const auto pair = generate_pair(make_scenario(*id), Seed(generate_seed));
            write_csv(outcomes_path, pair.outcomes);
            write_csv(intervention_path, pair.intervention);
            return 0;
        }
        for (const auto& [sub, mode] : runs) {
            if (!sub->parsed()) continue;
            const auto config = load_config(opts.config, mode, opts.seed, opts.threads);
            write_output(run(config).render(), opts.out, out);
            return 0;
        }
    } catch (const Error& e) {
        print_error(err, to_string(e.kind()), e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        print_error(err, "internal", e.what());
        return 1;
    }
    return 0;
}

int main_entry(int argc, char** argv) { return main_entry(argc, argv, std::cout, std::cerr); }

}  // namespace fusion::cli
