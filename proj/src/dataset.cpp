#include "fusion/dataset.hpp"

#include "fusion/error.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <map>
#include <set>

namespace fusion {

const char* to_string(VariableRole role) noexcept
{
    switch (role) {
    case VariableRole::Treatment: return "treatment";
    case VariableRole::Covariate: return "covariate";
    case VariableRole::Intermediate: return "intermediate";
    case VariableRole::Outcome: return "outcome";
    }
    return "?";
}

const char* to_string(ColumnKind kind) noexcept
{
    switch (kind) {
    case ColumnKind::Continuous: return "continuous";
    case ColumnKind::Binary: return "binary";
    case ColumnKind::OrderedCategorical: return "ordinal";
    }
    return "?";
}

const char* to_string(SourceTag tag) noexcept
{
    return tag == SourceTag::OutcomesSource ? "outcomes" : "intervention";
}

void validate_schema(std::span<const ColumnSchema> schema)
{
    std::set<std::string> names;
    int treatments = 0;
    int outcomes = 0;
    int predictors = 0;
    for (const auto& c : schema) {
        if (c.name.empty()) throw Error(ErrorKind::Schema, "schema: empty column name");
        if (!names.insert(c.name).second)
            throw Error(ErrorKind::Schema, fmt::format("schema: duplicate column '{}'", c.name));
        if (c.kind == ColumnKind::OrderedCategorical && c.levels < 2)
            throw Error(ErrorKind::Schema,
                        fmt::format("schema: column '{}' needs at least 2 levels", c.name));
        switch (c.role) {
        case VariableRole::Treatment:
            ++treatments;
            if (c.kind != ColumnKind::Binary)
                throw Error(ErrorKind::Schema,
                            fmt::format("schema: treatment column '{}' must be binary", c.name));
            break;
        case VariableRole::Outcome: ++outcomes; break;
        case VariableRole::Covariate:
        case VariableRole::Intermediate: ++predictors; break;
        }
    }
    if (treatments != 1)
        throw Error(ErrorKind::Schema,
                    fmt::format("schema: expected exactly one treatment column, found {}", treatments));
    if (outcomes < 1) throw Error(ErrorKind::Schema, "schema: no outcome column");
    if (predictors < 1) throw Error(ErrorKind::Schema, "schema: no intermediate or covariate column");
}

const Column* Table::find(std::string_view name) const
{
    for (const auto& c : columns)
        if (c.name == name) return &c;
    return nullptr;
}

Column& Table::add(std::string name, std::vector<std::optional<double>> cells)
{
    columns.push_back(Column{std::move(name), std::move(cells)});
    return columns.back();
}

FusedDataset FusedDataset::from_columns(std::vector<ColumnSchema> schema,
                                        std::vector<std::vector<double>> values,
                                        std::vector<std::vector<std::uint8_t>> missing,
                                        std::vector<SourceTag> sources)
{
    validate_schema(schema);
    const std::size_t n = sources.size();
    if (values.size() != schema.size() || missing.size() != schema.size())
        throw Error(ErrorKind::Schema, "dataset: column count does not match schema");
    for (std::size_t c = 0; c < schema.size(); ++c)
        if (values[c].size() != n || missing[c].size() != n)
            throw Error(ErrorKind::Data, "dataset: ragged column storage");

    FusedDataset d;
    d.n_out_ = static_cast<std::size_t>(
        std::find(sources.begin(), sources.end(), SourceTag::InterventionSource) - sources.begin());
    if (!std::all_of(sources.begin() + static_cast<std::ptrdiff_t>(d.n_out_), sources.end(),
                     [](SourceTag t) { return t == SourceTag::InterventionSource; }))
        throw Error(ErrorKind::Data, "dataset: outcomes rows must precede intervention rows");

    for (std::size_t c = 0; c < schema.size(); ++c)
        if (schema[c].role == VariableRole::Treatment) d.treatment_ = c;
    const auto& z = values[d.treatment_];
    const auto& zmiss = missing[d.treatment_];
    for (std::size_t r = 0; r < n; ++r) {
        if (zmiss[r]) throw Error(ErrorKind::Data, "dataset: missing treatment value");
        if (sources[r] == SourceTag::OutcomesSource && z[r] != 0.0)
            throw Error(ErrorKind::Data, "dataset: outcomes-source rows must be untreated");
        if (z[r] != 0.0 && z[r] != 1.0) throw Error(ErrorKind::Data, "dataset: non-binary treatment");
    }

    d.schema_ = std::move(schema);
    d.values_ = std::move(values);
    d.missing_ = std::move(missing);
    d.sources_ = std::move(sources);
    return d;
}

std::size_t FusedDataset::missing_count(std::size_t col) const
{
    return static_cast<std::size_t>(std::count(missing_[col].begin(), missing_[col].end(), 1));
}

std::optional<std::size_t> FusedDataset::find_column(std::string_view name) const
{
    for (std::size_t c = 0; c < schema_.size(); ++c)
        if (schema_[c].name == name) return c;
    return std::nullopt;
}

std::size_t FusedDataset::column_index(std::string_view name) const
{
    if (auto c = find_column(name)) return *c;
    throw Error(ErrorKind::Schema, fmt::format("unknown column '{}'", name));
}

std::vector<std::size_t> FusedDataset::outcome_columns() const
{
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < schema_.size(); ++c)
        if (schema_[c].role == VariableRole::Outcome) out.push_back(c);
    return out;
}

std::vector<std::size_t> FusedDataset::rows_of(SourceTag tag) const
{
    std::vector<std::size_t> out;
    if (tag == SourceTag::OutcomesSource) {
        out.resize(n_out_);
        for (std::size_t r = 0; r < n_out_; ++r) out[r] = r;
    } else {
        out.resize(n_int());
        for (std::size_t r = 0; r < n_int(); ++r) out[r] = n_out_ + r;
    }
    return out;
}

FusedDataset FusedDataset::subset(std::span<const std::size_t> rows) const
{
    std::vector<std::size_t> order(rows.begin(), rows.end());
    std::stable_partition(order.begin(), order.end(),
                          [this](std::size_t r) { return sources_[r] == SourceTag::OutcomesSource; });

    FusedDataset d;
    d.schema_ = schema_;
    d.treatment_ = treatment_;
    d.values_.resize(cols());
    d.missing_.resize(cols());
    for (std::size_t c = 0; c < cols(); ++c) {
        auto& v = d.values_[c];
        auto& m = d.missing_[c];
        v.resize(order.size());
        m.resize(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            v[i] = values_[c][order[i]];
            m[i] = missing_[c][order[i]];
        }
    }
    d.sources_.resize(order.size());
    d.n_out_ = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        d.sources_[i] = sources_[order[i]];
        if (d.sources_[i] == SourceTag::OutcomesSource) ++d.n_out_;
    }
    return d;
}

FusedDataset FusedDataset::with_cells(std::size_t col, std::span<const std::size_t> rows,
                                      std::span<const double> values) const&
{
    FusedDataset d = *this;
    return std::move(d).with_cells(col, rows, values);
}

FusedDataset FusedDataset::with_cells(std::size_t col, std::span<const std::size_t> rows,
                                      std::span<const double> values) &&
{
    if (rows.size() != values.size())
        throw Error(ErrorKind::Data, "with_cells: rows and values differ in length");
    if (col == treatment_) throw Error(ErrorKind::Data, "with_cells: treatment column is read-only");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        values_[col][rows[i]] = values[i];
        missing_[col][rows[i]] = 0;
    }
    return std::move(*this);
}

namespace {

void check_kind(const ColumnSchema& schema, const Column& column, std::string_view source)
{
    std::set<double> distinct;
    for (const auto& cell : column.cells) {
        if (!cell) continue;
        const double v = *cell;
        if (!std::isfinite(v))
            throw Error(ErrorKind::Data,
                        fmt::format("column '{}' ({} table): non-finite value", schema.name, source));
        switch (schema.kind) {
        case ColumnKind::Continuous: break;
        case ColumnKind::Binary:
            if (v != 0.0 && v != 1.0)
                throw Error(ErrorKind::Data,
                            fmt::format("column '{}' ({} table): non-binary value {}", schema.name,
                                        source, v));
            break;
        case ColumnKind::OrderedCategorical:
            if (v != std::floor(v))
                throw Error(ErrorKind::Data,
                            fmt::format("column '{}' ({} table): non-integer ordinal value {}",
                                        schema.name, source, v));
            distinct.insert(v);
            break;
        }
    }
    if (schema.kind == ColumnKind::OrderedCategorical &&
        distinct.size() > static_cast<std::size_t>(schema.levels))
        throw Error(ErrorKind::Data,
                    fmt::format("column '{}' ({} table): {} distinct values exceed {} levels",
                                schema.name, source, distinct.size(), schema.levels));
}

}  // namespace

FusedDataset concatenate(const Table& outcomes, const Table& intervention,
                         std::span<const ColumnSchema> schema, std::vector<Diagnostic>* diagnostics)
{
    validate_schema(schema);
    const std::size_t n_out = outcomes.rows();
    for (const auto& c : outcomes.columns)
        if (c.cells.size() != n_out) throw Error(ErrorKind::Data, "outcomes table is ragged");
    for (const auto& c : intervention.columns)
        if (c.cells.size() != intervention.rows())
            throw Error(ErrorKind::Data, "intervention table is ragged");
    if (n_out == 0) throw Error(ErrorKind::Data, "outcomes table has no rows");
    if (intervention.rows() == 0) throw Error(ErrorKind::Data, "intervention table has no rows");

    std::size_t treatment_col = 0;
    for (std::size_t c = 0; c < schema.size(); ++c) {
        const auto& s = schema[c];
        const Column* in_out = outcomes.find(s.name);
        const Column* in_int = intervention.find(s.name);
        switch (s.role) {
        case VariableRole::Treatment:
            treatment_col = c;
            if (!in_int)
                throw Error(ErrorKind::Schema,
                            fmt::format("intervention table lacks treatment column '{}'", s.name));
            check_kind(s, *in_int, "intervention");
            break;
        case VariableRole::Outcome:
            if (!in_out)
                throw Error(ErrorKind::Schema,
                            fmt::format("outcomes table lacks outcome column '{}'", s.name));
            check_kind(s, *in_out, "outcomes");
            break;
        case VariableRole::Covariate:
        case VariableRole::Intermediate:
            if (!in_out || !in_int)
                throw Error(ErrorKind::Schema,
                            fmt::format("column '{}' must be present in both tables", s.name));
            check_kind(s, *in_out, "outcomes");
            check_kind(s, *in_int, "intervention");
            break;
        }
    }

    // Intervention rows with unknown treatment are rejected, not imputed.
    const Column& z = *intervention.find(schema[treatment_col].name);
    std::vector<std::size_t> kept;
    kept.reserve(intervention.rows());
    for (std::size_t r = 0; r < intervention.rows(); ++r)
        if (z.cells[r]) kept.push_back(r);
    if (kept.empty()) throw Error(ErrorKind::Data, "intervention table has no rows with a treatment value");
    if (diagnostics && kept.size() < intervention.rows())
        diagnostics->push_back(Diagnostic{
            "treatment_missing_rows_dropped", schema[treatment_col].name,
            fmt::format("{} intervention rows with missing treatment were dropped",
                        intervention.rows() - kept.size())});

    const std::size_t n = n_out + kept.size();
    std::vector<std::vector<double>> values(schema.size(), std::vector<double>(n, 0.0));
    std::vector<std::vector<std::uint8_t>> missing(schema.size(), std::vector<std::uint8_t>(n, 0));
    std::vector<SourceTag> sources(n, SourceTag::OutcomesSource);
    std::fill(sources.begin() + static_cast<std::ptrdiff_t>(n_out), sources.end(),
              SourceTag::InterventionSource);

    for (std::size_t c = 0; c < schema.size(); ++c) {
        const auto& s = schema[c];
        auto& v = values[c];
        auto& m = missing[c];
        const Column* in_out = outcomes.find(s.name);
        const Column* in_int = intervention.find(s.name);
        // outcomes block
        if (s.role == VariableRole::Treatment) {
            // untreated by construction
        } else {
            for (std::size_t r = 0; r < n_out; ++r) {
                const auto& cell = in_out->cells[r];
                if (cell) v[r] = *cell;
                else m[r] = 1;
            }
        }
        // intervention block
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const std::size_t r = n_out + i;
            if (s.role == VariableRole::Outcome) {
                m[r] = 1;
                continue;
            }
            const auto& cell = in_int->cells[kept[i]];
            if (cell) v[r] = *cell;
            else m[r] = 1;
        }
    }
    return FusedDataset::from_columns(std::vector<ColumnSchema>(schema.begin(), schema.end()),
                                      std::move(values), std::move(missing), std::move(sources));
}

std::optional<CompareOp> parse_compare_op(std::string_view text)
{
    if (text == "<") return CompareOp::Less;
    if (text == "<=") return CompareOp::LessEqual;
    if (text == ">") return CompareOp::Greater;
    if (text == ">=") return CompareOp::GreaterEqual;
    if (text == "==" || text == "=") return CompareOp::Equal;
    if (text == "!=") return CompareOp::NotEqual;
    return std::nullopt;
}

const char* to_string(CompareOp op) noexcept
{
    switch (op) {
    case CompareOp::Less: return "<";
    case CompareOp::LessEqual: return "<=";
    case CompareOp::Greater: return ">";
    case CompareOp::GreaterEqual: return ">=";
    case CompareOp::Equal: return "==";
    case CompareOp::NotEqual: return "!=";
    }
    return "?";
}

RowFilter RowFilter::operator&&(const RowFilter& other) const
{
    RowFilter out = *this;
    out.clauses.insert(out.clauses.end(), other.clauses.begin(), other.clauses.end());
    return out;
}

namespace {

bool compare(double lhs, CompareOp op, double rhs)
{
    switch (op) {
    case CompareOp::Less: return lhs < rhs;
    case CompareOp::LessEqual: return lhs <= rhs;
    case CompareOp::Greater: return lhs > rhs;
    case CompareOp::GreaterEqual: return lhs >= rhs;
    case CompareOp::Equal: return lhs == rhs;
    case CompareOp::NotEqual: return lhs != rhs;
    }
    return false;
}

}  // namespace

FusedDataset filter_rows(const FusedDataset& data, const RowFilter& filter, bool require_both_sources)
{
    std::vector<std::size_t> cols;
    cols.reserve(filter.clauses.size());
    for (const auto& clause : filter.clauses) cols.push_back(data.column_index(clause.column));

    std::vector<std::size_t> keep;
    keep.reserve(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r) {
        bool pass = true;
        for (std::size_t k = 0; k < filter.clauses.size() && pass; ++k) {
            const auto& clause = filter.clauses[k];
            if (clause.scope && *clause.scope != data.source(r)) continue;
            pass = !data.missing(r, cols[k]) && compare(data.value(r, cols[k]), clause.op, clause.value);
        }
        if (pass) keep.push_back(r);
    }
    FusedDataset out = data.subset(keep);
    if (require_both_sources && (out.n_out() == 0 || out.n_int() == 0))
        throw Error(ErrorKind::Data,
                    fmt::format("filter leaves {} outcomes rows and {} intervention rows", out.n_out(),
                                out.n_int()));
    return out;
}

std::vector<Diagnostic> validate_for_fusion(const FusedDataset& data)
{
    std::vector<Diagnostic> out;
    const std::size_t n_out = data.n_out();
    for (std::size_t c = 0; c < data.cols(); ++c) {
        const auto& s = data.schema()[c];
        if (s.role != VariableRole::Intermediate && s.role != VariableRole::Covariate) continue;
        const auto values = data.column(c);
        const auto mask = data.column_mask(c);

        if (s.kind == ColumnKind::Continuous) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t r = 0; r < n_out; ++r)
                if (!mask[r]) lo = std::min(lo, values[r]), hi = std::max(hi, values[r]);
            std::size_t below = 0;
            std::size_t above = 0;
            for (std::size_t r = n_out; r < data.rows(); ++r) {
                if (mask[r]) continue;
                below += values[r] < lo;
                above += values[r] > hi;
            }
            if (below + above > 0)
                out.push_back(Diagnostic{
                    "support_range", s.name,
                    fmt::format("{} intervention values of '{}' lie outside the outcomes range "
                                "[{:.6g}, {:.6g}] ({} below, {} above)",
                                below + above, s.name, lo, hi, below, above)});
        } else {
            std::set<double> seen;
            for (std::size_t r = 0; r < n_out; ++r)
                if (!mask[r]) seen.insert(values[r]);
            std::map<double, std::size_t> unseen;
            for (std::size_t r = n_out; r < data.rows(); ++r)
                if (!mask[r] && !seen.contains(values[r])) ++unseen[values[r]];
            for (const auto& [level, count] : unseen)
                out.push_back(Diagnostic{
                    "support_level", s.name,
                    fmt::format("level {:g} of '{}' occurs in {} intervention rows but never in the "
                                "outcomes source",
                                level, s.name, count)});
        }
    }
    return out;
}

}  // namespace fusion
