#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fusion {

enum class VariableRole { Treatment, Covariate, Intermediate, Outcome };
enum class ColumnKind { Continuous, Binary, OrderedCategorical };
enum class SourceTag : std::uint8_t { OutcomesSource, InterventionSource };

struct ColumnSchema {
    std::string name;
    VariableRole role = VariableRole::Intermediate;
    ColumnKind kind = ColumnKind::Continuous;
    int levels = 2;  // only meaningful for OrderedCategorical
};

const char* to_string(VariableRole role) noexcept;
const char* to_string(ColumnKind kind) noexcept;
const char* to_string(SourceTag tag) noexcept;

/// Checks the schema-level invariants: unique names, exactly one binary
/// Treatment column, at least one Outcome and at least one predictor column,
/// categorical levels >= 2. Throws Error(Schema).
void validate_schema(std::span<const ColumnSchema> schema);

/// A raw input table as read from disk, before roles are applied.
struct Column {
    std::string name;
    std::vector<std::optional<double>> cells;
};

struct Table {
    std::vector<Column> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().cells.size(); }
    const Column* find(std::string_view name) const;
    Column& add(std::string name, std::vector<std::optional<double>> cells);
};

struct Diagnostic {
    std::string code;  // e.g. "support_range", "support_level"
    std::string column;
    std::string message;
};

/// The concatenated fusion file: outcomes-source rows first, then
/// intervention-source rows, one column per schema entry, with an explicit
/// per-cell missingness mask. Immutable; all edits return a new dataset.
class FusedDataset {
public:
    /// Builds a dataset from column-major storage and checks the invariants
    /// shared by every FusedDataset (block layout, treatment zero and observed
    /// on outcomes rows, treatment observed and binary on intervention rows).
    static FusedDataset from_columns(std::vector<ColumnSchema> schema,
                                     std::vector<std::vector<double>> values,
                                     std::vector<std::vector<std::uint8_t>> missing,
                                     std::vector<SourceTag> sources);

    const std::vector<ColumnSchema>& schema() const { return schema_; }
    std::size_t rows() const { return sources_.size(); }
    std::size_t cols() const { return schema_.size(); }
    std::size_t n_out() const { return n_out_; }
    std::size_t n_int() const { return rows() - n_out_; }

    SourceTag source(std::size_t row) const { return sources_[row]; }
    std::span<const SourceTag> sources() const { return sources_; }

    double value(std::size_t row, std::size_t col) const { return values_[col][row]; }
    bool missing(std::size_t row, std::size_t col) const { return missing_[col][row] != 0; }
    std::span<const double> column(std::size_t col) const { return values_[col]; }
    std::span<const std::uint8_t> column_mask(std::size_t col) const { return missing_[col]; }
    std::size_t missing_count(std::size_t col) const;

    std::optional<std::size_t> find_column(std::string_view name) const;
    /// Throws Error(Schema) for unknown names.
    std::size_t column_index(std::string_view name) const;
    std::size_t treatment_column() const { return treatment_; }
    std::vector<std::size_t> outcome_columns() const;

    std::vector<std::size_t> rows_of(SourceTag tag) const;

    /// Rows picked by index (repeats allowed). The result is reordered stably
    /// so that outcomes-source rows precede intervention-source rows.
    FusedDataset subset(std::span<const std::size_t> rows) const;

    /// Copy with the given cells set to `values` and marked observed.
    FusedDataset with_cells(std::size_t col, std::span<const std::size_t> rows,
                            std::span<const double> values) const&;
    FusedDataset with_cells(std::size_t col, std::span<const std::size_t> rows,
                            std::span<const double> values) &&;

private:
    FusedDataset() = default;

    std::vector<ColumnSchema> schema_;
    std::vector<std::vector<double>> values_;
    std::vector<std::vector<std::uint8_t>> missing_;
    std::vector<SourceTag> sources_;
    std::size_t n_out_ = 0;
    std::size_t treatment_ = 0;
};

/// Stacks the outcomes table above the intervention table. Outcome cells of
/// intervention rows are set missing, the treatment of outcomes rows is set to
/// zero. Intervention rows with a missing treatment are dropped and reported
/// through `diagnostics` when given.
FusedDataset concatenate(const Table& outcomes, const Table& intervention,
                         std::span<const ColumnSchema> schema,
                         std::vector<Diagnostic>* diagnostics = nullptr);

enum class CompareOp { Less, LessEqual, Greater, GreaterEqual, Equal, NotEqual };

std::optional<CompareOp> parse_compare_op(std::string_view text);
const char* to_string(CompareOp op) noexcept;

/// One comparison `column op value`. When `scope` is set, rows from the other
/// source pass unconditionally. A missing cell fails the comparison.
struct FilterClause {
    std::string column;
    CompareOp op = CompareOp::GreaterEqual;
    double value = 0.0;
    std::optional<SourceTag> scope;
};

/// Conjunction of clauses.
struct RowFilter {
    std::vector<FilterClause> clauses;

    RowFilter operator&&(const RowFilter& other) const;
};

FusedDataset filter_rows(const FusedDataset& data, const RowFilter& filter,
                         bool require_both_sources = true);

/// Support check for intermediates and covariates: intervention values outside
/// the outcomes-source range (continuous) or unseen levels (categorical).
/// Warnings only.
std::vector<Diagnostic> validate_for_fusion(const FusedDataset& data);

}  // namespace fusion
