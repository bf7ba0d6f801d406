#pragma once

#include "fusion/dataset.hpp"
#include "fusion/error.hpp"
#include "fusion/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <doctest.h>
#include <initializer_list>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace testing {

inline constexpr double NA = std::numeric_limits<double>::quiet_NaN();

// NaN entries become missing cells.
inline std::vector<std::optional<double>> cells(std::initializer_list<double> values)
{
    std::vector<std::optional<double>> out;
    for (double v : values) out.push_back(std::isnan(v) ? std::nullopt : std::optional<double>(v));
    return out;
}

inline std::vector<std::optional<double>> cells(const std::vector<double>& values)
{
    std::vector<std::optional<double>> out;
    for (double v : values) out.push_back(std::isnan(v) ? std::nullopt : std::optional<double>(v));
    return out;
}

inline fusion::ColumnSchema col(std::string name, fusion::VariableRole role,
                                fusion::ColumnKind kind = fusion::ColumnKind::Continuous, int levels = 2)
{
    return {std::move(name), role, kind, levels};
}

inline fusion::FusedDataset simulated(std::uint64_t seed, fusion::ScenarioId id = fusion::ScenarioId::Primary)
{
    return fusion::fuse(fusion::generate_pair(fusion::make_scenario(id), fusion::Seed(seed)));
}

template <class Fn>
fusion::ErrorKind error_kind_of(Fn&& fn)
{
    try {
        fn();
    } catch (const fusion::Error& e) {
        return e.kind();
    }
    FAIL("expected fusion::Error");
    return fusion::ErrorKind::Config;
}

template <class Fn>
std::string error_message_of(Fn&& fn)
{
    try {
        fn();
    } catch (const fusion::Error& e) {
        return e.what();
    }
    FAIL("expected fusion::Error");
    return {};
}

// Rebuilds `d` with new treatment values on the intervention rows.
inline fusion::FusedDataset with_treatment(const fusion::FusedDataset& d, const std::vector<double>& z)
{
    std::vector<std::vector<double>> values;
    std::vector<std::vector<std::uint8_t>> missing;
    for (std::size_t c = 0; c < d.cols(); ++c) {
        values.emplace_back(d.column(c).begin(), d.column(c).end());
        missing.emplace_back(d.column_mask(c).begin(), d.column_mask(c).end());
    }
    auto& zc = values[d.treatment_column()];
    std::copy(z.begin(), z.end(), zc.begin() + static_cast<std::ptrdiff_t>(d.n_out()));
    return fusion::FusedDataset::from_columns(d.schema(), std::move(values), std::move(missing),
                                              {d.sources().begin(), d.sources().end()});
}

inline bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace testing
