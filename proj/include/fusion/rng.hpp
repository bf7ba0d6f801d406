#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fusion {

/// Root of a tree of reproducible random streams.
///
/// Every stream used by the library is addressed by a path of tags and
/// indices below the master seed, e.g. `seed.derive("replicate", g).derive("imputation", j)`.
/// Derivation is a pure function, so the stream a work unit sees does not
/// depend on which thread runs it or in which order units are scheduled.
class Seed {
public:
    constexpr Seed() = default;
    constexpr explicit Seed(std::uint64_t value) : value_(value) {}

    constexpr std::uint64_t value() const { return value_; }

    Seed derive(std::uint64_t index) const;
    Seed derive(std::string_view tag) const;
    Seed derive(std::string_view tag, std::uint64_t index) const { return derive(tag).derive(index); }

    friend constexpr bool operator==(Seed, Seed) = default;

private:
    std::uint64_t value_ = 0;
};

using Engine = std::mt19937_64;

inline Engine make_engine(Seed seed) { return Engine(seed.value()); }

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_tag(std::string_view tag);

}  // namespace fusion
