#include "fusion/error.hpp"
#include "fusion/parallel.hpp"
#include "fusion/rng.hpp"

#include <omp.h>

namespace fusion {

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numerical: return "numerical";
    }
    return "unknown";
}

int exit_code(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Schema: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numerical: return 4;
    }
    return 1;
}

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a
std::uint64_t hash_tag(std::string_view tag)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Seed Seed::derive(std::uint64_t index) const
{
    return Seed(mix64(mix64(value_) ^ (index * 0xd1b54a32d192ed03ULL + 1)));
}

Seed Seed::derive(std::string_view tag) const
{
    return Seed(mix64(mix64(value_ ^ 0x5bd1e9955bd1e995ULL) ^ hash_tag(tag)));
}

void set_thread_count(int threads)
{
    if (threads > 0) omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace fusion
