#pragma once

#include "fusion/dataset.hpp"

#include <iosfwd>
#include <string>

namespace fusion {

/// RFC-4180 style: header row required, quoted fields may hold commas,
/// doubled quotes and line breaks. "NA" and empty cells are missing.
/// Malformed text or non-numeric cells throw Error(Data).
Table parse_csv(std::istream& in, const std::string& origin = "<stream>");
/// Throws Error(Config) when the file cannot be opened.
Table read_csv(const std::string& path);

/// Missing cells are written as NA, numbers with 17 significant digits.
void write_csv(std::ostream& out, const Table& table);
void write_csv(const std::string& path, const Table& table);

}  // namespace fusion
