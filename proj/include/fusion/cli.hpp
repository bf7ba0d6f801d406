#pragma once

#include "fusion/rng.hpp"

#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace fusion::cli {

using Json = nlohmann::ordered_json;

enum class Mode { Fuse, Simulate, Pathway };

const char* to_string(Mode mode) noexcept;

/// A parsed configuration document plus the command-line overrides.
struct RunConfig {
    Mode mode = Mode::Fuse;
    Json document;                 // config file content, overrides applied
    std::uint64_t seed = 0;
    int threads = 1;
    std::string base_dir;          // relative input paths resolve against it
};

/// Reads and checks the JSON config. `seed` and `threads` override the file;
/// a seed must come from one of the two. Throws Error(Config).
RunConfig load_config(const std::string& path, Mode mode, std::optional<std::uint64_t> seed,
                      std::optional<int> threads);
RunConfig make_config(Json document, Mode mode, std::optional<std::uint64_t> seed = std::nullopt,
                      std::optional<int> threads = std::nullopt, std::string base_dir = ".");

/// Machine records first (one JSON object per line, 17 significant digits),
/// then a human table between "--- table ---" and "--- end table ---".
class Report {
public:
    void add(Json record) { records_.push_back(std::move(record)); }
    void add_row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }
    void set_header(std::vector<std::string> header) { header_ = std::move(header); }

    const std::vector<Json>& records() const { return records_; }
    std::string render() const;

private:
    std::vector<Json> records_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// One JSON value on a single line, doubles with 17 significant digits and
/// non-finite doubles as the strings "inf", "-inf" and "nan".
std::string dump_line(const Json& value);

Report run_fuse(const RunConfig& config);
Report run_simulate(const RunConfig& config);
Report run_pathway(const RunConfig& config);
Report run(const RunConfig& config);

/// Entry point shared by the executable and the tests; returns the exit code.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);
int main_entry(int argc, char** argv);

}  // namespace fusion::cli
