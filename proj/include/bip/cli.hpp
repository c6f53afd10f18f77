#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bip/contraction.hpp"
#include "bip/models.hpp"
#include "bip/synthetic.hpp"

namespace bip::cli {

// Process exit codes shared by every subcommand, so CI can gate on them.
inline constexpr int exit_ok = 0;
inline constexpr int exit_config_error = 2;
inline constexpr int exit_guard_abort = 3;
inline constexpr int exit_tolerance_failure = 4;

inline constexpr const char* tool_version = "biplab 0.1.0";
inline constexpr int manifest_format = 1;

struct ConfigError : std::runtime_error {
    std::size_t line;  // 1-based source line; 0 when not tied to one
    ConfigError(std::size_t at, const std::string& msg)
        : std::runtime_error(msg), line(at) {}
};

std::uint64_t fnv1a64(const char* data, std::size_t size);

// Sectioned key/value text: [section] headers, key = value pairs, # or ;
// comments, blank lines ignored. Every entry remembers its source line so
// errors can point at it.
class Config {
  public:
    static Config parse_file(const std::string& path);
    static Config parse_text(const std::string& text, const std::string& origin);

    const std::string& origin() const { return origin_; }
    std::uint64_t content_hash() const { return hash_; }

    bool has(const std::string& section, const std::string& key) const;
    std::size_t line_of(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section,
                           const std::string& key) const;
    std::string get_string_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const;
    double get_number(const std::string& section, const std::string& key) const;
    double get_number_or(const std::string& section, const std::string& key,
                         double fallback) const;
    std::size_t get_count(const std::string& section,
                          const std::string& key) const;
    std::size_t get_count_or(const std::string& section, const std::string& key,
                             std::size_t fallback) const;
    std::uint64_t get_u64_or(const std::string& section, const std::string& key,
                             std::uint64_t fallback) const;
    std::vector<double> get_numbers_or(const std::string& section,
                                       const std::string& key,
                                       std::vector<double> fallback) const;

    // Rejects keys outside the given section -> keys table, anchored at the
    // offending line, so config typos fail instead of silently defaulting.
    void require_known(
        const std::map<std::string, std::vector<std::string>>& known) const;

  private:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };
    const Entry* find(const std::string& section, const std::string& key) const;
    const Entry& need(const std::string& section, const std::string& key) const;

    std::map<std::string, Entry> entries_;  // "section.key"
    std::string origin_;
    std::uint64_t hash_ = 0;
};

// A fully resolved run: model, truth, schedule, grids, outputs. Builder and
// schedule validation happens while loading, so a bad config fails before
// any computation starts.
struct RunConfig {
    models::ModelSpec model;
    std::size_t trunc_check = 0;
    int dimension = 1;
    spectral::ScaleParams params;  // scale exponents of the resolved model
    double epsilon = 0.0;
    synthetic::TruthSpec truth;
    contraction::TauSchedule schedule;
    std::vector<double> n_grid;
    std::vector<double> lambda_grid;
    std::vector<double> etas;
    std::vector<double> thetas;
    double prop_s = 0.0;
    std::size_t probes = 64;
    double truncation_tol = 0.01;
    double slope_tolerance = 0.05;
    double agreement_tol = 1e-8;
    double gamma_min = 1.0;
    double gamma_max = 4.0;
    std::size_t gamma_points = 61;
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    unsigned workers = 1;
    std::uint64_t config_hash = 0;
    std::string config_origin;
};

RunConfig load_run_config(const Config& cfg);

// CSV with a fixed header, LF line endings on every platform, and cells in
// full-precision scientific notation.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<double>& values);
    void row(const std::vector<std::string>& cells);
    void close();

  private:
    std::FILE* file_ = nullptr;
    std::size_t columns_ = 0;
    std::string path_;
};

std::string format_cell(double v);
void write_text_file(const std::string& path, const std::string& content);

// Subcommands; each writes its CSV, a summary file, and the run manifest
// into run.out_dir and returns a process exit code. data_path may be empty,
// in which case observations are synthesized from the seeded streams.
int cmd_posterior(const RunConfig& run, const std::string& data_path);
int cmd_rates(const RunConfig& run);
int cmd_bounds(const RunConfig& run);
int cmd_diagnostics(const RunConfig& run);
int cmd_figure_rates(const RunConfig& run);

// Configuration-free smoke check of the closed forms the commands rely on.
int run_self_test();

}  // namespace bip::cli
