#include "bip/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bip/dense.hpp"
#include "bip/posterior.hpp"

namespace bip::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::string key_path(const std::string& section, const std::string& key) {
    return section + "." + key;
}

double parse_double(const std::string& text, const std::string& where,
                    std::size_t line) {
    const char* begin = text.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw ConfigError(line, at_line(line) + where + ": '" + text +
                                    "' is not a number");
    return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& where,
                        std::size_t line) {
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(line, at_line(line) + where + ": '" + text +
                                    "' is not a nonnegative integer");
    return std::strtoull(text.c_str(), nullptr, 10);
}

std::string format_u64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(v));
    return buf;
}

std::string format_hex(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string format_compact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

const char* family_name(models::Family f) {
    switch (f) {
        case models::Family::diagonal: return "diagonal";
        case models::Family::galerkin_white_noise: return "galerkin_white_noise";
        case models::Family::galerkin_smooth_noise: return "galerkin_smooth_noise";
        case models::Family::general: return "general";
    }
    return "unknown";
}

const char* rule_name(contraction::ScheduleRule r) {
    using contraction::ScheduleRule;
    switch (r) {
        case ScheduleRule::contraction: return "contraction";
        case ScheduleRule::contraction_saturated: return "contraction_saturated";
        case ScheduleRule::mean_error: return "mean_error";
        case ScheduleRule::mean_error_saturated: return "mean_error_saturated";
        case ScheduleRule::mean_error_boundary: return "mean_error_boundary";
        case ScheduleRule::manual: return "manual";
    }
    return "unknown";
}

}  // namespace

std::uint64_t fnv1a64(const char* data, std::size_t size) {
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(0, "cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path);
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    cfg.hash_ = fnv1a64(text.data(), text.size());

    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::size_t end = nl == std::string::npos ? text.size() : nl;
        const std::string line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (nl == std::string::npos && line.empty()) break;

        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line[0] == '[') {
            if (line.back() != ']')
                throw ConfigError(line_no,
                                  at_line(line_no) + "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!valid_name(section))
                throw ConfigError(line_no, at_line(line_no) + "invalid section name '" +
                                               section + "'");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(line_no, at_line(line_no) +
                                           "expected 'key = value' or '[section]'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!valid_name(key))
            throw ConfigError(line_no,
                              at_line(line_no) + "invalid key name '" + key + "'");
        if (section.empty())
            throw ConfigError(line_no, at_line(line_no) + "key '" + key +
                                           "' appears outside any [section]");
        if (value.empty())
            throw ConfigError(line_no,
                              at_line(line_no) + "key '" + key + "' has no value");
        const std::string path = key_path(section, key);
        auto [it, inserted] = cfg.entries_.emplace(path, Entry{value, line_no});
        if (!inserted)
            throw ConfigError(line_no, at_line(line_no) + "key '" + path +
                                           "' duplicates line " +
                                           std::to_string(it->second.line));
    }
    return cfg;
}

const Config::Entry* Config::find(const std::string& section,
                                  const std::string& key) const {
    const auto it = entries_.find(key_path(section, key));
    return it == entries_.end() ? nullptr : &it->second;
}

const Config::Entry& Config::need(const std::string& section,
                                  const std::string& key) const {
    const Entry* e = find(section, key);
    if (!e)
        throw ConfigError(0, "missing required key '" + key_path(section, key) + "'");
    return *e;
}

bool Config::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

std::size_t Config::line_of(const std::string& section, const std::string& key) const {
    const Entry* e = find(section, key);
    return e ? e->line : 0;
}

std::string Config::get_string(const std::string& section,
                               const std::string& key) const {
    return need(section, key).value;
}

std::string Config::get_string_or(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
    const Entry* e = find(section, key);
    return e ? e->value : fallback;
}

double Config::get_number(const std::string& section, const std::string& key) const {
    const Entry& e = need(section, key);
    return parse_double(e.value, "key '" + key_path(section, key) + "'", e.line);
}

double Config::get_number_or(const std::string& section, const std::string& key,
                             double fallback) const {
    return has(section, key) ? get_number(section, key) : fallback;
}

std::size_t Config::get_count(const std::string& section,
                              const std::string& key) const {
    const Entry& e = need(section, key);
    return static_cast<std::size_t>(
        parse_u64(e.value, "key '" + key_path(section, key) + "'", e.line));
}

std::size_t Config::get_count_or(const std::string& section, const std::string& key,
                                 std::size_t fallback) const {
    return has(section, key) ? get_count(section, key) : fallback;
}

std::uint64_t Config::get_u64_or(const std::string& section, const std::string& key,
                                 std::uint64_t fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    return parse_u64(e->value, "key '" + key_path(section, key) + "'", e->line);
}

std::vector<double> Config::get_numbers_or(const std::string& section,
                                           const std::string& key,
                                           std::vector<double> fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    std::vector<double> out;
    std::size_t pos = 0;
    const std::string& v = e->value;
    while (pos <= v.size()) {
        const std::size_t comma = v.find(',', pos);
        const std::size_t end = comma == std::string::npos ? v.size() : comma;
        const std::string piece = trim(v.substr(pos, end - pos));
        out.push_back(parse_double(piece, "key '" + key_path(section, key) + "'",
                                   e->line));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

void Config::require_known(
    const std::map<std::string, std::vector<std::string>>& known) const {
    for (const auto& [path, entry] : entries_) {
        const std::size_t dot = path.find('.');
        const std::string section = path.substr(0, dot);
        const std::string key = path.substr(dot + 1);
        const auto sec = known.find(section);
        if (sec == known.end())
            throw ConfigError(entry.line, at_line(entry.line) + "unknown section '[" +
                                              section + "]'");
        const auto& keys = sec->second;
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw ConfigError(entry.line, at_line(entry.line) + "unknown key '" + key +
                                              "' in [" + section + "]");
    }
}

namespace {

models::MultiplierSpec parse_multiplier(const Config& cfg, const std::string& section,
                                        const std::string& key) {
    const std::string raw = cfg.get_string(section, key);
    const std::size_t line = cfg.line_of(section, key);
    const auto fail = [&]() -> models::MultiplierSpec {
        throw ConfigError(line, at_line(line) + "key '" + key_path(section, key) +
                                    "': expected none, constant:<c>, or "
                                    "raised_cosine:<c>,<m>, got '" +
                                    raw + "'");
    };
    if (raw == "none") return models::MultiplierSpec::constant(0.0);
    const std::size_t colon = raw.find(':');
    if (colon == std::string::npos) return fail();
    const std::string kind = trim(raw.substr(0, colon));
    const std::string args = trim(raw.substr(colon + 1));
    const std::string where = "key '" + key_path(section, key) + "'";
    if (kind == "constant") return models::MultiplierSpec::constant(
        parse_double(args, where, line));
    if (kind == "raised_cosine") {
        const std::size_t comma = args.find(',');
        if (comma == std::string::npos) return fail();
        const double c = parse_double(trim(args.substr(0, comma)), where, line);
        const std::uint64_t m =
            parse_u64(trim(args.substr(comma + 1)), where, line);
        if (m == 0)
            throw ConfigError(line, at_line(line) + where +
                                        ": raised_cosine frequency must be >= 1");
        return models::MultiplierSpec::raised_cosine(c, static_cast<int>(m));
    }
    return fail();
}

const std::map<std::string, std::vector<std::string>>& known_keys() {
    static const std::map<std::string, std::vector<std::string>> table{
        {"model",
         {"family", "trunc", "trunc_check", "basis", "alpha", "t_exp", "r_exp",
          "ell", "beta", "q", "r", "tau", "n", "dimension"}},
        {"truth", {"gamma", "margin", "amplitude"}},
        {"schedule",
         {"rule", "gamma", "delta", "s0", "epsilon", "p", "thetas", "prop_s",
          "etas", "slope_tolerance", "truncation_tol", "agreement_tol"}},
        {"grids",
         {"n_min", "n_max", "n_points", "lambda_min", "lambda_max",
          "lambda_points", "gamma_min", "gamma_max", "gamma_points", "probes"}},
        {"output", {"dir", "seed"}},
    };
    return table;
}

models::ModelSpec load_model(const Config& cfg) {
    models::ModelSpec spec;
    const std::string fam = cfg.get_string_or("model", "family", "diagonal");
    if (fam == "diagonal") spec.family = models::Family::diagonal;
    else if (fam == "galerkin_white_noise")
        spec.family = models::Family::galerkin_white_noise;
    else if (fam == "galerkin_smooth_noise")
        spec.family = models::Family::galerkin_smooth_noise;
    else if (fam == "general") spec.family = models::Family::general;
    else {
        const std::size_t line = cfg.line_of("model", "family");
        throw ConfigError(line, at_line(line) + "unknown model family '" + fam + "'");
    }

    spec.trunc = cfg.get_count("model", "trunc");
    if (spec.trunc == 0) {
        const std::size_t line = cfg.line_of("model", "trunc");
        throw ConfigError(line, at_line(line) + "trunc must be >= 1");
    }

    const std::string basis = cfg.get_string_or("model", "basis", "abstract");
    if (basis == "abstract") spec.basis = spectral::Basis::abstract_power;
    else if (basis == "dirichlet") spec.basis = spectral::Basis::dirichlet_sine;
    else {
        const std::size_t line = cfg.line_of("model", "basis");
        throw ConfigError(line, at_line(line) + "unknown basis '" + basis +
                                    "' (abstract or dirichlet)");
    }

    const auto need_multiplier = [&](const char* key) {
        if (!cfg.has("model", key))
            throw ConfigError(0, std::string("missing required key 'model.") + key +
                                     "' for family " + fam);
        return parse_multiplier(cfg, "model", key);
    };

    spec.alpha = cfg.get_number_or("model", "alpha", 1.0);
    switch (spec.family) {
        case models::Family::diagonal:
            spec.t_exp = cfg.get_number_or("model", "t_exp", 0.5);
            spec.r_exp = cfg.get_number_or("model", "r_exp", 0.5);
            break;
        case models::Family::galerkin_white_noise:
            spec.q = need_multiplier("q");
            break;
        case models::Family::galerkin_smooth_noise:
            spec.q = need_multiplier("q");
            spec.r = need_multiplier("r");
            break;
        case models::Family::general:
            spec.ell = cfg.get_number("model", "ell");
            spec.beta = cfg.get_number("model", "beta");
            spec.q = need_multiplier("q");
            spec.r = need_multiplier("r");
            break;
    }
    spec.tau = cfg.get_number_or("model", "tau", 1.0);
    spec.n = cfg.get_number_or("model", "n", 1.0);
    return spec;
}

contraction::ScheduleRule parse_rule(const Config& cfg) {
    using contraction::ScheduleRule;
    const std::string rule = cfg.get_string_or("schedule", "rule", "contraction");
    if (rule == "contraction") return ScheduleRule::contraction;
    if (rule == "contraction_saturated") return ScheduleRule::contraction_saturated;
    if (rule == "mean_error") return ScheduleRule::mean_error;
    if (rule == "mean_error_saturated") return ScheduleRule::mean_error_saturated;
    if (rule == "mean_error_boundary") return ScheduleRule::mean_error_boundary;
    if (rule == "manual") return ScheduleRule::manual;
    const std::size_t line = cfg.line_of("schedule", "rule");
    throw ConfigError(line, at_line(line) + "unknown schedule rule '" + rule + "'");
}

}  // namespace

RunConfig load_run_config(const Config& cfg) {
    cfg.require_known(known_keys());

    RunConfig run;
    run.config_hash = cfg.content_hash();
    run.config_origin = cfg.origin();
    run.model = load_model(cfg);

    run.trunc_check = cfg.get_count_or("model", "trunc_check", 2 * run.model.trunc);
    if (run.trunc_check != 2 * run.model.trunc) {
        const std::size_t line = cfg.line_of("model", "trunc_check");
        throw ConfigError(line, at_line(line) + "trunc_check must equal 2 * trunc (got " +
                                    format_u64(run.trunc_check) + ", trunc " +
                                    format_u64(run.model.trunc) + ")");
    }
    run.dimension = static_cast<int>(cfg.get_count_or("model", "dimension", 1));
    if (run.dimension < 1) {
        const std::size_t line = cfg.line_of("model", "dimension");
        throw ConfigError(line, at_line(line) + "dimension must be >= 1");
    }

    // Scale exponents do not depend on the truncation level, so probe them
    // on a small build before committing to the full one.
    spectral::ScaleParams params;
    try {
        models::ModelSpec probe = run.model;
        probe.trunc = std::min<std::size_t>(run.model.trunc, 8);
        probe.tau = 1.0;
        probe.n = 1.0;
        params = models::build_from_spec(probe).params;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(0, std::string("model: ") + e.what());
    }
    run.params = params;

    run.truth.gamma = cfg.get_number_or("truth", "gamma", 1.0);
    run.truth.margin_delta = cfg.get_number_or("truth", "margin", 0.1);
    run.truth.amplitude = cfg.get_number_or("truth", "amplitude", 1.0);

    const contraction::ScheduleRule rule = parse_rule(cfg);
    const double gamma = cfg.get_number_or("schedule", "gamma", run.truth.gamma);
    const double delta = cfg.get_number_or("schedule", "delta", params.delta);
    const double s0 = cfg.get_number_or("schedule", "s0", params.s0);
    run.epsilon = cfg.get_number_or("schedule", "epsilon", 0.0);
    try {
        if (rule == contraction::ScheduleRule::manual)
            run.schedule = contraction::manual_schedule(cfg.get_number("schedule", "p"));
        else
            run.schedule = contraction::tau_schedule(rule, gamma, delta, s0,
                                                     run.epsilon);
    } catch (const std::invalid_argument& e) {
        const std::size_t line = cfg.line_of("schedule", "rule");
        throw ConfigError(line, std::string("schedule: ") + e.what());
    }

    run.etas = cfg.get_numbers_or("schedule", "etas", {});
    run.thetas = cfg.get_numbers_or("schedule", "thetas", {0.0, 0.5, 1.0});
    run.prop_s = cfg.get_number_or("schedule", "prop_s", s0 + 0.1);
    run.slope_tolerance = cfg.get_number_or("schedule", "slope_tolerance", 0.05);
    if (run.slope_tolerance <= 0.0) {
        const std::size_t line = cfg.line_of("schedule", "slope_tolerance");
        throw ConfigError(line, at_line(line) + "slope_tolerance must be positive");
    }
    run.truncation_tol = cfg.get_number_or("schedule", "truncation_tol", 0.01);
    run.agreement_tol = cfg.get_number_or("schedule", "agreement_tol", 1e-8);

    try {
        run.n_grid = contraction::geometric_grid(
            cfg.get_number_or("grids", "n_min", 1e3),
            cfg.get_number_or("grids", "n_max", 1e9),
            cfg.get_count_or("grids", "n_points", 7));
        run.lambda_grid = contraction::geometric_grid(
            cfg.get_number_or("grids", "lambda_min", 1.0),
            cfg.get_number_or("grids", "lambda_max", 1e-6),
            cfg.get_count_or("grids", "lambda_points", 8));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(0, std::string("grids: ") + e.what());
    }
    run.gamma_min = cfg.get_number_or("grids", "gamma_min", 1.0);
    run.gamma_max = cfg.get_number_or("grids", "gamma_max", 4.0);
    run.gamma_points = cfg.get_count_or("grids", "gamma_points", 61);
    run.probes = cfg.get_count_or("grids", "probes", 64);

    run.out_dir = cfg.get_string_or("output", "dir", "out");
    run.seed = cfg.get_u64_or("output", "seed", 42);
    return run;
}

std::string format_cell(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17e", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : columns_(header.size()), path_(path) {
    if (header.empty()) throw std::invalid_argument("csv needs at least one column");
    file_ = std::fopen(path.c_str(), "wb");
    if (!file_) throw std::runtime_error("cannot open '" + path + "' for writing");
    row(header);
}

CsvWriter::~CsvWriter() {
    if (file_) std::fclose(file_);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_)
        throw std::invalid_argument("csv row has " + std::to_string(cells.size()) +
                                    " cells, expected " + std::to_string(columns_));
    if (!file_) throw std::runtime_error("csv writer for '" + path_ + "' is closed");
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    line += '\n';
    std::fwrite(line.data(), 1, line.size(), file_);
}

void CsvWriter::row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_cell(v));
    row(cells);
}

void CsvWriter::close() {
    if (!file_) return;
    const bool bad = std::ferror(file_) != 0;
    const int rc = std::fclose(file_);
    file_ = nullptr;
    if (bad || rc != 0)
        throw std::runtime_error("failed to write '" + path_ + "'");
}

void write_text_file(const std::string& path, const std::string& content) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    const std::size_t written = std::fwrite(content.data(), 1, content.size(), f);
    const int rc = std::fclose(f);
    if (written != content.size() || rc != 0)
        throw std::runtime_error("failed to write '" + path + "'");
}

namespace {

std::string out_path(const RunConfig& run, const std::string& name) {
    return run.out_dir + "/" + name;
}

void ensure_out_dir(const RunConfig& run) {
    std::error_code ec;
    std::filesystem::create_directories(run.out_dir, ec);
    if (ec)
        throw ConfigError(0, "cannot create output directory '" + run.out_dir + "'");
}

// Deliberately free of worker counts and timestamps: reruns of the same
// config and seed must leave byte-identical artifacts.
void write_manifest(const RunConfig& run) {
    std::ostringstream ss;
    ss << "format = " << manifest_format << "\n";
    ss << "tool = " << tool_version << "\n";
    ss << "config = " << run.config_origin << "\n";
    ss << "config_hash = " << format_hex(run.config_hash) << "\n";
    ss << "seed = " << format_u64(run.seed) << "\n";
    ss << "family = " << family_name(run.model.family) << "\n";
    ss << "trunc = " << format_u64(run.model.trunc) << "\n";
    ss << "trunc_check = " << format_u64(run.trunc_check) << "\n";
    write_text_file(out_path(run, "manifest.txt"), ss.str());
}

spectral::CoefVector read_data_file(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(0, "cannot read data file '" + path + "'");
    spectral::CoefVector values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string token = trim(line);
        if (token.empty() || token[0] == '#') continue;
        values.push_back(
            parse_double(token, "data file '" + path + "'", line_no));
    }
    if (values.size() != expected)
        throw ConfigError(0, "data file '" + path + "' has " +
                                 std::to_string(values.size()) +
                                 " values, the model needs " +
                                 std::to_string(expected));
    return values;
}

double max_abs_diff(const spectral::CoefVector& a, const spectral::CoefVector& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        m = std::max(m, std::fabs(a[k] - b[k]));
    return m;
}

double max_abs(const spectral::CoefVector& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
}

double relative_dev(double diff, double scale) {
    return scale == 0.0 ? diff : diff / scale;
}

const char* status_name(bool pass) { return pass ? "pass" : "fail"; }

}  // namespace

int cmd_posterior(const RunConfig& run, const std::string& data_path) {
    const models::ProblemSetup setup = models::build_from_spec(run.model);

    spectral::CoefVector y;
    std::string data_desc;
    if (!data_path.empty()) {
        y = read_data_file(data_path, setup.size());
        data_desc = "file " + data_path;
    } else {
        const spectral::CoefVector truth = synthetic::make_truth(run.truth, setup);
        y = synthetic::generate_data(setup, truth, synthetic::RngSeed{run.seed}, 0);
        data_desc = "synthetic (seed " + format_u64(run.seed) + ")";
    }

    const posterior::GaussianPosterior post = posterior::posterior(setup, y);
    const spectral::CoefVector mean_alt = posterior::posterior_mean_covform(setup, y);
    const dense::Matrix cov_alt =
        posterior::posterior_covariance_covform(setup).to_matrix();

    const double mean_dev =
        relative_dev(max_abs_diff(post.mean, mean_alt),
                     std::max(max_abs(post.mean), max_abs(mean_alt)));
    dense::Matrix cov_diff = post.covariance;
    for (std::size_t i = 0; i < cov_diff.size(); ++i)
        for (std::size_t j = 0; j < cov_diff.size(); ++j)
            cov_diff(i, j) -= cov_alt(i, j);
    const double cov_dev = relative_dev(
        cov_diff.max_abs(), std::max(post.covariance.max_abs(), cov_alt.max_abs()));
    const bool pass = mean_dev <= run.agreement_tol && cov_dev <= run.agreement_tol;

    ensure_out_dir(run);
    CsvWriter csv(out_path(run, "posterior.csv"), {"index", "mean", "cov_diag"});
    for (std::size_t k = 0; k < setup.size(); ++k)
        csv.row(std::vector<std::string>{format_u64(k + 1), format_cell(post.mean[k]),
                                         format_cell(post.covariance(k, k))});
    csv.close();

    std::ostringstream ss;
    ss << "command = posterior\n";
    ss << "family = " << family_name(run.model.family) << "\n";
    ss << "trunc = " << format_u64(run.model.trunc) << "\n";
    ss << "tau = " << format_cell(setup.tau) << "\n";
    ss << "n = " << format_cell(setup.n) << "\n";
    ss << "lambda = " << format_cell(setup.lambda) << "\n";
    ss << "data = " << data_desc << "\n";
    ss << "trace_cov = " << format_cell(post.trace_cov) << "\n";
    ss << "mean_agreement = " << format_cell(mean_dev) << "\n";
    ss << "cov_agreement = " << format_cell(cov_dev) << "\n";
    ss << "agreement_tol = " << format_cell(run.agreement_tol) << "\n";
    ss << "status = " << status_name(pass) << "\n";
    write_text_file(out_path(run, "posterior_summary.txt"), ss.str());
    write_manifest(run);

    std::printf("posterior: trace %.6e, dual-form agreement %.3e / %.3e (tol %.3e), %s\n",
                post.trace_cov, mean_dev, cov_dev, run.agreement_tol,
                status_name(pass));
    return pass ? exit_ok : exit_tolerance_failure;
}

int cmd_rates(const RunConfig& run) {
    contraction::RateExperiment ex;
    ex.model = run.model;
    ex.truth = run.truth;
    ex.schedule = run.schedule;
    ex.n_grid = run.n_grid;
    ex.etas = run.etas;
    ex.truncation_tol = run.truncation_tol;
    ex.workers = run.workers;

    contraction::RateResult res;
    try {
        res = contraction::run_rate_experiment(ex);
    } catch (const contraction::TruncationError& e) {
        std::fprintf(stderr, "rates: %s\n", e.what());
        return exit_guard_abort;
    }

    const bool has_target = std::isfinite(res.theoretical_exponent);
    const double target_slope = -2.0 * res.theoretical_exponent;
    const bool pass =
        !has_target || std::fabs(res.fitted_slope - target_slope) <= run.slope_tolerance;

    ensure_out_dir(run);
    std::vector<std::string> header{"n",        "tau",        "lambda", "bias_sq",
                                    "variance", "trace_term", "spc"};
    for (double eta : res.etas) header.push_back("mise_eta_" + format_compact(eta));
    CsvWriter csv(out_path(run, "rates.csv"), header);
    for (std::size_t i = 0; i < res.n_grid.size(); ++i) {
        std::vector<double> row{res.n_grid[i],
                                res.tau_grid[i],
                                models::lambda_of(res.n_grid[i], res.tau_grid[i]),
                                res.terms[i].bias_sq,
                                res.terms[i].variance,
                                res.terms[i].trace_term,
                                res.terms[i].spc};
        for (double w : res.weighted_errors[i]) row.push_back(w);
        csv.row(row);
    }
    csv.close();

    std::ostringstream ss;
    ss << "command = rates\n";
    ss << "family = " << family_name(run.model.family) << "\n";
    ss << "trunc = " << format_u64(run.model.trunc) << "\n";
    ss << "schedule_rule = " << rule_name(run.schedule.rule) << "\n";
    ss << "schedule_p = " << format_cell(run.schedule.p) << "\n";
    ss << "truth_gamma = " << format_cell(run.truth.gamma) << "\n";
    ss << "n_min = " << format_cell(res.n_grid.front()) << "\n";
    ss << "n_max = " << format_cell(res.n_grid.back()) << "\n";
    ss << "n_points = " << format_u64(res.n_grid.size()) << "\n";
    ss << "fitted_slope = " << format_cell(res.fitted_slope) << "\n";
    ss << "slope_stderr = "
       << (res.stderr_defined ? format_cell(res.slope_stderr) : "undefined") << "\n";
    ss << "theoretical_exponent = "
       << (has_target ? format_cell(res.theoretical_exponent) : "none") << "\n";
    ss << "target_slope = " << (has_target ? format_cell(target_slope) : "none")
       << "\n";
    ss << "slope_tolerance = " << format_cell(run.slope_tolerance) << "\n";
    ss << "truncation_drift = " << format_cell(res.truncation_drift) << "\n";
    ss << "truncation_tol = " << format_cell(run.truncation_tol) << "\n";
    ss << "noise_norm_sq = " << format_cell(res.noise_norm_sq) << "\n";
    ss << "truth_norm_sq = " << format_cell(res.truth_norm_sq) << "\n";
    ss << "noise_norm_growth = " << format_cell(res.noise_norm_growth) << "\n";
    ss << "truth_norm_growth = " << format_cell(res.truth_norm_growth) << "\n";
    ss << "status = " << status_name(pass) << "\n";
    write_text_file(out_path(run, "rates_summary.txt"), ss.str());
    write_manifest(run);

    if (has_target)
        std::printf("rates: slope %.4f, target %.4f +/- %.2f, %s\n", res.fitted_slope,
                    target_slope, run.slope_tolerance, status_name(pass));
    else
        std::printf("rates: slope %.4f (manual schedule, no target)\n",
                    res.fitted_slope);
    return pass ? exit_ok : exit_tolerance_failure;
}

int cmd_bounds(const RunConfig& run) {
    const double gap = run.params.beta - 2.0 * run.params.ell;
    const double sandwich_exponent =
        (2.0 * run.params.ell - run.params.beta + run.prop_s) / run.params.delta;
    const models::ModelSpec spec = run.model;
    const contraction::SetupFamily family = [spec](double lambda) {
        models::ModelSpec s = spec;
        s.tau = 1.0;
        s.n = 1.0 / lambda;
        return models::build_from_spec(s);
    };

    ensure_out_dir(run);
    CsvWriter csv(out_path(run, "bounds.csv"),
                  {"lambda", "theta", "measured_norm", "reference"});
    std::ostringstream ss;
    ss << "command = bounds\n";
    ss << "family = " << family_name(run.model.family) << "\n";
    ss << "trunc = " << format_u64(run.model.trunc) << "\n";
    ss << "lambda_min = " << format_cell(run.lambda_grid.front()) << "\n";
    ss << "lambda_max = " << format_cell(run.lambda_grid.back()) << "\n";
    ss << "prop_s = " << format_cell(run.prop_s) << "\n";
    ss << "slope_tolerance = " << format_cell(run.slope_tolerance) << "\n";

    bool all_pass = true;
    for (double theta : run.thetas) {
        const contraction::BoundCurve main_curve = contraction::operator_bound_probe(
            family, theta, 1.0, run.prop_s, run.lambda_grid, run.workers);
        const contraction::BoundCurve gap_curve = contraction::operator_bound_probe(
            family, theta, gap, run.prop_s, run.lambda_grid, run.workers);

        for (std::size_t i = 0; i < run.lambda_grid.size(); ++i)
            csv.row(std::vector<double>{
                run.lambda_grid[i], theta, main_curve.weighted_norms[i],
                std::pow(run.lambda_grid[i], -(theta + 1.0) / 2.0)});

        const double smoothing_target = -(theta + 1.0) / 2.0;
        const double gap_target = -theta / 2.0;
        const bool smoothing_ok =
            std::fabs(main_curve.weighted_fit.slope - smoothing_target) <=
            run.slope_tolerance;
        const bool gap_ok = std::fabs(gap_curve.weighted_fit.slope - gap_target) <=
                            run.slope_tolerance;
        const bool sandwich_ok = main_curve.sandwich_fit.slope >=
                                 -sandwich_exponent - run.slope_tolerance;
        all_pass = all_pass && smoothing_ok && gap_ok && sandwich_ok;

        const std::string tag = "theta_" + format_compact(theta);
        ss << tag << "_smoothing_slope = " << format_cell(main_curve.weighted_fit.slope)
           << "\n";
        ss << tag << "_smoothing_target = " << format_cell(smoothing_target) << "\n";
        ss << tag << "_gap_slope = " << format_cell(gap_curve.weighted_fit.slope)
           << "\n";
        ss << tag << "_gap_target = " << format_cell(gap_target) << "\n";
        ss << tag << "_sandwich_slope = " << format_cell(main_curve.sandwich_fit.slope)
           << "\n";
        ss << tag << "_sandwich_floor = " << format_cell(-sandwich_exponent) << "\n";
        ss << tag << "_status = "
           << status_name(smoothing_ok && gap_ok && sandwich_ok) << "\n";

        std::printf(
            "bounds: theta %.2f smoothing %.4f (target %.4f), gap %.4f (target "
            "%.4f), sandwich %.4f (floor %.4f)\n",
            theta, main_curve.weighted_fit.slope, smoothing_target,
            gap_curve.weighted_fit.slope, gap_target, main_curve.sandwich_fit.slope,
            -sandwich_exponent);
    }
    csv.close();

    ss << "status = " << status_name(all_pass) << "\n";
    write_text_file(out_path(run, "bounds_summary.txt"), ss.str());
    write_manifest(run);

    std::printf("bounds: %s\n", status_name(all_pass));
    return all_pass ? exit_ok : exit_tolerance_failure;
}

int cmd_diagnostics(const RunConfig& run) {
    const models::ProblemSetup setup = models::build_from_spec(run.model);
    const models::AssumptionReport report =
        models::verify_assumptions(setup, run.probes, run.trunc_check);

    ensure_out_dir(run);
    CsvWriter csv(out_path(run, "diagnostics.csv"),
                  {"name", "min_ratio", "max_ratio", "max_ratio_fine", "drift",
                   "pass"});
    for (const models::AssumptionStat& stat : report.stats)
        csv.row(std::vector<std::string>{
            stat.name, format_cell(stat.min_ratio), format_cell(stat.max_ratio),
            format_cell(stat.max_ratio_fine), format_cell(stat.drift),
            stat.pass ? "1" : "0"});
    csv.close();

    std::ostringstream ss;
    ss << "command = diagnostics\n";
    ss << "family = " << family_name(run.model.family) << "\n";
    ss << "trunc_coarse = " << format_u64(report.trunc_coarse) << "\n";
    ss << "trunc_fine = " << format_u64(report.trunc_fine) << "\n";
    ss << "probes = " << format_u64(report.probes) << "\n";
    for (const models::AssumptionStat& stat : report.stats) {
        ss << stat.name << " = ratios [" << format_cell(stat.min_ratio) << ", "
           << format_cell(stat.max_ratio) << "], fine max "
           << format_cell(stat.max_ratio_fine) << ", drift "
           << format_cell(stat.drift) << ", "
           << (stat.pass ? "stable" : "drifting") << "\n";
    }
    ss << "status = " << (report.all_pass() ? "stable" : "drifting") << "\n";
    write_text_file(out_path(run, "diagnostics_summary.txt"), ss.str());
    write_manifest(run);

    std::printf("diagnostics: %zu checks at trunc %zu vs %zu, %s\n",
                report.stats.size(), report.trunc_coarse, report.trunc_fine,
                report.all_pass() ? "stable" : "drifting");
    return exit_ok;
}

int cmd_figure_rates(const RunConfig& run) {
    if (run.gamma_points < 2)
        throw ConfigError(0, "grids: gamma_points must be >= 2");
    if (!(run.gamma_max > run.gamma_min))
        throw ConfigError(0, "grids: gamma_max must exceed gamma_min");
    if (run.gamma_min < 1.0)
        throw ConfigError(0, "grids: gamma_min must be >= 1");

    contraction::ExponentQuery query;
    query.delta = run.params.delta;
    query.s0 = run.params.s0;
    query.epsilon = run.epsilon;
    query.d = run.dimension;
    double onset = contraction::saturation_onset(run.params.delta);
    switch (run.model.family) {
        case models::Family::galerkin_white_noise:
            query.target = contraction::RateTarget::white_noise_model;
            onset = 3.0;
            break;
        case models::Family::galerkin_smooth_noise:
            query.target = contraction::RateTarget::smooth_noise_model;
            onset = 2.75;
            break;
        default:
            query.target = contraction::RateTarget::contraction;
            break;
    }

    ensure_out_dir(run);
    CsvWriter csv(out_path(run, "figure_rates.csv"), {"gamma", "exponent"});
    const double step = (run.gamma_max - run.gamma_min) / (double)(run.gamma_points - 1);
    for (std::size_t i = 0; i < run.gamma_points; ++i) {
        query.gamma = i + 1 == run.gamma_points ? run.gamma_max
                                                : run.gamma_min + (double)i * step;
        csv.row(std::vector<double>{query.gamma,
                                    contraction::theoretical_exponent(query)});
    }
    csv.close();

    query.gamma = std::min(run.gamma_max, onset);
    const double plateau = contraction::theoretical_exponent(query);

    std::ostringstream ss;
    ss << "command = figure-rates\n";
    ss << "family = " << family_name(run.model.family) << "\n";
    ss << "delta = " << format_cell(run.params.delta) << "\n";
    ss << "s0 = " << format_cell(run.params.s0) << "\n";
    ss << "epsilon = " << format_cell(run.epsilon) << "\n";
    ss << "gamma_min = " << format_cell(run.gamma_min) << "\n";
    ss << "gamma_max = " << format_cell(run.gamma_max) << "\n";
    ss << "saturation_onset = " << format_cell(onset) << "\n";
    ss << "plateau_exponent = " << format_cell(plateau) << "\n";
    ss << "note = minimax comparison curve omitted; only the schedule-implied "
          "exponent is tabulated\n";
    write_text_file(out_path(run, "figure_rates_summary.txt"), ss.str());
    write_manifest(run);

    std::printf("figure-rates: %zu points on [%.2f, %.2f], plateau %.4f beyond "
                "gamma %.2f\n",
                run.gamma_points, run.gamma_min, run.gamma_max, plateau, onset);
    return exit_ok;
}

int run_self_test() {
    int passed = 0, total = 0;
    const auto check = [&](bool ok, const char* what) {
        ++total;
        passed += ok ? 1 : 0;
        std::printf("[%s] %s\n", ok ? "ok" : "fail", what);
    };

    const models::ProblemSetup scalar =
        models::build_diagonal(1, 1.0, 0.5, 0.5, 1.0, 1.0);
    const posterior::GaussianPosterior post =
        posterior::posterior(scalar, spectral::CoefVector{1.0});
    check(std::fabs(post.mean[0] - 0.5) <= 1e-12 &&
              std::fabs(post.trace_cov - 0.5) <= 1e-12,
          "scalar posterior mean and trace match the closed form");

    const std::vector<double> xs = contraction::geometric_grid(1e3, 1e9, 7);
    std::vector<double> ys;
    for (double x : xs) ys.push_back(3.0 * std::pow(x, -0.5));
    const contraction::SlopeFit fit = contraction::fit_loglog_slope(xs, ys);
    check(std::fabs(fit.slope + 0.5) <= 1e-12 && fit.stderr_defined &&
              fit.stderr_value <= 1e-10,
          "log-log fit recovers an exact power law");

    const contraction::TauSchedule sched = contraction::tau_schedule(
        contraction::ScheduleRule::contraction, 1.0, 1.5, 0.5, 0.0);
    check(std::fabs(sched.p + 0.125) <= 1e-15,
          "reference schedule exponent p = -1/8");

    contraction::ExponentQuery query;
    query.target = contraction::RateTarget::contraction;
    query.gamma = 1.0;
    query.delta = 1.5;
    query.s0 = 0.5;
    check(std::fabs(contraction::theoretical_exponent(query) - 0.25) <= 1e-15,
          "reference contraction exponent e = 1/4");

    std::printf("self-test: %d/%d passed\n", passed, total);
    return passed == total ? exit_ok : exit_tolerance_failure;
}

}  // namespace bip::cli
