#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kacdiff/assumptions.hpp"
#include "kacdiff/diffusion_model.hpp"
#include "kacdiff/kac_moments.hpp"
#include "kacdiff/simulator.hpp"

namespace kacdiff {

/// INI-style text: `[section]` headers, `key = value` lines, `#` or `;`
/// comments. Section names are case-insensitive, keys are not. Syntax errors
/// throw ParseError with 1-based line and column.
class ConfigFile {
public:
    struct Entry {
        std::string value;
        int line = 0;
        int column = 0;  // of the first character of the value
        int key_column = 0;
    };
    using Section = std::map<std::string, Entry>;

    static ConfigFile parse(std::string_view text);

    bool has(const std::string& section) const { return sections_.count(section) > 0; }
    /// Section name -> line of its header.
    const std::map<std::string, int>& section_lines() const { return section_lines_; }
    const Section* section(const std::string& name) const;
    using KeyFilter = std::function<bool(const std::string& section, const std::string& key)>;
    /// Normalized `[section]\nkey=value` text, sections and keys sorted.
    std::string canonical(const KeyFilter& keep = {}) const;
    void set(const std::string& section, const std::string& key, const std::string& value);

private:
    std::map<std::string, Section> sections_;
    std::map<std::string, int> section_lines_;
};

struct ModelConfig {
    /// ou, brownian, bounded_drift or custom.
    std::string family = "custom";
    double theta = 1.0;
    std::string drift;
    std::string diffusion;
    std::map<std::string, double, std::less<>> constants;

    DiffusionSpec spec() const;
};

struct MomentsConfig {
    MomentTarget side = MomentTarget::FromAbove;
    double level = 0.0;  // one-sided target
    double a = 0.0, b = 1.0;  // exit interval
    int order = 1;
    std::vector<double> x_grid;
    MomentOptions options;
};

/// Test function f. `indicator(lo, hi)` or an expression in x.
struct FunctionConfig {
    std::string text;
    RealFunction f;
    /// sup |f|: exact for indicators, else the `f_sup` key.
    std::optional<double> sup;
    std::optional<std::pair<double, double>> support;
};

enum class BoundVariant { Sup, L1, Both };

struct DeviationConfig {
    FunctionConfig f;
    double p = 2.0;
    std::vector<double> t_grid;
    std::vector<double> eps_grid;
    BoundVariant variant = BoundVariant::Both;
    std::optional<double> bdg;
    std::optional<double> mu_f;
    std::vector<double> cf_starts;
    std::size_t cf_replicas = 2000;
    /// Run for the moment inputs; defaults to the simulation replicas and the
    /// largest t.
    std::optional<std::size_t> constants_replicas;
    std::optional<double> constants_horizon;
};

struct ExperimentConfig {
    ConfigFile file;
    ModelConfig model;
    std::optional<AssumptionParams> assumptions;
    std::optional<double> p_star;
    std::optional<MomentsConfig> moments;
    SimConfig sim;
    std::optional<DeviationConfig> deviation;
    std::string out_dir = "out";

    /// FNV-1a of the canonical text, overrides included, output directory and
    /// thread count excluded.
    std::string hash() const;

    void override_seed(std::uint64_t seed);
    void override_replicas(std::size_t replicas);
    void override_out_dir(const std::string& dir);
    void override_tolerance(double tol);
    void override_threads(unsigned threads);
};

/// Grids: `v1, v2, ...`, `linspace(lo, hi, n)` or `geomspace(lo, hi, n)`.
std::vector<double> parse_grid(const std::string& text, int line = 0, int column = 0);

/// ParseError for syntax, ConfigError for missing or inconsistent values.
ExperimentConfig parse_experiment(std::string_view text);
ExperimentConfig load_experiment(const std::string& path);

}  // namespace kacdiff
