#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kacdiff/bounds.hpp"
#include "kacdiff/config.hpp"

namespace kacdiff {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumerical = 2, kExitViolation = 3 };

struct CommandOutcome {
    int exit_code = kExitOk;
    std::vector<std::string> files;
    /// Human-readable lines for the terminal (warnings included).
    std::vector<std::string> messages;
};

// ---------------------------------------------------------------------------
// moments: Kac values with the closed-form bracket on the same grid

struct OverlayRow {
    double x = 0.0;
    int order = 1;
    /// Empty when the bound is not admissible at this order.
    std::optional<double> lower;
    double value = 0.0;
    std::optional<double> upper;
    bool bracketed() const;
};

/// Bounds for hitting from above at each (order >= 1, x). Inadmissible
/// orders leave the column empty and add a message naming the admissible
/// range.
std::vector<OverlayRow> bound_overlay(const MomentTable& table, const AssumptionParams& params,
                                      std::optional<double> p_star, std::vector<std::string>& warnings);

void write_overlay_csv(std::ostream& os, const std::vector<OverlayRow>& rows);
/// gnuplot blocks, one per order: `x lower value upper`.
void write_overlay_plot(std::ostream& os, const std::vector<OverlayRow>& rows);

// ---------------------------------------------------------------------------
// deviation: empirical frequencies against the assembled bounds

struct DeviationRow {
    double t = 0.0;
    double eps = 0.0;
    std::string variant;  // "sup" or "l1"
    double empirical = 0.0;
    double halfwidth = 0.0;
    /// Empty when (eps, p) is outside the bound's hypotheses.
    std::optional<DeviationBound> bound;
    /// Bound re-evaluated with every moment input raised by two standard
    /// errors.
    std::optional<double> bound_2se;
    std::string note;

    /// empirical > bound + halfwidth where the bound is below one.
    bool violation() const;
};

struct DeviationStudy {
    MomentEstimates estimates;
    double mu_f = 0.0;
    std::vector<DeviationCell> cells;
    std::vector<DeviationRow> rows;
    bool any_violation() const;
};

DeviationStudy run_deviation_study(const DiffusionModel& model, const ExperimentConfig& cfg);

void write_deviation_csv(std::ostream& os, const std::vector<DeviationRow>& rows);
/// gnuplot blocks, two series per (variant, eps): `t empirical bound`.
void write_deviation_plot(std::ostream& os, const std::vector<DeviationRow>& rows);
void write_constants_csv(std::ostream& os, const MomentEstimates& est, double mu_f);

// ---------------------------------------------------------------------------
// Subcommands. Files go to cfg.out_dir and start with header_line(cfg.hash()).
// Library errors propagate; the CLI maps them to exit codes.

CommandOutcome cmd_model(const ExperimentConfig& cfg);
CommandOutcome cmd_moments(const ExperimentConfig& cfg);
CommandOutcome cmd_deviation(const ExperimentConfig& cfg);
/// Quick built-in checks against closed forms; exit code 2 on any failure.
CommandOutcome cmd_selftest(unsigned threads = 1);

}  // namespace kacdiff
