#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "stewart_cbf/simulation.hpp"

namespace stewart_cbf::cli {

enum ExitCode : int { kOk = 0, kAuditFailed = 2, kConfigError = 3, kThresholdUnmet = 4 };

struct Overrides {
    std::optional<std::string> filter;
    std::optional<double> duration;
    std::optional<double> dt;
    std::optional<std::uint64_t> seed;
    std::optional<double> speedup_threshold;
};

struct CommandOptions {
    std::string config_path;  // empty: built-in reproduction scenario
    std::filesystem::path out_dir = "out";
    Overrides overrides;
    bool emit_normalized = false;
};

// Loads the config and applies the overrides, then validates. Throws ConfigError.
ScenarioConfig resolve_config(const CommandOptions& opts);

int run(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int compare(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int bench(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int check(const CommandOptions& opts, std::ostream& out, std::ostream& err);

// Per-axis deviation of two runs, normalized by the axis span over both runs.
struct AxisDeviation {
    double max_abs = 0.0;
    double span = 0.0;
    double relative = 0.0;
};
std::array<AxisDeviation, kDof> trajectory_deviation(const ScenarioLog& a, const ScenarioLog& b);

// Spans below this are treated as this value when normalizing.
inline constexpr double kMinAxisSpan = 1e-3;
inline constexpr double kDeviationLimit = 0.05;

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace stewart_cbf::cli
