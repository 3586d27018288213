#pragma once
// Batch commands behind the eptest executable. Each returns a process exit
// status: 0 success, 2 input error, 3 usage error.

#include "eptest/procedures.hpp"
#include "eptest/sim.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace eptest::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitUsage = 3;

inline constexpr const char* kVersion = "0.1.0";

struct AdjustRequest {
    std::string input;
    std::string procedure = "ep-bh";
    double alpha = 0.1;
    double tau = 0.5;
    std::string calibrator = "sqrt";
    double lambda_shift = 0.0;
    std::string output;
};

// Reads id,p,e and writes id,p,e,adjusted,rejected plus a JSON summary
// next to the output (extension replaced by .summary.json).
int cmd_adjust(const AdjustRequest& req, std::ostream& err);

struct SimulateRequest {
    std::string config;
    std::string output;
    std::optional<std::size_t> reps;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> parallelism;
};

// Campaign CSV at output, manifest at output with extension .manifest.json.
int cmd_simulate(const SimulateRequest& req, std::ostream& err);

struct CombineRequest {
    std::string input;
    std::string mode;  // quotient | product | mean | bonferroni | moderated-t
    std::optional<std::string> calibrator;
    double lambda = 0.5;
    std::string output;
};

int cmd_combine(const CombineRequest& req, std::ostream& err);

// Parsed simulate config.
struct CampaignSpec {
    std::vector<Scenario> scenarios;
    std::vector<Procedure> procedures;
    CampaignConfig config;
};

// Config problem naming the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// INI file: a [campaign] section (procedures, alpha, tau, calibrator,
// merging, replicates, seed, parallelism) and any number of scenario
// sections named ttest, microarray or adversarial (optionally suffixed, e.g.
// [ttest.sweep]). Scenario keys mirror the scenario fields; a
// comma-separated value expands into one scenario per entry.
CampaignSpec load_campaign_spec(const std::string& path);

std::string sibling_path(const std::string& output, const std::string& suffix);

// Full command-line entry point.
int run_cli(int argc, char** argv);

}  // namespace eptest::cli
