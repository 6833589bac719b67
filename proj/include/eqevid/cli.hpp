#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "eqevid/ensemble.hpp"
#include "eqevid/harness.hpp"
#include "eqevid/toymodel.hpp"
#include "eqevid/trainer.hpp"

namespace eqevid {

/// Everything a run reads from the --config JSON document. Sections:
/// "dataset", "split", "train", "eval", "ensemble"; missing keys keep defaults.
struct RunConfig {
    DatasetSpec dataset;
    SplitRule split;
    TrainConfig train;
    EvalOptions eval;
    int n_rotations = 300;
    int equivariance_configs = 8;
    int ensemble_members = 5;
    EnsembleCalibration ensemble;
    std::uint64_t seed = 0;

    /// Sets every seed-bearing field from one value.
    void apply_seed(std::uint64_t s);
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

nlohmann::json to_json(const RunReport& r);

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

/// Entry point of the `eqevid` tool. Diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace eqevid
