#pragma once

// JSON / JSON-lines / CSV formats for datasets, checkpoints and reports.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "eqevid/evidential.hpp"
#include "eqevid/metrics.hpp"
#include "eqevid/toymodel.hpp"

namespace eqevid {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json to_json(const Configuration& c);
Configuration configuration_from_json(const nlohmann::json& j);

/// One configuration per line.
void write_dataset(const std::filesystem::path& path, const std::vector<Configuration>& data);
std::vector<Configuration> read_dataset(const std::filesystem::path& path);

struct Checkpoint {
    ModelParams params;
    HeadConfig head;
    LossWeights weights;
};

nlohmann::json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CalibrationReport& r);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Writes `header` then one comma-separated row per entry.
void write_csv(const std::filesystem::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows);

} // namespace eqevid
