#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eqevid/evidential.hpp"
#include "eqevid/toymodel.hpp"

namespace eqevid {

struct OptimizerConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;  // decoupled
    double eps = 1e-8;
    double plateau_factor = 0.85;
    int plateau_patience = 50;  // epochs without validation improvement
};

struct TrainConfig {
    OptimizerConfig optimizer;
    int epochs = 200;
    int batch_size = 16;
    int max_steps = 0;  // 0: no limit
    LossWeights weights;
    HeadConfig head;
    int n_rbf = 16;
    double cutoff = 5.0;
    int hidden = 16;
    double tensor_init_scale = 1.0;
    bool warm_start = true;  // least-squares mean fit before gradient steps
    std::uint64_t seed = 0;
    bool deterministic = false;

    /// Throws InputError.
    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double learning_rate = 0.0;
};

struct ConditionRecord {
    long step = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct TrainingFailure {
    long step = 0;
    std::string failure_class;
    std::string message;
};

struct RunReport {
    std::vector<EpochRecord> epochs;
    std::vector<ConditionRecord> condition;
    std::optional<TrainingFailure> failure;
    long steps = 0;
};

struct TrainResult {
    ModelParams params;
    RunReport report;
};

/// Initial parameters for a config (seeded); the mean-force weights are
/// warm-started by ridge least squares on a seeded bootstrap of `train`.
ModelParams initial_params(const std::vector<Configuration>& train, const TrainConfig& config);

/// Adaptive-moment training on the evidential loss. Numerical failures stop
/// training and are recorded in the report rather than thrown.
TrainResult train(const std::vector<Configuration>& train_set,
                  const std::vector<Configuration>& val_set, const TrainConfig& config);

/// Mean total loss over a set.
double mean_loss(const std::vector<ConfigFeatures>& features,
                 const std::vector<Configuration>& configs, const ModelParams& params,
                 const TrainConfig& config);

} // namespace eqevid
