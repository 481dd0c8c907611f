#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "solo/assignment.hpp"
#include "solo/data.hpp"
#include "solo/evaluation.hpp"
#include "solo/inference.hpp"
#include "solo/losses.hpp"
#include "solo/model.hpp"

namespace solo {

struct TrainConfig {
    std::size_t epochs = 24;
    std::size_t batch_size = 8;
    /// 0.01 at the reference batch of 16, scaled linearly.
    double base_lr = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<double> lr_drop_fractions{0.75, 0.917};
    double lr_drop_factor = 10.0;
    /// Linear ramp from lr/3 over the first iterations; 0 disables it.
    std::size_t warmup_iters = 0;
    /// Global gradient-norm clip; 0 disables it.
    double grad_clip_norm = 0.0;
    std::uint64_t seed = 0;

    LossConfig loss;
    ModelConfig model;
    double epsilon = 0.2;
    bool contours = false;

    std::string train_data;
    std::string val_data;
    std::size_t image_size = 96;
    /// Validation AP every n epochs (and after the last); 0 disables it.
    std::size_t val_every = 0;

    /// Throws ConfigError.
    void validate() const;
};

/// Flat key-value JSON; unknown keys and wrong types are ConfigErrors.
TrainConfig train_config_from_json(const std::string& text);
std::string to_json(const TrainConfig& config);

/// base * factor^-d, with d the number of drop fractions f for which epoch
/// round(f * epochs) has been reached.
double lr_at(std::size_t epoch, const TrainConfig& config);

/// Momentum buffers keyed like the weights.
using SgdState = std::map<std::string, std::vector<float>>;

/// v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v.
/// Throws std::invalid_argument naming any parameter without a gradient.
void sgd_step(ModelWeights<float>& weights, SgdState& state, double lr, double momentum, double weight_decay);

class CheckpointError : public DataError {
public:
    enum class Kind { bad_magic, unsupported_version, corrupt_header, shape_mismatch, truncated };
    CheckpointError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    TrainConfig config;
    std::size_t epoch = 0;  // completed epochs
    ModelWeights<float> weights;
    SgdState momentum;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Parameter shapes are validated against the embedded model config, or
/// against `expected` when given.
Checkpoint deserialize_checkpoint(const std::string& bytes, const ModelConfig* expected = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0;
    double loss = 0;
    double category_loss = 0;
    double mask_loss = 0;
    std::size_t batches = 0;
    std::optional<double> val_ap;
    std::optional<double> val_ap50;
};

std::string to_json_line(const EpochMetrics& m);

struct TrainOptions {
    /// Overrides the config's dataset paths.
    const std::vector<DatasetSample>* train_samples = nullptr;
    const std::vector<DatasetSample>* val_samples = nullptr;
    /// Continue from this state instead of a fresh init.
    const Checkpoint* resume = nullptr;
    /// Stop after this many completed epochs (for tests of resume).
    std::optional<std::size_t> stop_after;
    /// Written after every epoch when set.
    std::filesystem::path checkpoint_path;
    std::filesystem::path metrics_path;
    std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> metrics;
};

/// Deterministic in (config, data). Throws NumericError naming the epoch
/// and batch when the loss stops being finite.
TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

struct EvalOptions {
    /// Swap each predicted mask for its most overlapping GT mask first.
    bool error_analysis = false;
    /// Compare at mask resolution against contours of the downsampled GT.
    bool contours = false;
    InferenceConfig inference;
};

/// Runs inference over `samples` and scores the detections.
EvalResult evaluate_model(const SoloModel<float>& model, const std::vector<DatasetSample>& samples,
                          const EvalOptions& options = {});

/// Resizes every sample to `size` when it differs.
std::vector<DatasetSample> prepare_samples(std::vector<DatasetSample> samples, std::size_t size);

}  // namespace solo
