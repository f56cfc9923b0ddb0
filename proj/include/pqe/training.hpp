#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pqe/frame_io.hpp"
#include "pqe/model.hpp"

namespace pqe {

inline constexpr int kDefaultPatchSize = 64;
inline constexpr int kMinPatchSize = 32;

// Aligned (original, reconstruction, prediction) windows scaled to [0, 1].
struct PatchSample {
    int size = 0;
    int x = 0;  // top-left corner in the source plane
    int y = 0;
    Component component = Component::Y;
    int qp = 0;
    std::vector<float> orig;
    std::vector<float> recon;
    std::vector<float> pred;
};

// Uniformly random corners shared by the three planes. Falls back to 32x32
// when a plane is smaller than the requested patch.
std::vector<PatchSample> extract_patches(const Plane& orig, const Plane& recon, const Plane& pred, int count,
                                         std::uint64_t seed, Component component = Component::Y, int qp = 0,
                                         int patch = kDefaultPatchSize);

// sum((out - target)^2) / N, gradient 2 (out - target) / N.
template <typename T>
struct BasicLossResult {
    double loss = 0.0;
    BasicTensor<T> grad;
};

template <typename T>
BasicLossResult<T> l2_loss(const BasicTensor<T>& output, const BasicTensor<T>& target);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t step = 0;

    static OptimizerState for_params(const Parameters& params, AdamConfig config = {});
};

// Bias-corrected Adam over trainable tensors; throws TrainingError on a
// non-finite gradient.
void adam_step(Parameters& params, const Parameters& grads, OptimizerState& state, double lr);

struct TrainConfig {
    int batch_size = 32;
    double lr_initial = 1e-4;
    double lr_decay = 0.1;
    int total_epochs = 500;
    int decay_every = 0;  // 0: total_epochs / 5
    std::uint64_t seed = 0;
    Component component = Component::Y;
    int qp = 0;
    bool use_prediction = true;
    double init_output_gain = 1.0;  // see init_params

    void validate() const;
    int decay_interval() const;
};

// lr_initial * lr_decay^floor(epoch / decay_interval)
double lr_at_epoch(int epoch, const TrainConfig& cfg);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    Parameters params;
    std::vector<EpochLog> log;
};

// Assembles N x C x H x W input (recon[, pred]) and N x 1 x H x W target.
struct Batch {
    Tensor input;
    Tensor target;
};

Batch make_batch(std::span<const PatchSample> samples, std::span<const std::size_t> indices, bool use_prediction);

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train_model(std::span<const PatchSample> dataset, const ModelSpec& spec, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

// Same, continuing from given parameters.
TrainResult train_model(std::span<const PatchSample> dataset, const ModelSpec& spec, const TrainConfig& cfg,
                        Parameters initial, const EpochCallback& on_epoch = {});

// Mean per-patch loss of the model in eval mode.
double evaluate_loss(std::span<const PatchSample> dataset, const Parameters& params, const ModelSpec& spec,
                     bool use_prediction);

}  // namespace pqe
