#include "pqe/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace pqe {

namespace {

std::vector<float> window(const Plane& p, int x, int y, int size) {
    std::vector<float> out(static_cast<std::size_t>(size) * size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            out[static_cast<std::size_t>(r) * size + c] = static_cast<float>(p.at(x + c, y + r)) / 255.0f;
    return out;
}

}  // namespace

std::vector<PatchSample> extract_patches(const Plane& orig, const Plane& recon, const Plane& pred, int count,
                                         std::uint64_t seed, Component component, int qp, int patch) {
    if (orig.width() != recon.width() || orig.height() != recon.height() || orig.width() != pred.width() ||
        orig.height() != pred.height())
        throw ArgumentError("original, reconstruction and prediction planes differ in size");
    if (count < 0) throw ArgumentError("patch count must be non-negative");
    int size = patch;
    if (orig.width() < size || orig.height() < size) size = kMinPatchSize;
    if (orig.width() < size || orig.height() < size)
        throw ArgumentError("plane " + std::to_string(orig.width()) + "x" + std::to_string(orig.height()) +
                            " is smaller than the minimum patch size " + std::to_string(kMinPatchSize));

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> xs(0, orig.width() - size);
    std::uniform_int_distribution<int> ys(0, orig.height() - size);
    std::vector<PatchSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        PatchSample s;
        s.size = size;
        s.x = xs(rng);
        s.y = ys(rng);
        s.component = component;
        s.qp = qp;
        s.orig = window(orig, s.x, s.y, size);
        s.recon = window(recon, s.x, s.y, size);
        s.pred = window(pred, s.x, s.y, size);
        out.push_back(std::move(s));
    }
    return out;
}

template <typename T>
BasicLossResult<T> l2_loss(const BasicTensor<T>& output, const BasicTensor<T>& target) {
    if (output.shape() != target.shape())
        throw ArgumentError("loss shapes differ: " + output.shape().str() + " vs " + target.shape().str());
    BasicLossResult<T> r{0.0, BasicTensor<T>(output.shape())};
    const double n = output.n();
    const auto o = output.data();
    const auto t = target.data();
    auto g = r.grad.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double d = static_cast<double>(o[i]) - static_cast<double>(t[i]);
        sum += d * d;
        g[i] = static_cast<T>(2.0 * d / n);
    }
    r.loss = sum / n;
    return r;
}

template BasicLossResult<float> l2_loss(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicLossResult<double> l2_loss(const BasicTensor<double>&, const BasicTensor<double>&);

OptimizerState OptimizerState::for_params(const Parameters& params, AdamConfig config) {
    OptimizerState s;
    s.config = config;
    for (const auto& e : params.entries) {
        s.m.emplace_back(e.value.size(), 0.0);
        s.v.emplace_back(e.value.size(), 0.0);
    }
    return s;
}

void adam_step(Parameters& params, const Parameters& grads, OptimizerState& state, double lr) {
    if (grads.entries.size() != params.entries.size() || state.m.size() != params.entries.size())
        throw ArgumentError("optimizer state does not match parameters");
    for (std::size_t k = 0; k < params.entries.size(); ++k) {
        if (grads.entries[k].value.size() != params.entries[k].value.size() ||
            state.m[k].size() != params.entries[k].value.size())
            throw ArgumentError("gradient for " + params.entries[k].name + " has the wrong size");
        if (!params.entries[k].trainable) continue;
        for (const float g : grads.entries[k].value.data())
            if (!std::isfinite(g)) throw TrainingError("non-finite gradient in " + params.entries[k].name);
    }

    ++state.step;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.entries.size(); ++k) {
        if (!params.entries[k].trainable) continue;
        auto p = params.entries[k].value.data();
        const auto g = grads.entries[k].value.data();
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] = static_cast<float>(p[i] - lr * mhat / (std::sqrt(vhat) + c.eps));
        }
    }
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (!(lr_initial > 0.0)) throw ArgumentError("lr_initial must be positive");
    if (!(lr_decay > 0.0)) throw ArgumentError("lr_decay must be positive");
    if (total_epochs < 1) throw ArgumentError("total_epochs must be >= 1");
    if (decay_every < 0) throw ArgumentError("decay_every must be >= 0");
    if (!std::isfinite(init_output_gain) || init_output_gain < 0.0)
        throw ArgumentError("init_output_gain must be finite and >= 0");
}

int TrainConfig::decay_interval() const {
    if (decay_every > 0) return decay_every;
    return std::max(1, total_epochs / 5);
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.total_epochs)
        throw ArgumentError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.total_epochs) + ")");
    return cfg.lr_initial * std::pow(cfg.lr_decay, epoch / cfg.decay_interval());
}

Batch make_batch(std::span<const PatchSample> samples, std::span<const std::size_t> indices, bool use_prediction) {
    if (indices.empty()) throw ArgumentError("empty batch");
    const int size = samples[indices.front()].size;
    const int channels = use_prediction ? 2 : 1;
    const auto n = static_cast<int>(indices.size());
    Batch b{Tensor(Shape4{n, channels, size, size}), Tensor(Shape4{n, 1, size, size})};
    for (int i = 0; i < n; ++i) {
        const PatchSample& s = samples[indices[static_cast<std::size_t>(i)]];
        if (s.size != size) throw ArgumentError("patches in one batch must share a size");
        std::ranges::copy(s.recon, b.input.channel(i, 0).begin());
        if (use_prediction) std::ranges::copy(s.pred, b.input.channel(i, 1).begin());
        std::ranges::copy(s.orig, b.target.channel(i, 0).begin());
    }
    return b;
}

TrainResult train_model(std::span<const PatchSample> dataset, const ModelSpec& spec, const TrainConfig& cfg,
                        const EpochCallback& on_epoch) {
    return train_model(dataset, spec, cfg, init_params(spec, cfg.seed, cfg.init_output_gain), on_epoch);
}

TrainResult train_model(std::span<const PatchSample> dataset, const ModelSpec& spec, const TrainConfig& cfg,
                        Parameters initial, const EpochCallback& on_epoch) {
    cfg.validate();
    spec.validate();
    if (dataset.empty()) throw ArgumentError("training dataset is empty");
    if (spec.in_channels != (cfg.use_prediction ? 2 : 1))
        throw ArgumentError(cfg.use_prediction ? "prediction-aware training needs a 2-channel model"
                                               : "reconstruction-only training needs a 1-channel model");
    const int size = dataset.front().size;
    for (const auto& s : dataset)
        if (s.size != size) throw ArgumentError("all training patches must share one size");
    check_params(initial, spec);

    TrainResult result{std::move(initial), {}};
    OptimizerState state = OptimizerState::for_params(result.params);
    // Shuffling draws from its own stream so it does not depend on init.
    std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_at_epoch(epoch, cfg);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Batch batch = make_batch(dataset, idx, cfg.use_prediction);
            const auto pass = model_forward_train(batch.input, result.params, spec);
            const auto loss = l2_loss(pass.output, batch.target);
            if (!std::isfinite(loss.loss))
                throw TrainingError("loss diverged at epoch " + std::to_string(epoch) + " (value " +
                                    std::to_string(loss.loss) + ")");
            const auto grads = model_backward(pass, result.params, spec, loss.grad);
            adam_step(result.params, grads.params, state, lr);
            update_running_stats(result.params, pass, spec);
            loss_sum += loss.loss * static_cast<double>(idx.size());
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.mean_loss = loss_sum / static_cast<double>(dataset.size());
        entry.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return result;
}

double evaluate_loss(std::span<const PatchSample> dataset, const Parameters& params, const ModelSpec& spec,
                     bool use_prediction) {
    if (dataset.empty()) throw ArgumentError("evaluation dataset is empty");
    double total = 0.0;
    constexpr std::size_t kChunk = 16;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < dataset.size(); start += kChunk) {
        idx.clear();
        for (std::size_t i = start; i < std::min(dataset.size(), start + kChunk); ++i) idx.push_back(i);
        const Batch b = make_batch(dataset, idx, use_prediction);
        const auto out = model_forward(b.input, params, spec, RunMode::Eval);
        total += l2_loss(out, b.target).loss * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(dataset.size());
}

}  // namespace pqe
