#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pqe/frame_io.hpp"
#include "pqe/layers.hpp"
#include "pqe/tensor.hpp"

namespace pqe {

// Input channel 0 is always the reconstruction; channel 1, when present, the
// intra prediction.
struct ModelSpec {
    int in_channels = 2;
    int width = 32;
    int num_res_blocks = 4;
    bool global_residual = true;

    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

enum class RunMode { Train, Eval };

template <typename T>
struct NamedTensor {
    std::string name;
    BasicTensor<T> value;
    bool trainable = true;

    bool operator==(const NamedTensor&) const = default;
};

// All tensors of the network in forward-pass order:
//   head.{w,b}
//   res<i>.conv1.{w,b}, res<i>.conv2.{w,b}   for each residual block
//   body.{w,b}
//   bn.{gamma,beta,running_mean,running_var}
//   tail1.{w,b}, tail2.{w,b}
//   out.{w,b}
template <typename T>
struct BasicParameters {
    std::vector<NamedTensor<T>> entries;

    std::size_t scalar_count() const;
    bool operator==(const BasicParameters&) const = default;
};

using Parameters = BasicParameters<float>;

// Index of each tensor in BasicParameters::entries for a given spec.
struct ParamLayout {
    explicit ParamLayout(const ModelSpec& spec);

    static constexpr std::size_t head_w = 0, head_b = 1;
    std::size_t res_base(int block) const { return 2 + 4 * static_cast<std::size_t>(block); }
    std::size_t body_w, body_b, bn_gamma, bn_beta, bn_mean, bn_var, tail1_w, tail1_b, tail2_w, tail2_b, out_w, out_b;
    std::size_t total;
};

// Trainable tensors zero, running variance one.
template <typename T>
BasicParameters<T> zero_params(const ModelSpec& spec);

// He-normal (fan-in) conv kernels with std sqrt(2 / (9 C_in)), zero biases,
// unit batch-norm gain. Deterministic in the seed. `output_gain` scales the
// final conv kernel after sampling (1 = plain He init).
Parameters init_params(const ModelSpec& spec, std::uint64_t seed, double output_gain = 1.0);

template <typename T>
void check_params(const BasicParameters<T>& params, const ModelSpec& spec);

template <typename T>
BasicTensor<T> model_forward(const BasicTensor<T>& input, const BasicParameters<T>& params, const ModelSpec& spec,
                             RunMode mode);

// Train-mode forward pass that keeps every intermediate needed by backward.
template <typename T>
struct ForwardPass {
    BasicTensor<T> input;
    BasicTensor<T> head;
    std::vector<ResidualCache<T>> res;
    BasicTensor<T> res_out;
    BasicTensor<T> body;
    BatchNormCache<T> bn;
    BasicTensor<T> skip_sum;
    BasicTensor<T> tail1_pre, tail1_act;
    BasicTensor<T> tail2_pre, tail2_act;
    BasicTensor<T> output;
};

template <typename T>
ForwardPass<T> model_forward_train(const BasicTensor<T>& input, const BasicParameters<T>& params,
                                   const ModelSpec& spec);

template <typename T>
struct ModelGradients {
    BasicParameters<T> params;  // zero for running statistics
    BasicTensor<T> input;
};

template <typename T>
ModelGradients<T> model_backward(const ForwardPass<T>& pass, const BasicParameters<T>& params, const ModelSpec& spec,
                                 const BasicTensor<T>& d_output);

template <typename T>
void update_running_stats(BasicParameters<T>& params, const ForwardPass<T>& pass, const ModelSpec& spec,
                          double momentum = kBatchNormMomentum);

template <typename To, typename From>
BasicParameters<To> params_cast(const BasicParameters<From>& p) {
    BasicParameters<To> out;
    for (const auto& e : p.entries) out.entries.push_back({e.name, tensor_cast<To>(e.value), e.trainable});
    return out;
}

// Model file: "PQEN", u32 version, u32 header length, JSON header, then every
// parameter tensor as little-endian float32 in forward-pass order.
inline constexpr std::uint32_t kModelVersion = 1;

struct SavedModel {
    ModelSpec spec;
    std::optional<Component> component;
    int qp = -1;  // -1: not bound to a QP
    Parameters params;

    bool operator==(const SavedModel&) const = default;
};

void save_model(const SavedModel& model, const std::filesystem::path& path);
SavedModel load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_model(const SavedModel& model);
SavedModel decode_model(std::span<const std::uint8_t> bytes);

}  // namespace pqe
