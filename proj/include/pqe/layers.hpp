#pragma once

#include <vector>

#include "pqe/tensor.hpp"

// Building blocks of the enhancement network. Each layer is a pair of free
// functions (forward, backward) templated on the scalar so the same code runs
// in float for training and in double for gradient checking.

namespace pqe {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// 3x3 cross-correlation, stride 1, zero padding 1.
// kernel: (C_out, C_in, 3, 3); bias: (C_out, 1, 1, 1).
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias);

template <typename T>
struct ConvGrads {
    BasicTensor<T> dx;  // empty when not requested
    BasicTensor<T> dkernel;
    BasicTensor<T> dbias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& dy,
                             bool need_dx = true);

template <typename T>
BasicTensor<T> concat_inputs(const BasicTensor<T>& recon, const BasicTensor<T>& pred);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);

// Gradient through ReLU given its input x.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

template <typename T>
struct BatchNormCache {
    BasicTensor<T> xhat;
    std::vector<double> mean;
    std::vector<double> var;  // biased batch variance
    std::vector<double> inv_std;
};

template <typename T>
struct BatchNormGrads {
    BasicTensor<T> dx;
    BasicTensor<T> dgamma;
    BasicTensor<T> dbeta;
};

// Train mode: per-channel statistics over (N, H, W). Needs N*H*W >= 2.
template <typename T>
BasicTensor<T> batchnorm_forward_train(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                       const BasicTensor<T>& beta, BatchNormCache<T>* cache = nullptr);

template <typename T>
BasicTensor<T> batchnorm_forward_eval(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                      const BasicTensor<T>& running_mean, const BasicTensor<T>& running_var);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& gamma,
                                     const BasicTensor<T>& dy);

// running = momentum * running + (1 - momentum) * batch, unbiased batch variance.
template <typename T>
void batchnorm_update_running(BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                              const BatchNormCache<T>& cache, double momentum = kBatchNormMomentum);

template <typename T>
struct ResidualParams {
    const BasicTensor<T>& kernel1;
    const BasicTensor<T>& bias1;
    const BasicTensor<T>& kernel2;
    const BasicTensor<T>& bias2;
};

template <typename T>
struct ResidualCache {
    BasicTensor<T> input;
    BasicTensor<T> hidden;     // conv1 output, pre-activation
    BasicTensor<T> activated;  // relu(hidden)
};

template <typename T>
struct ResidualGrads {
    BasicTensor<T> dx;
    ConvGrads<T> conv1;
    ConvGrads<T> conv2;
};

// y = x + conv2(relu(conv1(x)))
template <typename T>
BasicTensor<T> residual_block_forward(const BasicTensor<T>& x, const ResidualParams<T>& p,
                                      ResidualCache<T>* cache = nullptr);

template <typename T>
ResidualGrads<T> residual_block_backward(const ResidualCache<T>& cache, const ResidualParams<T>& p,
                                         const BasicTensor<T>& dy);

}  // namespace pqe
