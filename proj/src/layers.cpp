#include "pqe/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace pqe {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Rows (ci, ky, kx), columns y * W + x.
template <typename T>
void im2col(const BasicTensor<T>& x, int sample, std::vector<T>& col) {
    const int c_in = x.c(), h = x.h(), w = x.w();
    const std::size_t hw = x.plane_size();
    col.assign(static_cast<std::size_t>(c_in) * 9 * hw, T(0));
    for (int ci = 0; ci < c_in; ++ci) {
        const auto src = x.channel(sample, ci);
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                const int dx = kx - 1;
                const int x0 = std::max(0, -dx);
                const int x1 = std::min(w, w - dx);
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const T* s = src.data() + static_cast<std::size_t>(sy) * w;
                    T* d = row + static_cast<std::size_t>(y) * w;
                    for (int xx = x0; xx < x1; ++xx) d[xx] = s[xx + dx];
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const std::vector<T>& col, BasicTensor<T>& dx, int sample) {
    const int c_in = dx.c(), h = dx.h(), w = dx.w();
    const std::size_t hw = dx.plane_size();
    for (int ci = 0; ci < c_in; ++ci) {
        auto dst = dx.channel(sample, ci);
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                const int dxo = kx - 1;
                const int x0 = std::max(0, -dxo);
                const int x1 = std::min(w, w - dxo);
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    T* d = dst.data() + static_cast<std::size_t>(sy) * w;
                    const T* s = row + static_cast<std::size_t>(y) * w;
                    for (int xx = x0; xx < x1; ++xx) d[xx + dxo] += s[xx];
                }
            }
        }
    }
}

template <typename T>
void check_conv_shapes(const BasicTensor<T>& x, const BasicTensor<T>& kernel) {
    if (kernel.h() != 3 || kernel.w() != 3) throw ArgumentError("conv kernel must be 3x3, got " + kernel.shape().str());
    if (kernel.c() != x.c())
        throw ArgumentError("conv expects " + std::to_string(kernel.c()) + " input channels, got " +
                            std::to_string(x.c()));
}

template <typename T>
void check_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
    if (a.shape() != b.shape())
        throw ArgumentError(std::string(what) + ": shape " + a.shape().str() + " vs " + b.shape().str());
}

template <typename T>
void check_channel_vector(const BasicTensor<T>& v, int channels, const char* what) {
    if (v.size() != static_cast<std::size_t>(channels))
        throw ArgumentError(std::string(what) + " needs " + std::to_string(channels) + " entries");
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& bias) {
    check_conv_shapes(x, kernel);
    const int c_out = kernel.n();
    check_channel_vector(bias, c_out, "conv bias");
    const auto hw = static_cast<Eigen::Index>(x.plane_size());
    const auto k_cols = static_cast<Eigen::Index>(x.c()) * 9;

    BasicTensor<T> y(Shape4{x.n(), c_out, x.h(), x.w()});
    ConstMatrixMap<T> k(kernel.data().data(), c_out, k_cols);
    std::vector<T> col;
    for (int s = 0; s < x.n(); ++s) {
        im2col(x, s, col);
        ConstMatrixMap<T> cm(col.data(), k_cols, hw);
        MatrixMap<T> out(y.channel(s, 0).data(), c_out, hw);
        out.noalias() = k * cm;
        for (int co = 0; co < c_out; ++co) out.row(co).array() += bias.data()[co];
    }
    return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& dy,
                             bool need_dx) {
    check_conv_shapes(x, kernel);
    const int c_out = kernel.n();
    if (dy.n() != x.n() || dy.c() != c_out || dy.h() != x.h() || dy.w() != x.w())
        throw ArgumentError("conv output gradient has shape " + dy.shape().str());
    const auto hw = static_cast<Eigen::Index>(x.plane_size());
    const auto k_cols = static_cast<Eigen::Index>(x.c()) * 9;

    ConvGrads<T> g;
    g.dkernel = BasicTensor<T>(kernel.shape());
    g.dbias = BasicTensor<T>(Shape4{c_out, 1, 1, 1});
    if (need_dx) g.dx = BasicTensor<T>(x.shape());

    ConstMatrixMap<T> k(kernel.data().data(), c_out, k_cols);
    MatrixMap<T> dk(g.dkernel.data().data(), c_out, k_cols);
    std::vector<T> col, dcol;
    for (int s = 0; s < x.n(); ++s) {
        im2col(x, s, col);
        ConstMatrixMap<T> cm(col.data(), k_cols, hw);
        ConstMatrixMap<T> d(dy.channel(s, 0).data(), c_out, hw);
        dk.noalias() += d * cm.transpose();
        for (int co = 0; co < c_out; ++co) g.dbias.data()[co] += d.row(co).sum();
        if (need_dx) {
            dcol.resize(col.size());
            MatrixMap<T> dc(dcol.data(), k_cols, hw);
            dc.noalias() = k.transpose() * d;
            col2im_add(dcol, g.dx, s);
        }
    }
    return g;
}

template <typename T>
BasicTensor<T> concat_inputs(const BasicTensor<T>& recon, const BasicTensor<T>& pred) {
    if (recon.c() != 1 || pred.c() != 1) throw ArgumentError("concat_inputs expects single-channel planes");
    check_same_shape(recon, pred, "concat_inputs");
    BasicTensor<T> out(Shape4{recon.n(), 2, recon.h(), recon.w()});
    for (int s = 0; s < recon.n(); ++s) {
        std::ranges::copy(recon.channel(s, 0), out.channel(s, 0).begin());
        std::ranges::copy(pred.channel(s, 0), out.channel(s, 1).begin());
    }
    return out;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
    BasicTensor<T> y = x;
    for (T& v : y.data()) v = v > T(0) ? v : T(0);
    return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
    check_same_shape(x, dy, "relu_backward");
    BasicTensor<T> dx = dy;
    const auto xs = x.data();
    auto d = dx.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (!(xs[i] > T(0))) d[i] = T(0);
    return dx;
}

template <typename T>
BasicTensor<T> batchnorm_forward_train(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                       const BasicTensor<T>& beta, BatchNormCache<T>* cache) {
    const int channels = x.c();
    check_channel_vector(gamma, channels, "batchnorm gain");
    check_channel_vector(beta, channels, "batchnorm bias");
    const std::size_t m = static_cast<std::size_t>(x.n()) * x.plane_size();
    if (m < 2) throw ArgumentError("batchnorm train mode needs at least 2 values per channel");

    BatchNormCache<T> local;
    BatchNormCache<T>& c = cache ? *cache : local;
    c.mean.assign(channels, 0.0);
    c.var.assign(channels, 0.0);
    c.inv_std.assign(channels, 0.0);
    c.xhat = BasicTensor<T>(x.shape());
    BasicTensor<T> y(x.shape());

    for (int ch = 0; ch < channels; ++ch) {
        double sum = 0.0;
        for (int s = 0; s < x.n(); ++s)
            for (const T v : x.channel(s, ch)) sum += v;
        const double mean = sum / static_cast<double>(m);
        double sq = 0.0;
        for (int s = 0; s < x.n(); ++s)
            for (const T v : x.channel(s, ch)) sq += (v - mean) * (v - mean);
        const double var = sq / static_cast<double>(m);
        const double inv_std = 1.0 / std::sqrt(var + kBatchNormEps);
        c.mean[ch] = mean;
        c.var[ch] = var;
        c.inv_std[ch] = inv_std;
        const double g = gamma.data()[ch];
        const double b = beta.data()[ch];
        for (int s = 0; s < x.n(); ++s) {
            const auto xs = x.channel(s, ch);
            auto xh = c.xhat.channel(s, ch);
            auto ys = y.channel(s, ch);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const double v = (xs[i] - mean) * inv_std;
                xh[i] = static_cast<T>(v);
                ys[i] = static_cast<T>(g * v + b);
            }
        }
    }
    return y;
}

template <typename T>
BasicTensor<T> batchnorm_forward_eval(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                      const BasicTensor<T>& running_mean, const BasicTensor<T>& running_var) {
    const int channels = x.c();
    check_channel_vector(gamma, channels, "batchnorm gain");
    check_channel_vector(beta, channels, "batchnorm bias");
    check_channel_vector(running_mean, channels, "batchnorm running mean");
    check_channel_vector(running_var, channels, "batchnorm running variance");
    BasicTensor<T> y(x.shape());
    for (int ch = 0; ch < channels; ++ch) {
        const double scale = gamma.data()[ch] / std::sqrt(static_cast<double>(running_var.data()[ch]) + kBatchNormEps);
        const double mean = running_mean.data()[ch];
        const double b = beta.data()[ch];
        for (int s = 0; s < x.n(); ++s) {
            const auto xs = x.channel(s, ch);
            auto ys = y.channel(s, ch);
            for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = static_cast<T>((xs[i] - mean) * scale + b);
        }
    }
    return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& gamma,
                                     const BasicTensor<T>& dy) {
    check_same_shape(cache.xhat, dy, "batchnorm_backward");
    const int channels = dy.c();
    const double m = static_cast<double>(dy.n()) * static_cast<double>(dy.plane_size());
    BatchNormGrads<T> g{BasicTensor<T>(dy.shape()), BasicTensor<T>(Shape4{channels, 1, 1, 1}),
                        BasicTensor<T>(Shape4{channels, 1, 1, 1})};
    for (int ch = 0; ch < channels; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int s = 0; s < dy.n(); ++s) {
            const auto d = dy.channel(s, ch);
            const auto xh = cache.xhat.channel(s, ch);
            for (std::size_t i = 0; i < d.size(); ++i) {
                sum_dy += d[i];
                sum_dy_xhat += static_cast<double>(d[i]) * xh[i];
            }
        }
        g.dbeta.data()[ch] = static_cast<T>(sum_dy);
        g.dgamma.data()[ch] = static_cast<T>(sum_dy_xhat);
        const double k = gamma.data()[ch] * cache.inv_std[ch] / m;
        for (int s = 0; s < dy.n(); ++s) {
            const auto d = dy.channel(s, ch);
            const auto xh = cache.xhat.channel(s, ch);
            auto dx = g.dx.channel(s, ch);
            for (std::size_t i = 0; i < d.size(); ++i)
                dx[i] = static_cast<T>(k * (m * d[i] - sum_dy - xh[i] * sum_dy_xhat));
        }
    }
    return g;
}

template <typename T>
void batchnorm_update_running(BasicTensor<T>& running_mean, BasicTensor<T>& running_var,
                              const BatchNormCache<T>& cache, double momentum) {
    const double m = static_cast<double>(cache.xhat.n()) * static_cast<double>(cache.xhat.plane_size());
    for (std::size_t ch = 0; ch < cache.mean.size(); ++ch) {
        const double unbiased = cache.var[ch] * m / (m - 1.0);
        running_mean.data()[ch] = static_cast<T>(momentum * running_mean.data()[ch] + (1.0 - momentum) * cache.mean[ch]);
        running_var.data()[ch] = static_cast<T>(momentum * running_var.data()[ch] + (1.0 - momentum) * unbiased);
    }
}

template <typename T>
BasicTensor<T> residual_block_forward(const BasicTensor<T>& x, const ResidualParams<T>& p, ResidualCache<T>* cache) {
    if (p.kernel1.c() != x.c() || p.kernel1.n() != x.c() || p.kernel2.n() != x.c())
        throw ArgumentError("residual block expects " + std::to_string(p.kernel1.c()) + " channels, got " +
                            std::to_string(x.c()));
    BasicTensor<T> hidden = conv2d_forward(x, p.kernel1, p.bias1);
    BasicTensor<T> activated = relu_forward(hidden);
    BasicTensor<T> y = conv2d_forward(activated, p.kernel2, p.bias2);
    auto yd = y.data();
    const auto xd = x.data();
    for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += xd[i];
    if (cache) {
        cache->input = x;
        cache->hidden = std::move(hidden);
        cache->activated = std::move(activated);
    }
    return y;
}

template <typename T>
ResidualGrads<T> residual_block_backward(const ResidualCache<T>& cache, const ResidualParams<T>& p,
                                         const BasicTensor<T>& dy) {
    ResidualGrads<T> g;
    g.conv2 = conv2d_backward(cache.activated, p.kernel2, dy);
    const BasicTensor<T> dhidden = relu_backward(cache.hidden, g.conv2.dx);
    g.conv1 = conv2d_backward(cache.input, p.kernel1, dhidden);
    g.dx = dy;
    auto dx = g.dx.data();
    const auto d1 = g.conv1.dx.data();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d1[i];
    return g;
}

#define PQE_INSTANTIATE_LAYERS(T)                                                                                   \
    template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);    \
    template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,      \
                                          bool);                                                                    \
    template BasicTensor<T> concat_inputs(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                                    \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> batchnorm_forward_train(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                                    const BasicTensor<T>&, BatchNormCache<T>*);                     \
    template BasicTensor<T> batchnorm_forward_eval(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                                   const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                                   const BasicTensor<T>&);                                          \
    template BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>&, const BasicTensor<T>&,                  \
                                                  const BasicTensor<T>&);                                           \
    template void batchnorm_update_running(BasicTensor<T>&, BasicTensor<T>&, const BatchNormCache<T>&, double);     \
    template BasicTensor<T> residual_block_forward(const BasicTensor<T>&, const ResidualParams<T>&,                 \
                                                   ResidualCache<T>*);                                              \
    template ResidualGrads<T> residual_block_backward(const ResidualCache<T>&, const ResidualParams<T>&,            \
                                                      const BasicTensor<T>&);

PQE_INSTANTIATE_LAYERS(float)
PQE_INSTANTIATE_LAYERS(double)

#undef PQE_INSTANTIATE_LAYERS

}  // namespace pqe
