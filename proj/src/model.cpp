#include "pqe/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include <json.hpp>

namespace pqe {

namespace {

constexpr char kModelMagic[4] = {'P', 'Q', 'E', 'N'};

template <typename T>
NamedTensor<T> conv_weight(const std::string& name, int c_out, int c_in) {
    return {name, BasicTensor<T>(Shape4{c_out, c_in, 3, 3}), true};
}

template <typename T>
NamedTensor<T> vec(const std::string& name, int c, T fill = T(0), bool trainable = true) {
    return {name, BasicTensor<T>(Shape4{c, 1, 1, 1}, fill), trainable};
}

template <typename T>
ResidualParams<T> res_params(const BasicParameters<T>& p, const ParamLayout& L, int block) {
    const std::size_t b = L.res_base(block);
    return {p.entries[b].value, p.entries[b + 1].value, p.entries[b + 2].value, p.entries[b + 3].value};
}

template <typename T>
void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
    auto d = dst.data();
    const auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    BasicTensor<T> out = a;
    add_into(out, b);
    return out;
}

// Adds channel 0 of the input (the reconstruction) to the single-channel output.
template <typename T>
void add_reconstruction(BasicTensor<T>& out, const BasicTensor<T>& input) {
    for (int s = 0; s < out.n(); ++s) {
        auto o = out.channel(s, 0);
        const auto r = input.channel(s, 0);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += r[i];
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
    return v;
}

}  // namespace

void ModelSpec::validate() const {
    if (in_channels != 1 && in_channels != 2) throw ArgumentError("in_channels must be 1 or 2");
    if (width < 1) throw ArgumentError("network width must be >= 1");
    if (num_res_blocks < 1) throw ArgumentError("num_res_blocks must be >= 1");
}

template <typename T>
std::size_t BasicParameters<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
}

ParamLayout::ParamLayout(const ModelSpec& spec) {
    std::size_t i = 2 + 4 * static_cast<std::size_t>(spec.num_res_blocks);
    body_w = i++;
    body_b = i++;
    bn_gamma = i++;
    bn_beta = i++;
    bn_mean = i++;
    bn_var = i++;
    tail1_w = i++;
    tail1_b = i++;
    tail2_w = i++;
    tail2_b = i++;
    out_w = i++;
    out_b = i++;
    total = i;
}

template <typename T>
BasicParameters<T> zero_params(const ModelSpec& spec) {
    spec.validate();
    const int w = spec.width;
    BasicParameters<T> p;
    auto& e = p.entries;
    e.push_back(conv_weight<T>("head.w", w, spec.in_channels));
    e.push_back(vec<T>("head.b", w));
    for (int b = 0; b < spec.num_res_blocks; ++b) {
        const std::string pre = "res" + std::to_string(b);
        e.push_back(conv_weight<T>(pre + ".conv1.w", w, w));
        e.push_back(vec<T>(pre + ".conv1.b", w));
        e.push_back(conv_weight<T>(pre + ".conv2.w", w, w));
        e.push_back(vec<T>(pre + ".conv2.b", w));
    }
    e.push_back(conv_weight<T>("body.w", w, w));
    e.push_back(vec<T>("body.b", w));
    e.push_back(vec<T>("bn.gamma", w));
    e.push_back(vec<T>("bn.beta", w));
    e.push_back(vec<T>("bn.running_mean", w, T(0), false));
    e.push_back(vec<T>("bn.running_var", w, T(1), false));
    e.push_back(conv_weight<T>("tail1.w", w, w));
    e.push_back(vec<T>("tail1.b", w));
    e.push_back(conv_weight<T>("tail2.w", w, w));
    e.push_back(vec<T>("tail2.b", w));
    e.push_back(conv_weight<T>("out.w", 1, w));
    e.push_back(vec<T>("out.b", 1));
    return p;
}

Parameters init_params(const ModelSpec& spec, std::uint64_t seed, double output_gain) {
    if (!std::isfinite(output_gain) || output_gain < 0.0) throw ArgumentError("output gain must be finite and >= 0");
    Parameters p = zero_params<float>(spec);
    for (std::size_t k = 0; k < p.entries.size(); ++k) {
        auto& e = p.entries[k];
        const auto& s = e.value.shape();
        if (e.name.ends_with(".w")) {
            // One stream per (tensor, input channel): 1- and 2-channel models
            // built from the same seed share every weight but the pred slice.
            const double sd = std::sqrt(2.0 / (9.0 * s.c));
            for (int ci = 0; ci < s.c; ++ci) {
                std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                  static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(ci)};
                std::mt19937_64 rng(seq);
                std::normal_distribution<double> dist(0.0, 1.0);
                for (int co = 0; co < s.n; ++co)
                    for (int i = 0; i < 9; ++i) e.value.at(co, ci, i / 3, i % 3) = static_cast<float>(sd * dist(rng));
            }
        } else if (e.name == "bn.gamma") {
            for (float& v : e.value.data()) v = 1.0f;
        }
    }
    for (float& v : p.entries[ParamLayout(spec).out_w].value.data()) v = static_cast<float>(v * output_gain);
    return p;
}

template <typename T>
void check_params(const BasicParameters<T>& params, const ModelSpec& spec) {
    spec.validate();
    const BasicParameters<T> expected = zero_params<T>(spec);
    if (params.entries.size() != expected.entries.size())
        throw ArgumentError("parameter set has " + std::to_string(params.entries.size()) + " tensors, spec needs " +
                            std::to_string(expected.entries.size()));
    for (std::size_t i = 0; i < expected.entries.size(); ++i) {
        if (params.entries[i].value.shape() != expected.entries[i].value.shape())
            throw ArgumentError("parameter " + expected.entries[i].name + " has shape " +
                                params.entries[i].value.shape().str() + ", expected " +
                                expected.entries[i].value.shape().str());
    }
}

template <typename T>
BasicTensor<T> model_forward(const BasicTensor<T>& input, const BasicParameters<T>& params, const ModelSpec& spec,
                             RunMode mode) {
    if (mode == RunMode::Train) return model_forward_train(input, params, spec).output;
    check_params(params, spec);
    if (input.c() != spec.in_channels)
        throw ArgumentError("model expects " + std::to_string(spec.in_channels) + " input channels, got " +
                            std::to_string(input.c()));
    const ParamLayout L(spec);
    const auto& e = params.entries;
    const BasicTensor<T> head = conv2d_forward(input, e[L.head_w].value, e[L.head_b].value);
    BasicTensor<T> x = head;
    for (int b = 0; b < spec.num_res_blocks; ++b) x = residual_block_forward(x, res_params(params, L, b));
    x = conv2d_forward(x, e[L.body_w].value, e[L.body_b].value);
    x = batchnorm_forward_eval(x, e[L.bn_gamma].value, e[L.bn_beta].value, e[L.bn_mean].value, e[L.bn_var].value);
    add_into(x, head);
    x = relu_forward(conv2d_forward(x, e[L.tail1_w].value, e[L.tail1_b].value));
    x = relu_forward(conv2d_forward(x, e[L.tail2_w].value, e[L.tail2_b].value));
    x = conv2d_forward(x, e[L.out_w].value, e[L.out_b].value);
    if (spec.global_residual) add_reconstruction(x, input);
    return x;
}

template <typename T>
ForwardPass<T> model_forward_train(const BasicTensor<T>& input, const BasicParameters<T>& params,
                                   const ModelSpec& spec) {
    check_params(params, spec);
    if (input.c() != spec.in_channels)
        throw ArgumentError("model expects " + std::to_string(spec.in_channels) + " input channels, got " +
                            std::to_string(input.c()));
    const ParamLayout L(spec);
    const auto& e = params.entries;
    ForwardPass<T> f;
    f.input = input;
    f.head = conv2d_forward(input, e[L.head_w].value, e[L.head_b].value);
    BasicTensor<T> x = f.head;
    f.res.resize(static_cast<std::size_t>(spec.num_res_blocks));
    for (int b = 0; b < spec.num_res_blocks; ++b)
        x = residual_block_forward(x, res_params(params, L, b), &f.res[static_cast<std::size_t>(b)]);
    f.res_out = std::move(x);
    f.body = conv2d_forward(f.res_out, e[L.body_w].value, e[L.body_b].value);
    f.skip_sum = add(batchnorm_forward_train(f.body, e[L.bn_gamma].value, e[L.bn_beta].value, &f.bn), f.head);
    f.tail1_pre = conv2d_forward(f.skip_sum, e[L.tail1_w].value, e[L.tail1_b].value);
    f.tail1_act = relu_forward(f.tail1_pre);
    f.tail2_pre = conv2d_forward(f.tail1_act, e[L.tail2_w].value, e[L.tail2_b].value);
    f.tail2_act = relu_forward(f.tail2_pre);
    f.output = conv2d_forward(f.tail2_act, e[L.out_w].value, e[L.out_b].value);
    if (spec.global_residual) add_reconstruction(f.output, input);
    return f;
}

template <typename T>
ModelGradients<T> model_backward(const ForwardPass<T>& f, const BasicParameters<T>& params, const ModelSpec& spec,
                                 const BasicTensor<T>& d_output) {
    if (d_output.shape() != f.output.shape())
        throw ArgumentError("output gradient shape " + d_output.shape().str() + " != " + f.output.shape().str());
    const ParamLayout L(spec);
    const auto& e = params.entries;
    ModelGradients<T> g{zero_params<T>(spec), BasicTensor<T>(f.input.shape())};
    auto& ge = g.params.entries;
    for (auto& entry : ge)
        if (!entry.trainable) std::fill(entry.value.data().begin(), entry.value.data().end(), T(0));
    auto set_conv = [&](std::size_t w_idx, std::size_t b_idx, ConvGrads<T>& c) {
        ge[w_idx].value = std::move(c.dkernel);
        ge[b_idx].value = std::move(c.dbias);
    };

    auto out = conv2d_backward(f.tail2_act, e[L.out_w].value, d_output);
    set_conv(L.out_w, L.out_b, out);
    auto t2 = conv2d_backward(f.tail1_act, e[L.tail2_w].value, relu_backward(f.tail2_pre, out.dx));
    set_conv(L.tail2_w, L.tail2_b, t2);
    auto t1 = conv2d_backward(f.skip_sum, e[L.tail1_w].value, relu_backward(f.tail1_pre, t2.dx));
    set_conv(L.tail1_w, L.tail1_b, t1);

    // skip_sum = bn(body) + head
    auto bn = batchnorm_backward(f.bn, e[L.bn_gamma].value, t1.dx);
    ge[L.bn_gamma].value = std::move(bn.dgamma);
    ge[L.bn_beta].value = std::move(bn.dbeta);
    auto body = conv2d_backward(f.res_out, e[L.body_w].value, bn.dx);
    set_conv(L.body_w, L.body_b, body);

    BasicTensor<T> d = std::move(body.dx);
    for (int b = spec.num_res_blocks - 1; b >= 0; --b) {
        auto rg = residual_block_backward(f.res[static_cast<std::size_t>(b)], res_params(params, L, b), d);
        const std::size_t base = L.res_base(b);
        set_conv(base, base + 1, rg.conv1);
        set_conv(base + 2, base + 3, rg.conv2);
        d = std::move(rg.dx);
    }
    add_into(d, t1.dx);  // head feeds both the residual stack and the skip
    auto head = conv2d_backward(f.input, e[L.head_w].value, d);
    set_conv(L.head_w, L.head_b, head);
    g.input = std::move(head.dx);
    if (spec.global_residual) {
        for (int s = 0; s < d_output.n(); ++s) {
            auto di = g.input.channel(s, 0);
            const auto dout = d_output.channel(s, 0);
            for (std::size_t i = 0; i < di.size(); ++i) di[i] += dout[i];
        }
    }
    return g;
}

template <typename T>
void update_running_stats(BasicParameters<T>& params, const ForwardPass<T>& pass, const ModelSpec& spec,
                          double momentum) {
    const ParamLayout L(spec);
    batchnorm_update_running(params.entries[L.bn_mean].value, params.entries[L.bn_var].value, pass.bn, momentum);
}

#define PQE_INSTANTIATE_MODEL(T)                                                                                    \
    template struct BasicParameters<T>;                                                                             \
    template BasicParameters<T> zero_params<T>(const ModelSpec&);                                                   \
    template void check_params(const BasicParameters<T>&, const ModelSpec&);                                        \
    template BasicTensor<T> model_forward(const BasicTensor<T>&, const BasicParameters<T>&, const ModelSpec&,       \
                                          RunMode);                                                                 \
    template ForwardPass<T> model_forward_train(const BasicTensor<T>&, const BasicParameters<T>&, const ModelSpec&); \
    template ModelGradients<T> model_backward(const ForwardPass<T>&, const BasicParameters<T>&, const ModelSpec&,   \
                                              const BasicTensor<T>&);                                               \
    template void update_running_stats(BasicParameters<T>&, const ForwardPass<T>&, const ModelSpec&, double);

PQE_INSTANTIATE_MODEL(float)
PQE_INSTANTIATE_MODEL(double)

#undef PQE_INSTANTIATE_MODEL

std::vector<std::uint8_t> encode_model(const SavedModel& model) {
    check_params(model.params, model.spec);
    nlohmann::json header = {
        {"in_channels", model.spec.in_channels},
        {"width", model.spec.width},
        {"num_res_blocks", model.spec.num_res_blocks},
        {"global_residual", model.spec.global_residual},
        {"component", model.component ? std::string(to_string(*model.component)) : std::string()},
        {"qp", model.qp},
    };
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
    put_u32(out, kModelVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    out.reserve(out.size() + model.params.scalar_count() * 4);
    for (const auto& e : model.params.entries)
        for (const float v : e.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

SavedModel decode_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || !std::equal(std::begin(kModelMagic), std::end(kModelMagic), bytes.begin()))
        throw FormatError("not a PQEN model file (bad magic)");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kModelVersion) throw FormatError("unsupported model version " + std::to_string(version));
    const std::uint32_t header_len = get_u32(bytes, 8);
    if (bytes.size() - 12 < header_len) throw FormatError("model header truncated");

    SavedModel m;
    try {
        const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
        m.spec.in_channels = header.at("in_channels").get<int>();
        m.spec.width = header.at("width").get<int>();
        m.spec.num_res_blocks = header.at("num_res_blocks").get<int>();
        m.spec.global_residual = header.at("global_residual").get<bool>();
        const auto comp = header.value("component", std::string());
        if (!comp.empty()) m.component = component_from_string(comp);
        m.qp = header.value("qp", -1);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad model header: ") + e.what());
    }
    try {
        m.spec.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("bad model header: ") + e.what());
    }

    m.params = zero_params<float>(m.spec);
    const std::size_t expected = m.params.scalar_count() * 4;
    const std::size_t available = bytes.size() - 12 - header_len;
    if (available != expected)
        throw FormatError("model weight section has " + std::to_string(available) + " bytes, expected " +
                          std::to_string(expected));
    std::size_t pos = 12 + header_len;
    for (auto& e : m.params.entries)
        for (float& v : e.value.data()) {
            v = std::bit_cast<float>(get_u32(bytes, pos));
            pos += 4;
        }
    return m;
}

void save_model(const SavedModel& model, const std::filesystem::path& path) {
    const auto bytes = encode_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

SavedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_model(bytes);
}

}  // namespace pqe
