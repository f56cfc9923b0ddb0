#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "pqe/cli.hpp"
#include "pqe/codec.hpp"
#include "pqe/harness.hpp"
#include "pqe/metrics.hpp"
#include "pqe/model.hpp"

namespace py = pybind11;
using namespace pqe;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Plane to_plane(const U8Array& a) {
    if (a.ndim() != 2) throw ArgumentError("expected a 2-D uint8 array");
    const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    return Plane(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array to_array(const Plane& p) {
    U8Array out({p.height(), p.width()});
    std::copy(p.samples().begin(), p.samples().end(), out.mutable_data());
    return out;
}

py::tuple frame_tuple(const VideoFrame& f) { return py::make_tuple(to_array(f.y), to_array(f.u), to_array(f.v)); }

RDCurve to_curve(const std::vector<std::pair<double, double>>& pts) {
    RDCurve c;
    for (auto [r, p] : pts) c.push_back({r, p});
    return c;
}

}  // namespace

PYBIND11_MODULE(_pqe, m) {
    m.doc() = "Prediction-aware quality enhancement: intra codec, CNN and BD-rate tools";

    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<CurveError>(m, "CurveError", PyExc_ValueError);
    py::register_exception<OverlapError>(m, "OverlapError", PyExc_ValueError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

    m.def("qstep", &qstep, py::arg("qp"));
    m.def("lambda_of_qp", [](int qp) { return lambda_of_qp(qp); }, py::arg("qp"));

    m.def(
        "encode",
        [](const U8Array& y, const U8Array& u, const U8Array& v, int qp, int block) {
            const VideoFrame f(to_plane(y), to_plane(u), to_plane(v));
            const auto enc = encode_frame(f, CodecConfig{qp, block}, true);
            const auto bytes = serialize_frame(enc.coded);
            py::dict d;
            d["stream"] = py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
            d["recon"] = frame_tuple(enc.frames.recon);
            d["pred"] = frame_tuple(enc.frames.pred);
            d["total_bits"] = enc.stats.total_bits;
            d["psnr"] = py::make_tuple(enc.stats.psnr_y, enc.stats.psnr_u, enc.stats.psnr_v);
            d["modes"] = enc.stats.per_block_modes;
            return d;
        },
        py::arg("y"), py::arg("u"), py::arg("v"), py::arg("qp") = 32, py::arg("block") = 16,
        "Intra-code one 4:2:0 frame given as three uint8 planes.");

    m.def(
        "decode",
        [](const py::bytes& stream) {
            const std::string s = stream;
            const auto pair = decode_frame(std::span<const std::uint8_t>(
                reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
            return py::make_tuple(frame_tuple(pair.recon), frame_tuple(pair.pred));
        },
        py::arg("stream"), "Decode a single-frame stream to (recon, pred) plane tuples.");

    m.def("psnr", [](const U8Array& a, const U8Array& b) { return psnr_capped(to_plane(a), to_plane(b)); },
          py::arg("a"), py::arg("b"), "PSNR in dB, capped at 100 for identical planes.");

    m.def(
        "bd_rate",
        [](const std::vector<std::pair<double, double>>& anchor, const std::vector<std::pair<double, double>>& test) {
            return bd_rate(to_curve(anchor), to_curve(test)).bd_rate_percent;
        },
        py::arg("anchor"), py::arg("test"), "BD-rate in percent from lists of (bitrate, psnr).");

    m.def(
        "enhance_plane",
        [](const std::string& model_path, const U8Array& recon, std::optional<U8Array> pred) {
            const SavedModel model = load_model(model_path);
            const Plane r = to_plane(recon);
            std::optional<Plane> p;
            if (pred) p = to_plane(*pred);
            return to_array(harness::enhance_plane(model, r, p ? &*p : nullptr));
        },
        py::arg("model"), py::arg("recon"), py::arg("pred") = py::none(), "Apply a saved model to one plane.");

    m.def(
        "save_identity_model",
        [](const std::string& path, int in_channels, int width, int blocks) {
            const ModelSpec spec{in_channels, width, blocks, true};
            save_model(SavedModel{spec, std::nullopt, -1, zero_params<float>(spec)}, path);
        },
        py::arg("path"), py::arg("in_channels") = 2, py::arg("width") = 8, py::arg("blocks") = 1,
        "Write a zero-weight model with global residual (an exact identity).");

    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "pqe");
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(rc, out.str(), err.str());
        },
        py::arg("args"), "Run the pqe command line; returns (exit_code, stdout, stderr).");
}
