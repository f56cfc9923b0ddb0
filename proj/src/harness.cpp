#include "pqe/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "pqe/errors.hpp"

namespace pqe::harness {

namespace {

using nlohmann::json;

void require_file(const fs::path& p, const char* what) {
    if (p.empty()) throw ArgumentError(std::string("missing ") + what);
    if (!fs::exists(p)) throw ArgumentError(std::string(what) + " not found: " + p.string());
}

bool is_pnm(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, std::span<const std::uint8_t> bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
    out << text;
}

double json_psnr(double v) { return std::min(v, kPsnrCap); }

std::string qp_dir(int qp) { return "q" + std::to_string(qp); }

std::string arm_name(bool with_prediction) { return with_prediction ? "with_prediction" : "without_prediction"; }

std::vector<float> plane_to_unit(const Plane& p) {
    std::vector<float> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = static_cast<float>(p.samples()[i]) / 255.0f;
    return out;
}

// Tile origins covering [0, extent) with tiles of `tile` and stride tile - 2*overlap.
std::vector<int> tile_origins(int extent, int tile, int overlap) {
    std::vector<int> o{0};
    const int stride = std::max(1, tile - 2 * overlap);
    while (o.back() + tile < extent) o.push_back(std::min(o.back() + stride, extent - tile));
    return o;
}

// Boundaries of the region each tile writes: tile k owns [b[k], b[k+1]).
std::vector<int> tile_bounds(const std::vector<int>& origins, int extent, int tile) {
    std::vector<int> b{0};
    for (std::size_t k = 0; k + 1 < origins.size(); ++k) b.push_back((origins[k] + tile + origins[k + 1]) / 2);
    b.push_back(extent);
    return b;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32)};
    for (auto k : keys) {
        words.push_back(static_cast<std::uint32_t>(k));
        words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Sequence load_source(const SourceSpec& src) {
    require_file(src.path, "input");
    Sequence s;
    s.name = src.name.empty() ? src.path.stem().string() : src.name;
    s.sequence_class = src.sequence_class;
    if (is_pnm(src.path)) {
        s.frames.push_back(load_image_as_frame(src.path));
    } else {
        if (src.width <= 0 || src.height <= 0)
            throw ArgumentError("raw YUV input " + src.path.string() + " needs --width and --height");
        s.frames = read_yuv420(src.path, src.width, src.height, src.frames);
        if (s.frames.empty()) throw ArgumentError("no frames in " + src.path.string());
    }
    return s;
}

std::vector<SourceSpec> sources_from_directory(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ArgumentError("images directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_pnm(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<SourceSpec> out;
    for (const auto& f : files) out.push_back(SourceSpec{f.stem().string(), "toy", f});
    return out;
}

json stats_to_json(const FrameStats& s) {
    json j = {{"qp", s.qp},
              {"total_bits", s.total_bits},
              {"psnr_y", json_psnr(s.psnr_y)},
              {"psnr_u", json_psnr(s.psnr_u)},
              {"psnr_v", json_psnr(s.psnr_v)}};
    if (!s.per_block_modes.empty()) j["per_block_modes"] = s.per_block_modes;
    return j;
}

double SequenceEncoding::psnr(Component c) const {
    if (stats.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& s : stats) sum += std::min(s.psnr(c), kPsnrCap);
    return sum / static_cast<double>(stats.size());
}

SequenceEncoding encode_sequence(const std::vector<VideoFrame>& frames, const CodecConfig& cfg, const fs::path& out_dir,
                                 bool record_modes) {
    SequenceEncoding enc;
    std::vector<std::uint8_t> stream;
    for (const auto& f : frames) {
        auto e = encode_frame(f, cfg, record_modes);
        const auto bytes = serialize_frame(e.coded);
        stream.insert(stream.end(), bytes.begin(), bytes.end());
        enc.total_bits += e.stats.total_bits;
        enc.stats.push_back(std::move(e.stats));
        enc.recon.push_back(std::move(e.frames.recon));
        enc.pred.push_back(std::move(e.frames.pred));
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_yuv420(enc.recon, out_dir / "recon.yuv");
        write_yuv420(enc.pred, out_dir / "pred.yuv");
        write_bytes(out_dir / "coded.pqic", stream);
        json per_frame = json::array();
        for (const auto& s : enc.stats) per_frame.push_back(stats_to_json(s));
        json doc = {{"qp", cfg.qp},
                    {"total_bits", enc.total_bits},
                    {"psnr_y", enc.psnr(Component::Y)},
                    {"psnr_u", enc.psnr(Component::U)},
                    {"psnr_v", enc.psnr(Component::V)},
                    {"frames", per_frame}};
        write_text(out_dir / "stats.json", doc.dump(2) + "\n");
    }
    return enc;
}

SequenceEncoding cmd_encode(const EncodeOptions& opt) {
    if (opt.out_dir.empty()) throw ArgumentError("missing --out-dir");
    SourceSpec src{"", "toy", opt.input, opt.width, opt.height, opt.frames};
    const Sequence seq = load_source(src);
    CodecConfig cfg{opt.qp, opt.block, opt.lambda_scale};
    cfg.validate();
    return encode_sequence(seq.frames, cfg, opt.out_dir, opt.record_modes);
}

int cmd_decode(const DecodeOptions& opt) {
    require_file(opt.input, "coded stream");
    if (opt.out_dir.empty()) throw ArgumentError("missing --out-dir");
    const auto bytes = read_bytes(opt.input);
    const auto coded = parse_stream_sequence(bytes);  // throws before anything is written
    std::vector<VideoFrame> recon, pred;
    for (const auto& c : coded) {
        auto fp = decode_frame(c);
        recon.push_back(std::move(fp.recon));
        pred.push_back(std::move(fp.pred));
    }
    if (!recon.empty())
        for (const auto& f : recon)
            if (f.width() != recon.front().width() || f.height() != recon.front().height())
                throw FormatError("frames of one stream differ in size");
    fs::create_directories(opt.out_dir);
    write_yuv420(recon, opt.out_dir / "recon.yuv");
    write_yuv420(pred, opt.out_dir / "pred.yuv");
    return static_cast<int>(coded.size());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    require_file(path, "manifest");
    std::ifstream in(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw FormatError(path.string() + ": manifest must be a JSON list");
    std::vector<ManifestEntry> out;
    for (const auto& j : doc) {
        try {
            ManifestEntry e;
            e.orig_path = j.at("orig_path").get<std::string>();
            e.recon_path = j.at("recon_path").get<std::string>();
            e.pred_path = j.at("pred_path").get<std::string>();
            e.component = component_from_string(j.at("component").get<std::string>());
            e.qp = j.at("qp").get<int>();
            e.width = j.at("width").get<int>();
            e.height = j.at("height").get<int>();
            e.source = j.value("source", std::string());
            e.x = j.value("x", 0);
            e.y = j.value("y", 0);
            out.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw FormatError(path.string() + ": bad manifest entry: " + ex.what());
        }
    }
    return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
    json doc = json::array();
    for (const auto& e : entries)
        doc.push_back({{"orig_path", e.orig_path},
                       {"recon_path", e.recon_path},
                       {"pred_path", e.pred_path},
                       {"component", std::string(to_string(e.component))},
                       {"qp", e.qp},
                       {"width", e.width},
                       {"height", e.height},
                       {"source", e.source},
                       {"x", e.x},
                       {"y", e.y}});
    write_text(path, doc.dump(1) + "\n");
}

DatasetResult cmd_build_dataset(const DatasetOptions& opt) {
    if (opt.sources.empty()) throw ArgumentError("build-dataset needs at least one source");
    if (opt.qps.empty()) throw ArgumentError("build-dataset needs at least one QP");
    if (opt.out.empty()) throw ArgumentError("missing --out manifest path");
    if (opt.patches_per_image < 1) throw ArgumentError("--patches-per-image must be >= 1");
    const fs::path root = opt.out.parent_path().empty() ? fs::path(".") : opt.out.parent_path();
    fs::create_directories(root);

    DatasetResult res;
    for (const auto& s : opt.sources) res.sequences.push_back(load_source(s));

    // One patch size per component so every (component, qp) cell batches together.
    std::map<Component, int> patch_size;
    for (const Component c : opt.components) {
        int min_dim = INT32_MAX;
        for (const auto& seq : res.sequences)
            for (const auto& f : seq.frames)
                min_dim = std::min({min_dim, f.plane(c).width(), f.plane(c).height()});
        patch_size[c] = min_dim >= opt.patch ? opt.patch : kMinPatchSize;
    }

    for (std::size_t si = 0; si < res.sequences.size(); ++si) {
        const Sequence& seq = res.sequences[si];
        auto& encs = res.encodings.emplace_back();
        for (const int qp : opt.qps) {
            CodecConfig cfg{qp, opt.block};
            cfg.validate();
            const fs::path enc_dir = fs::path("encoded") / seq.name / qp_dir(qp);
            encs.push_back(encode_sequence(seq.frames, cfg, root / enc_dir));
            const SequenceEncoding& enc = encs.back();

            for (const Component c : opt.components) {
                for (std::size_t fi = 0; fi < seq.frames.size(); ++fi) {
                    const Plane& o = seq.frames[fi].plane(c);
                    const Plane& r = enc.recon[fi].plane(c);
                    const Plane& p = enc.pred[fi].plane(c);
                    const auto seed = derive_seed(opt.seed, {si, static_cast<std::uint64_t>(qp),
                                                             static_cast<std::uint64_t>(c), fi});
                    const auto patches =
                        extract_patches(o, r, p, opt.patches_per_image, seed, c, qp, patch_size[c]);
                    const fs::path dir = fs::path("patches") / seq.name / qp_dir(qp);
                    fs::create_directories(root / dir);
                    for (std::size_t k = 0; k < patches.size(); ++k) {
                        const auto& ps = patches[k];
                        const std::string stem = std::string(to_string(c)) + "_f" + std::to_string(fi) + "_" +
                                                 std::to_string(k);
                        ManifestEntry e;
                        e.orig_path = (dir / (stem + "_orig.pgm")).generic_string();
                        e.recon_path = (dir / (stem + "_recon.pgm")).generic_string();
                        e.pred_path = (dir / (stem + "_pred.pgm")).generic_string();
                        write_pgm(o.crop(ps.x, ps.y, ps.size, ps.size), root / e.orig_path);
                        write_pgm(r.crop(ps.x, ps.y, ps.size, ps.size), root / e.recon_path);
                        write_pgm(p.crop(ps.x, ps.y, ps.size, ps.size), root / e.pred_path);
                        e.component = c;
                        e.qp = qp;
                        e.width = ps.size;
                        e.height = ps.size;
                        e.source = seq.name;
                        e.x = ps.x;
                        e.y = ps.y;
                        res.entries.push_back(std::move(e));
                    }
                }
            }
        }
    }
    // integrity check before publishing the manifest
    for (const auto& e : res.entries)
        for (const auto* rel : {&e.orig_path, &e.recon_path, &e.pred_path})
            if (!fs::exists(root / *rel)) throw std::runtime_error("dataset file missing: " + *rel);
    write_manifest(res.entries, opt.out);
    return res;
}

std::vector<PatchSample> load_patches(const fs::path& manifest, Component component, int qp) {
    const auto entries = read_manifest(manifest);
    const fs::path root = manifest.parent_path().empty() ? fs::path(".") : manifest.parent_path();
    std::vector<PatchSample> out;
    for (const auto& e : entries) {
        if (e.component != component || e.qp != qp) continue;
        auto load = [&](const std::string& rel) {
            require_file(root / rel, "patch file");
            const auto img = read_pnm(root / rel);
            const auto* plane = std::get_if<Plane>(&img);
            if (!plane || plane->width() != e.width || plane->height() != e.height)
                throw FormatError("patch " + rel + " does not match its manifest entry");
            return plane_to_unit(*plane);
        };
        if (e.width != e.height) throw FormatError("non-square patch in manifest");
        PatchSample s;
        s.size = e.width;
        s.x = e.x;
        s.y = e.y;
        s.component = e.component;
        s.qp = e.qp;
        s.orig = load(e.orig_path);
        s.recon = load(e.recon_path);
        s.pred = load(e.pred_path);
        out.push_back(std::move(s));
    }
    return out;
}

TrainResult cmd_train(const TrainOptions& opt) {
    if (opt.out.empty()) throw ArgumentError("missing --out model path");
    const auto patches = load_patches(opt.manifest, opt.component, opt.qp);
    if (patches.empty())
        throw ArgumentError("manifest has no patches for component " + std::string(to_string(opt.component)) +
                            " at QP " + std::to_string(opt.qp));

    ModelSpec spec{opt.use_prediction ? 2 : 1, opt.width, opt.blocks, opt.global_residual};
    TrainConfig cfg;
    cfg.batch_size = opt.batch_size;
    cfg.lr_initial = opt.lr;
    cfg.total_epochs = opt.epochs;
    cfg.decay_every = opt.decay_every;
    cfg.init_output_gain = opt.init_output_gain;
    cfg.seed = opt.seed;
    cfg.component = opt.component;
    cfg.qp = opt.qp;
    cfg.use_prediction = opt.use_prediction;

    const fs::path log_path = opt.log.empty() ? fs::path(opt.out.string() + ".log.jsonl") : opt.log;
    if (opt.out.has_parent_path()) fs::create_directories(opt.out.parent_path());
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open " + log_path.string() + " for writing");
    auto result = train_model(patches, spec, cfg, [&log](const EpochLog& e) {
        log << json{{"epoch", e.epoch}, {"lr", e.lr}, {"mean_loss", e.mean_loss}, {"wall_ms", e.wall_ms}}.dump()
            << "\n";
        log.flush();
    });
    save_model(SavedModel{spec, opt.component, opt.qp, result.params}, opt.out);
    return result;
}

Plane enhance_plane(const SavedModel& model, const Plane& recon, const Plane* pred, int tile, int overlap) {
    const ModelSpec& spec = model.spec;
    if (spec.in_channels == 2 && !pred)
        throw ArgumentError("model expects a prediction input (2 channels) but none was given");
    if (pred && (pred->width() != recon.width() || pred->height() != recon.height()))
        throw ArgumentError("prediction plane size differs from reconstruction");
    const int w = recon.width();
    const int h = recon.height();
    const int tw = std::min(tile, w);
    const int th = std::min(tile, h);
    const auto xo = tile_origins(w, tw, overlap);
    const auto yo = tile_origins(h, th, overlap);
    const auto xb = tile_bounds(xo, w, tw);
    const auto yb = tile_bounds(yo, h, th);

    struct TileRef {
        std::size_t ix, iy;
    };
    std::vector<TileRef> tiles;
    for (std::size_t iy = 0; iy < yo.size(); ++iy)
        for (std::size_t ix = 0; ix < xo.size(); ++ix) tiles.push_back({ix, iy});

    Plane out(w, h);
    constexpr std::size_t kChunk = 8;
    for (std::size_t start = 0; start < tiles.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, tiles.size() - start);
        Tensor input(Shape4{static_cast<int>(count), spec.in_channels, th, tw});
        for (std::size_t t = 0; t < count; ++t) {
            const auto [ix, iy] = tiles[start + t];
            const int ox = xo[ix], oy = yo[iy];
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < tw; ++x) {
                    input.at(static_cast<int>(t), 0, y, x) = static_cast<float>(recon.at(ox + x, oy + y)) / 255.0f;
                    if (spec.in_channels == 2)
                        input.at(static_cast<int>(t), 1, y, x) = static_cast<float>(pred->at(ox + x, oy + y)) / 255.0f;
                }
        }
        const Tensor result = model_forward(input, model.params, spec, RunMode::Eval);
        for (std::size_t t = 0; t < count; ++t) {
            const auto [ix, iy] = tiles[start + t];
            const int ox = xo[ix], oy = yo[iy];
            for (int y = yb[iy]; y < yb[iy + 1]; ++y)
                for (int x = xb[ix]; x < xb[ix + 1]; ++x) {
                    const float v = std::clamp(result.at(static_cast<int>(t), 0, y - oy, x - ox), 0.0f, 1.0f);
                    out.at(x, y) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
                }
        }
    }
    return out;
}

VideoFrame enhance_frame(const std::vector<SavedModel>& models, const VideoFrame& recon, const VideoFrame* pred) {
    VideoFrame out = recon;
    std::set<Component> seen;
    for (const auto& m : models) {
        const Component c = m.component.value_or(Component::Y);
        if (!seen.insert(c).second)
            throw ArgumentError("two models given for component " + std::string(to_string(c)));
        out.plane(c) = enhance_plane(m, recon.plane(c), pred ? &pred->plane(c) : nullptr);
    }
    return out;
}

std::vector<VideoFrame> cmd_enhance(const EnhanceOptions& opt, std::ostream& warnings) {
    if (opt.models.empty()) throw ArgumentError("enhance needs at least one --model");
    if (opt.out.empty()) throw ArgumentError("missing --out");
    require_file(opt.recon, "reconstruction");
    std::vector<SavedModel> models;
    bool needs_pred = false;
    for (const auto& p : opt.models) {
        require_file(p, "model");
        models.push_back(load_model(p));
        const auto& m = models.back();
        needs_pred = needs_pred || m.spec.in_channels == 2;
        if (opt.qp >= 0 && m.qp >= 0 && m.qp != opt.qp)
            warnings << "warning: model " << p.string() << " was trained for QP " << m.qp << ", input is QP "
                     << opt.qp << "\n";
        if (!m.component)
            warnings << "warning: model " << p.string() << " has no component tag, applying it to Y\n";
    }
    if (needs_pred && opt.pred.empty())
        throw ArgumentError("a prediction-aware model needs --pred");
    const auto recon = read_yuv420(opt.recon, opt.width, opt.height);
    std::vector<VideoFrame> pred;
    if (!opt.pred.empty()) {
        require_file(opt.pred, "prediction");
        pred = read_yuv420(opt.pred, opt.width, opt.height);
        if (pred.size() != recon.size()) throw ArgumentError("--recon and --pred hold different frame counts");
    }
    std::vector<VideoFrame> out;
    for (std::size_t i = 0; i < recon.size(); ++i)
        out.push_back(enhance_frame(models, recon[i], pred.empty() ? nullptr : &pred[i]));
    if (opt.out.has_parent_path()) fs::create_directories(opt.out.parent_path());
    write_yuv420(out, opt.out);
    return out;
}

json cmd_psnr(const fs::path& a, const fs::path& b, int width, int height) {
    require_file(a, "input");
    require_file(b, "input");
    const auto fa = read_yuv420(a, width, height);
    const auto fb = read_yuv420(b, width, height);
    if (fa.size() != fb.size()) throw ArgumentError("inputs hold different frame counts");
    json per_frame = json::array();
    std::array<double, 3> sum{};
    for (std::size_t i = 0; i < fa.size(); ++i) {
        std::array<double, 3> v{};
        for (int c = 0; c < 3; ++c) {
            v[c] = psnr_capped(fa[i].plane(static_cast<Component>(c)), fb[i].plane(static_cast<Component>(c)));
            sum[c] += v[c];
        }
        per_frame.push_back({{"psnr_y", v[0]}, {"psnr_u", v[1]}, {"psnr_v", v[2]}});
    }
    const double n = std::max<double>(1.0, static_cast<double>(fa.size()));
    return {{"frames", fa.size()},
            {"psnr_y", sum[0] / n},
            {"psnr_u", sum[1] / n},
            {"psnr_v", sum[2] / n},
            {"per_frame", per_frame}};
}

namespace {

RDCurve curve_from_json(const json& arr) {
    RDCurve c;
    for (const auto& p : arr) c.push_back({p.at("bitrate").get<double>(), p.at("psnr").get<double>()});
    return c;
}

json curve_to_json(const RDCurve& c) {
    json arr = json::array();
    for (const auto& p : c) arr.push_back({{"bitrate", p.bitrate}, {"psnr", p.psnr}});
    return arr;
}

}  // namespace

std::vector<LabeledCurve> read_curves(const fs::path& path) {
    require_file(path, "curve file");
    std::ifstream in(path);
    try {
        const json doc = json::parse(in);
        if (doc.is_array()) return {LabeledCurve{"", "", "", curve_from_json(doc)}};
        std::vector<LabeledCurve> out;
        for (const auto& c : doc.at("curves"))
            out.push_back(LabeledCurve{c.at("sequence").get<std::string>(), c.value("class", std::string("toy")),
                                       c.value("component", std::string("Y")), curve_from_json(c.at("points"))});
        return out;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

json curves_to_json(const std::vector<LabeledCurve>& curves) {
    json arr = json::array();
    for (const auto& c : curves)
        arr.push_back({{"sequence", c.sequence},
                       {"class", c.sequence_class},
                       {"component", c.component},
                       {"points", curve_to_json(c.points)}});
    return {{"curves", arr}};
}

json cmd_bdrate(const fs::path& anchor_path, const fs::path& test_path, const fs::path& out) {
    const auto anchor = read_curves(anchor_path);
    const auto test = read_curves(test_path);
    json result;
    if (anchor.size() == 1 && test.size() == 1 && anchor[0].sequence.empty() && test[0].sequence.empty()) {
        const auto r = bd_rate(anchor[0].points, test[0].points);
        result = {{"bd_rate_percent", r.bd_rate_percent}, {"overlap", {r.overlap_low, r.overlap_high}}};
    } else {
        std::map<std::pair<std::string, std::string>, const LabeledCurve*> by_key;
        for (const auto& c : test) by_key[{c.sequence, c.component}] = &c;
        json rows = json::array();
        std::map<std::string, std::vector<LabeledBD>> per_component;
        for (const auto& a : anchor) {
            const auto it = by_key.find({a.sequence, a.component});
            if (it == by_key.end())
                throw ArgumentError("test curves lack sequence '" + a.sequence + "' component " + a.component);
            const auto r = bd_rate(a.points, it->second->points);
            rows.push_back({{"sequence", a.sequence},
                            {"class", a.sequence_class},
                            {"component", a.component},
                            {"bd_rate_percent", r.bd_rate_percent},
                            {"overlap", {r.overlap_low, r.overlap_high}}});
            per_component[a.component].push_back({a.sequence, a.sequence_class, r.bd_rate_percent});
        }
        json class_avg = json::object(), overall = json::object();
        for (const auto& [comp, list] : per_component) {
            const auto agg = aggregate_bd(list);
            class_avg[comp] = agg.class_average;
            overall[comp] = agg.overall;
        }
        result = {{"results", rows}, {"class_average", class_avg}, {"overall", overall}};
    }
    if (!out.empty()) {
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        write_text(out, result.dump(2) + "\n");
    }
    return result;
}

// ---- experiment ----

void ExperimentConfig::validate() const {
    if (sources.empty()) throw ArgumentError("experiment needs at least one source");
    if (output_dir.empty()) throw ArgumentError("experiment needs an output_dir");
    if (components.empty()) throw ArgumentError("experiment needs at least one component");
    for (const auto* range : {&qp_range_ctc, &qp_range_high}) {
        if (range->size() < 4) throw ArgumentError("each QP range needs at least 4 QPs for BD-rate");
        for (int qp : *range)
            if (std::find(qp_list.begin(), qp_list.end(), qp) == qp_list.end())
                throw ArgumentError("QP " + std::to_string(qp) + " of a range is not in qp_list");
    }
    model.validate();
    if (epochs < 1 || batch_size < 1 || patches_per_image < 1 || !(lr > 0) || !(init_output_gain >= 0))
        throw ArgumentError("invalid training settings in experiment config");
}

namespace {

std::vector<SourceSpec> parse_sources(const json& arr, const fs::path& base) {
    std::vector<SourceSpec> out;
    for (const auto& j : arr) {
        SourceSpec s;
        s.path = fs::path(j.at("path").get<std::string>());
        if (s.path.is_relative()) s.path = base / s.path;
        s.name = j.value("name", s.path.stem().string());
        s.sequence_class = j.value("class", std::string("toy"));
        s.width = j.value("width", 0);
        s.height = j.value("height", 0);
        s.frames = j.value("frames", 1);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc, const fs::path& base) {
    ExperimentConfig c;
    try {
        if (doc.contains("sources")) c.sources = parse_sources(doc.at("sources"), base);
        if (doc.contains("images_dir")) {
            fs::path dir = doc.at("images_dir").get<std::string>();
            if (dir.is_relative()) dir = base / dir;
            for (auto& s : sources_from_directory(dir)) c.sources.push_back(std::move(s));
        }
        if (doc.contains("train_sources")) c.train_sources = parse_sources(doc.at("train_sources"), base);
        c.qp_list = doc.value("qp_list", c.qp_list);
        c.qp_range_ctc = doc.value("qp_range_ctc", c.qp_range_ctc);
        c.qp_range_high = doc.value("qp_range_high", c.qp_range_high);
        if (doc.contains("components")) {
            c.components.clear();
            for (const auto& s : doc.at("components")) c.components.push_back(component_from_string(s.get<std::string>()));
        }
        c.block_size = doc.value("block_size", c.block_size);
        if (doc.contains("model")) {
            const auto& m = doc.at("model");
            c.model.width = m.value("width", c.model.width);
            c.model.num_res_blocks = m.value("num_res_blocks", c.model.num_res_blocks);
            c.model.global_residual = m.value("global_residual", c.model.global_residual);
        }
        if (doc.contains("train")) {
            const auto& t = doc.at("train");
            c.epochs = t.value("epochs", c.epochs);
            c.batch_size = t.value("batch_size", c.batch_size);
            c.lr = t.value("lr", c.lr);
            c.decay_every = t.value("decay_every", c.decay_every);
            c.init_output_gain = t.value("init_output_gain", c.init_output_gain);
            c.patches_per_image = t.value("patches_per_image", c.patches_per_image);
            c.patch = t.value("patch", c.patch);
        }
        c.seed = doc.value("seed", c.seed);
        fs::path out = doc.value("output_dir", std::string("experiment_out"));
        c.output_dir = out.is_relative() ? base / out : out;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    require_file(path, "experiment config");
    std::ifstream in(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return parse_experiment_config(doc, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string source_flags(const std::vector<SourceSpec>& sources) {
    std::string s;
    for (const auto& src : sources) {
        if (is_pnm(src.path)) {
            s += " --image " + src.path.string();
        } else {
            s += " --yuv " + src.path.string() + " --width " + std::to_string(src.width) + " --height " +
                 std::to_string(src.height) + " --frames " + std::to_string(src.frames);
        }
    }
    return s;
}

}  // namespace

StatsReport cmd_experiment(const ExperimentConfig& cfg, std::ostream& progress) {
    cfg.validate();
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);
    std::ostringstream commands;

    // 1. encode + dataset
    DatasetOptions ds;
    ds.sources = cfg.train_sources.empty() ? cfg.sources : cfg.train_sources;
    ds.qps = cfg.qp_list;
    ds.components = cfg.components;
    ds.patches_per_image = cfg.patches_per_image;
    ds.patch = cfg.patch;
    ds.block = cfg.block_size;
    ds.seed = derive_seed(cfg.seed, {1});
    ds.out = out / "dataset" / "manifest.json";
    progress << "[experiment] encoding " << ds.sources.size() << " source(s) at " << ds.qps.size()
             << " QPs and extracting patches\n";
    DatasetResult dataset = cmd_build_dataset(ds);
    {
        std::string comps;
        for (auto c : cfg.components) comps += (comps.empty() ? "" : ",") + std::string(to_string(c));
        commands << "pqe build-dataset" << source_flags(ds.sources) << " --qps " << join_ints(ds.qps)
                 << " --components " << comps << " --patches-per-image " << ds.patches_per_image << " --patch "
                 << ds.patch << " --block " << ds.block << " --seed " << ds.seed << " --out " << ds.out.string()
                 << "\n";
    }

    std::vector<Sequence> eval_sequences;
    std::vector<std::vector<SequenceEncoding>> eval_encodings;
    std::vector<fs::path> eval_dirs_root;
    if (cfg.train_sources.empty()) {
        eval_sequences = dataset.sequences;
        eval_encodings = dataset.encodings;
        for (const auto& s : eval_sequences) eval_dirs_root.push_back(out / "dataset" / "encoded" / s.name);
    } else {
        for (const auto& src : cfg.sources) {
            eval_sequences.push_back(load_source(src));
            const fs::path root = out / "eval" / eval_sequences.back().name;
            eval_dirs_root.push_back(root);
            auto& encs = eval_encodings.emplace_back();
            for (int qp : cfg.qp_list) {
                encs.push_back(
                    encode_sequence(eval_sequences.back().frames, CodecConfig{qp, cfg.block_size}, root / qp_dir(qp)));
                commands << "pqe encode --input " << src.path.string() << " --width " << src.width << " --height "
                         << src.height << " --qp " << qp << " --block " << cfg.block_size << " --out-dir "
                         << (root / qp_dir(qp)).string() << "\n";
            }
        }
    }

    // 2. train both arms per (component, qp) and enhance every evaluation sequence
    StatsReport report;
    std::map<std::tuple<std::size_t, int, Component>, CellStats> cells;
    for (std::size_t si = 0; si < eval_sequences.size(); ++si)
        for (std::size_t qi = 0; qi < cfg.qp_list.size(); ++qi)
            for (const Component c : cfg.components) {
                CellStats cs;
                cs.sequence = eval_sequences[si].name;
                cs.sequence_class = eval_sequences[si].sequence_class;
                cs.qp = cfg.qp_list[qi];
                cs.component = c;
                cs.bitrate = static_cast<double>(eval_encodings[si][qi].total_bits);
                cs.psnr_anchor = eval_encodings[si][qi].psnr(c);
                cells[{si, cs.qp, c}] = cs;
            }

    fs::create_directories(out / "models");
    fs::create_directories(out / "enhanced");
    for (const Component c : cfg.components) {
        for (std::size_t qi = 0; qi < cfg.qp_list.size(); ++qi) {
            const int qp = cfg.qp_list[qi];
            const auto seed = derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(qp)});
            for (const bool with_pred : {true, false}) {
                TrainOptions to;
                to.manifest = ds.out;
                to.component = c;
                to.qp = qp;
                to.use_prediction = with_pred;
                to.width = cfg.model.width;
                to.blocks = cfg.model.num_res_blocks;
                to.global_residual = cfg.model.global_residual;
                to.epochs = cfg.epochs;
                to.batch_size = cfg.batch_size;
                to.lr = cfg.lr;
                to.decay_every = cfg.decay_every;
                to.init_output_gain = cfg.init_output_gain;
                to.seed = seed;
                to.out = out / "models" / (std::string(to_string(c)) + "_" + qp_dir(qp) + "_" + arm_name(with_pred) + ".pqen");
                progress << "[experiment] training " << to_string(c) << " QP " << qp << " " << arm_name(with_pred)
                         << "\n";
                const auto tr = cmd_train(to);
                progress << "[experiment]   loss " << tr.log.front().mean_loss << " -> " << tr.log.back().mean_loss
                         << "\n";
                commands << "pqe train --manifest " << to.manifest.string() << " --component " << to_string(c)
                         << " --qp " << qp << " --use-prediction " << (with_pred ? "true" : "false") << " --width "
                         << to.width << " --blocks " << to.blocks << " --global-residual "
                         << (to.global_residual ? "true" : "false") << " --epochs " << to.epochs << " --batch "
                         << to.batch_size << " --lr " << to.lr << " --decay-every " << to.decay_every
                         << " --init-output-gain " << to.init_output_gain << " --seed "
                         << seed << " --out " << to.out.string() << "\n";

                const SavedModel model = load_model(to.out);
                for (std::size_t si = 0; si < eval_sequences.size(); ++si) {
                    const auto& seq = eval_sequences[si];
                    const auto& enc = eval_encodings[si][qi];
                    double sum = 0.0;
                    std::vector<VideoFrame> enhanced;
                    for (std::size_t fi = 0; fi < seq.frames.size(); ++fi) {
                        VideoFrame f = enc.recon[fi];
                        f.plane(c) = enhance_plane(model, enc.recon[fi].plane(c), with_pred ? &enc.pred[fi].plane(c) : nullptr);
                        sum += psnr_capped(seq.frames[fi].plane(c), f.plane(c));
                        enhanced.push_back(std::move(f));
                    }
                    const double mean = sum / static_cast<double>(seq.frames.size());
                    auto& cell = cells[{si, qp, c}];
                    (with_pred ? cell.psnr_with_pred : cell.psnr_without_pred) = mean;

                    const fs::path enc_dir = eval_dirs_root[si] / qp_dir(qp);
                    const fs::path enh = out / "enhanced" /
                                         (seq.name + "_" + std::string(to_string(c)) + "_" + qp_dir(qp) + "_" +
                                          arm_name(with_pred) + ".yuv");
                    write_yuv420(enhanced, enh);
                    commands << "pqe enhance --model " << to.out.string() << " --recon "
                             << (enc_dir / "recon.yuv").string();
                    if (with_pred) commands << " --pred " << (enc_dir / "pred.yuv").string();
                    commands << " --width " << seq.frames.front().width() << " --height "
                             << seq.frames.front().height() << " --qp " << qp << " --out " << enh.string() << "\n";
                }
            }
        }
    }
    for (auto& [key, cs] : cells) report.cells.push_back(cs);

    // 3. BD-rate tables
    fs::create_directories(out / "curves");
    const std::vector<std::pair<std::string, std::vector<int>>> ranges = {{"ctc", cfg.qp_range_ctc},
                                                                          {"high", cfg.qp_range_high}};
    for (const auto& [range, qps] : ranges) {
        std::vector<LabeledCurve> anchor_curves, with_curves, without_curves;
        for (std::size_t si = 0; si < eval_sequences.size(); ++si)
            for (const Component c : cfg.components) {
                LabeledCurve a{eval_sequences[si].name, eval_sequences[si].sequence_class, std::string(to_string(c)), {}};
                LabeledCurve w = a, wo = a;
                for (int qp : qps) {
                    const auto& cs = cells.at({si, qp, c});
                    a.points.push_back({cs.bitrate, cs.psnr_anchor});
                    w.points.push_back({cs.bitrate, cs.psnr_with_pred});
                    wo.points.push_back({cs.bitrate, cs.psnr_without_pred});
                }
                anchor_curves.push_back(std::move(a));
                with_curves.push_back(std::move(w));
                without_curves.push_back(std::move(wo));
            }
        const fs::path anchor_file = out / "curves" / (range + "_anchor.json");
        write_text(anchor_file, curves_to_json(anchor_curves).dump(2) + "\n");
        for (const bool with_pred : {false, true}) {
            const auto& test_curves = with_pred ? with_curves : without_curves;
            const fs::path test_file = out / "curves" / (range + "_" + arm_name(with_pred) + ".json");
            write_text(test_file, curves_to_json(test_curves).dump(2) + "\n");
            commands << "pqe bdrate --anchor " << anchor_file.string() << " --test " << test_file.string()
                     << " --out " << (out / "curves" / (range + "_" + arm_name(with_pred) + "_bd.json")).string()
                     << "\n";
            BDTable table{range, arm_name(with_pred), qps, {}};
            for (std::size_t i = 0; i < anchor_curves.size(); ++i) {
                BDCell cell;
                cell.sequence = anchor_curves[i].sequence;
                cell.sequence_class = anchor_curves[i].sequence_class;
                cell.component = component_from_string(anchor_curves[i].component);
                try {
                    cell.bd_rate = bd_rate(anchor_curves[i].points, test_curves[i].points).bd_rate_percent;
                } catch (const CurveError& e) {
                    cell.error = e.what();
                } catch (const OverlapError& e) {
                    cell.error = e.what();
                }
                table.cells.push_back(std::move(cell));
            }
            write_text(out / ("report_" + range + "_" + arm_name(with_pred) + ".md"),
                       table_markdown(table, cfg.components));
            report.tables.push_back(std::move(table));
        }
    }

    write_text(out / "report.md", combined_markdown(report, cfg.components));
    write_text(out / "report.csv", report_csv(report));
    write_text(out / "stats.json", report_json(report).dump(2) + "\n");
    write_text(out / "commands.txt", commands.str());
    progress << "[experiment] reports written to " << out.string() << "\n";
    return report;
}

}  // namespace pqe::harness
