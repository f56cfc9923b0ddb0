#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pqe/codec.hpp"
#include "pqe/metrics.hpp"
#include "pqe/model.hpp"
#include "pqe/training.hpp"

// Pipeline orchestration behind the `pqe` command-line tool. Every command is
// a plain function so the experiment driver and the tests run exactly the
// code the CLI runs.

namespace pqe::harness {

namespace fs = std::filesystem;

// A named input: a PGM/PPM still image or a raw 4:2:0 file with dimensions.
struct SourceSpec {
    std::string name;
    std::string sequence_class = "toy";
    fs::path path;
    int width = 0;  // raw YUV only
    int height = 0;
    int frames = 1;  // raw YUV only; 0 = all
};

struct Sequence {
    std::string name;
    std::string sequence_class;
    std::vector<VideoFrame> frames;
};

Sequence load_source(const SourceSpec& src);
// All .pgm/.ppm files of a directory, sorted by file name.
std::vector<SourceSpec> sources_from_directory(const fs::path& dir);

std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys);

nlohmann::json stats_to_json(const FrameStats& s);

// ---- encode / decode ----

struct EncodeOptions {
    fs::path input;
    int width = 0;  // raw YUV input only
    int height = 0;
    int frames = 0;  // 0 = all
    int qp = 32;
    int block = 16;
    double lambda_scale = kDefaultLambdaScale;
    bool record_modes = false;
    fs::path out_dir;
};

struct SequenceEncoding {
    std::vector<FrameStats> stats;
    std::vector<VideoFrame> recon;
    std::vector<VideoFrame> pred;
    std::int64_t total_bits = 0;
    double psnr(Component c) const;  // mean over frames, capped at kPsnrCap
};

// Encodes every frame; writes recon.yuv, pred.yuv, coded.pqic, stats.json.
SequenceEncoding encode_sequence(const std::vector<VideoFrame>& frames, const CodecConfig& cfg, const fs::path& out_dir,
                                 bool record_modes = false);
SequenceEncoding cmd_encode(const EncodeOptions& opt);

struct DecodeOptions {
    fs::path input;
    fs::path out_dir;
};

// Writes recon.yuv and pred.yuv; returns the number of frames.
int cmd_decode(const DecodeOptions& opt);

// ---- dataset ----

struct ManifestEntry {
    std::string orig_path;  // relative to the manifest directory
    std::string recon_path;
    std::string pred_path;
    Component component = Component::Y;
    int qp = 0;
    int width = 0;
    int height = 0;
    std::string source;
    int x = 0;
    int y = 0;
};

std::vector<ManifestEntry> read_manifest(const fs::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path);

struct DatasetOptions {
    std::vector<SourceSpec> sources;
    std::vector<int> qps = {22, 27, 32, 37, 42, 47};
    std::vector<Component> components = {Component::Y, Component::U, Component::V};
    int patches_per_image = 10;
    int patch = kDefaultPatchSize;
    int block = 16;
    std::uint64_t seed = 0;
    fs::path out;  // manifest.json; patches and encodes go next to it
};

struct DatasetResult {
    std::vector<ManifestEntry> entries;
    // encodings[source][qp index]
    std::vector<Sequence> sequences;
    std::vector<std::vector<SequenceEncoding>> encodings;
};

DatasetResult cmd_build_dataset(const DatasetOptions& opt);

// Patches of one (component, qp) cell, in manifest order.
std::vector<PatchSample> load_patches(const fs::path& manifest, Component component, int qp);

// ---- training ----

struct TrainOptions {
    fs::path manifest;
    Component component = Component::Y;
    int qp = 32;
    bool use_prediction = true;
    int width = 32;
    int blocks = 4;
    bool global_residual = true;
    int epochs = 500;
    int batch_size = 32;
    double lr = 1e-4;
    int decay_every = 0;
    double init_output_gain = 1.0;
    std::uint64_t seed = 0;
    fs::path out;
    fs::path log;  // default: <out>.log.jsonl
};

TrainResult cmd_train(const TrainOptions& opt);

// ---- enhancement ----

inline constexpr int kTileSize = 64;
inline constexpr int kTileOverlap = 8;

// Runs the model over overlapping tiles and stitches the tile centers.
Plane enhance_plane(const SavedModel& model, const Plane& recon, const Plane* pred, int tile = kTileSize,
                    int overlap = kTileOverlap);
VideoFrame enhance_frame(const std::vector<SavedModel>& models, const VideoFrame& recon, const VideoFrame* pred);

struct EnhanceOptions {
    std::vector<fs::path> models;
    fs::path recon;
    fs::path pred;  // required for 2-channel models
    int width = 0;
    int height = 0;
    int qp = -1;  // warn when a model was trained for another QP
    fs::path out;
};

std::vector<VideoFrame> cmd_enhance(const EnhanceOptions& opt, std::ostream& warnings);

// ---- evaluation ----

nlohmann::json cmd_psnr(const fs::path& a, const fs::path& b, int width, int height);

struct LabeledCurve {
    std::string sequence;
    std::string sequence_class;
    std::string component;
    RDCurve points;
};

std::vector<LabeledCurve> read_curves(const fs::path& path);
nlohmann::json curves_to_json(const std::vector<LabeledCurve>& curves);

// Plain-array curve files give one result; labeled files give a result per
// (sequence, component) plus class and overall averages.
nlohmann::json cmd_bdrate(const fs::path& anchor, const fs::path& test, const fs::path& out);

// ---- experiment ----

struct ExperimentConfig {
    std::vector<SourceSpec> sources;
    std::vector<SourceSpec> train_sources;  // empty: train on `sources`
    std::vector<int> qp_list = {22, 27, 32, 37, 42, 47};
    std::vector<int> qp_range_ctc = {22, 27, 32, 37};
    std::vector<int> qp_range_high = {32, 37, 42, 47};
    std::vector<Component> components = {Component::Y, Component::U, Component::V};
    int block_size = 16;
    ModelSpec model{2, 8, 1, true};
    int epochs = 10;
    int batch_size = 8;
    double lr = 1e-3;
    int decay_every = 0;
    double init_output_gain = 1.0;
    int patches_per_image = 8;
    int patch = kDefaultPatchSize;
    std::uint64_t seed = 1;
    fs::path output_dir;

    void validate() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const fs::path& base_dir);
ExperimentConfig load_experiment_config(const fs::path& path);

struct CellStats {
    std::string sequence;
    std::string sequence_class;
    int qp = 0;
    Component component = Component::Y;
    double bitrate = 0.0;
    double psnr_anchor = 0.0;
    double psnr_with_pred = 0.0;
    double psnr_without_pred = 0.0;
};

struct BDCell {
    std::string sequence;
    std::string sequence_class;
    Component component = Component::Y;
    std::optional<double> bd_rate;  // empty when the curves were rejected
    std::string error;
};

struct BDTable {
    std::string range;  // "ctc" or "high"
    std::string arm;    // "with_prediction" or "without_prediction"
    std::vector<int> qps;
    std::vector<BDCell> cells;
};

struct StatsReport {
    std::vector<CellStats> cells;
    std::vector<BDTable> tables;
};

StatsReport cmd_experiment(const ExperimentConfig& cfg, std::ostream& progress);

// Markdown / CSV emitters.
std::string table_markdown(const BDTable& table, const std::vector<Component>& components);
std::string combined_markdown(const StatsReport& report, const std::vector<Component>& components);
std::string report_csv(const StatsReport& report);
nlohmann::json report_json(const StatsReport& report);

}  // namespace pqe::harness
