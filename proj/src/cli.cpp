#include "pqe/cli.hpp"

#include <CLI11.hpp>
#include <ostream>

#include "pqe/errors.hpp"
#include "pqe/harness.hpp"

namespace pqe {

namespace {

using namespace harness;

std::vector<Component> parse_components(const std::vector<std::string>& names) {
    std::vector<Component> out;
    for (const auto& n : names) out.push_back(component_from_string(n));
    return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Prediction-aware quality enhancement toolkit"};
    app.require_subcommand(1);

    EncodeOptions enc;
    auto* c_enc = app.add_subcommand("encode", "Intra-code a PGM/PPM image or raw 4:2:0 file");
    c_enc->add_option("--input", enc.input, "Input image (.pgm/.ppm) or raw YUV 4:2:0 file")->required();
    c_enc->add_option("--width", enc.width, "Frame width (raw YUV only)");
    c_enc->add_option("--height", enc.height, "Frame height (raw YUV only)");
    c_enc->add_option("--frames", enc.frames, "Frames to encode, 0 = all")->capture_default_str();
    c_enc->add_option("--qp", enc.qp, "Quantization parameter")->capture_default_str();
    c_enc->add_option("--block", enc.block, "Block size: 4, 8, 16 or 32")->capture_default_str();
    c_enc->add_option("--lambda-scale", enc.lambda_scale, "Lagrangian scale factor")->capture_default_str();
    c_enc->add_flag("--record-modes", enc.record_modes, "Store per-block modes in stats.json");
    c_enc->add_option("--out-dir", enc.out_dir, "Output directory")->required();

    DecodeOptions dec;
    auto* c_dec = app.add_subcommand("decode", "Decode a .pqic stream to recon.yuv and pred.yuv");
    c_dec->add_option("--input", dec.input, "Coded stream")->required();
    c_dec->add_option("--out-dir", dec.out_dir, "Output directory")->required();

    DatasetOptions ds;
    std::string images_dir;
    std::vector<std::string> images, yuvs, ds_components{"Y", "U", "V"};
    int yuv_w = 0, yuv_h = 0, yuv_frames = 1;
    auto* c_ds = app.add_subcommand("build-dataset", "Encode sources at every QP and extract training patches");
    c_ds->add_option("--images-dir", images_dir, "Directory of .pgm/.ppm images");
    c_ds->add_option("--image", images, "Image file (repeatable)");
    c_ds->add_option("--yuv", yuvs, "Raw YUV 4:2:0 file (repeatable, shares --width/--height)");
    c_ds->add_option("--width", yuv_w, "Width of --yuv inputs");
    c_ds->add_option("--height", yuv_h, "Height of --yuv inputs");
    c_ds->add_option("--frames", yuv_frames, "Frames per --yuv input, 0 = all")->capture_default_str();
    c_ds->add_option("--qps", ds.qps, "Comma-separated QP list")->delimiter(',')->capture_default_str();
    c_ds->add_option("--components", ds_components, "Comma-separated subset of Y,U,V")->delimiter(',');
    c_ds->add_option("--patches-per-image", ds.patches_per_image, "Patches per frame and component")
        ->capture_default_str();
    c_ds->add_option("--patch", ds.patch, "Patch size")->capture_default_str();
    c_ds->add_option("--block", ds.block, "Codec block size")->capture_default_str();
    c_ds->add_option("--seed", ds.seed, "Root seed")->capture_default_str();
    c_ds->add_option("--out", ds.out, "Manifest path (patches are written beside it)")->required();

    TrainOptions tr;
    auto* c_tr = app.add_subcommand("train", "Train one enhancement model for a (component, QP) cell");
    c_tr->add_option("--manifest", tr.manifest, "Dataset manifest")->required();
    std::string tr_component;
    c_tr->add_option("--component", tr_component, "Y, U or V")->check(CLI::IsMember({"Y", "U", "V"}))->required();
    c_tr->add_option("--qp", tr.qp, "QP of the training cell")->required();
    c_tr->add_option("--use-prediction", tr.use_prediction, "true: recon+pred input, false: recon only")
        ->capture_default_str();
    c_tr->add_option("--width", tr.width, "Feature channels")->capture_default_str();
    c_tr->add_option("--blocks", tr.blocks, "Residual blocks")->capture_default_str();
    c_tr->add_option("--global-residual", tr.global_residual, "Add the reconstruction to the output")
        ->capture_default_str();
    c_tr->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
    c_tr->add_option("--batch", tr.batch_size, "Batch size")->capture_default_str();
    c_tr->add_option("--lr", tr.lr, "Initial learning rate")->capture_default_str();
    c_tr->add_option("--decay-every", tr.decay_every, "Epochs between x0.1 decays, 0 = epochs/5")
        ->capture_default_str();
    c_tr->add_option("--init-output-gain", tr.init_output_gain, "Scale of the initial output conv kernel")
        ->capture_default_str();
    c_tr->add_option("--seed", tr.seed, "Seed")->capture_default_str();
    c_tr->add_option("--out", tr.out, "Model file")->required();
    c_tr->add_option("--log", tr.log, "Training log (JSON lines), default <out>.log.jsonl");

    EnhanceOptions en;
    auto* c_en = app.add_subcommand("enhance", "Apply trained models to a reconstructed sequence");
    c_en->add_option("--model", en.models, "Model file (repeatable, one per component)")->required();
    c_en->add_option("--recon", en.recon, "Reconstruction (raw 4:2:0)")->required();
    c_en->add_option("--pred", en.pred, "Prediction frames (raw 4:2:0)");
    c_en->add_option("--width", en.width, "Frame width")->required();
    c_en->add_option("--height", en.height, "Frame height")->required();
    c_en->add_option("--qp", en.qp, "QP of the input, used to check model headers");
    c_en->add_option("--out", en.out, "Enhanced output (raw 4:2:0)")->required();

    std::string psnr_a, psnr_b;
    int psnr_w = 0, psnr_h = 0;
    auto* c_ps = app.add_subcommand("psnr", "Per-plane PSNR between two raw 4:2:0 files");
    c_ps->add_option("a", psnr_a, "Reference")->required();
    c_ps->add_option("b", psnr_b, "Distorted")->required();
    c_ps->add_option("--width", psnr_w, "Frame width")->required();
    c_ps->add_option("--height", psnr_h, "Frame height")->required();

    std::string bd_anchor, bd_test, bd_out;
    auto* c_bd = app.add_subcommand("bdrate", "Bjontegaard delta rate between two RD curve files");
    c_bd->add_option("--anchor", bd_anchor, "Anchor curves (JSON)")->required();
    c_bd->add_option("--test", bd_test, "Test curves (JSON)")->required();
    c_bd->add_option("--out", bd_out, "Result file (JSON)");

    std::string exp_config;
    auto* c_ex = app.add_subcommand("experiment", "Run the full ablation and write the BD-rate tables");
    c_ex->add_option("--config", exp_config, "Experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        if (*c_enc) {
            const auto r = cmd_encode(enc);
            out << nlohmann::json{{"frames", r.stats.size()},
                                  {"total_bits", r.total_bits},
                                  {"psnr_y", r.psnr(Component::Y)},
                                  {"psnr_u", r.psnr(Component::U)},
                                  {"psnr_v", r.psnr(Component::V)}}
                       .dump()
                << "\n";
        } else if (*c_dec) {
            out << "decoded " << cmd_decode(dec) << " frame(s)\n";
        } else if (*c_ds) {
            if (!images_dir.empty()) ds.sources = sources_from_directory(images_dir);
            for (const auto& p : images) ds.sources.push_back(SourceSpec{fs::path(p).stem().string(), "toy", p});
            for (const auto& p : yuvs)
                ds.sources.push_back(SourceSpec{fs::path(p).stem().string(), "toy", p, yuv_w, yuv_h, yuv_frames});
            ds.components = parse_components(ds_components);
            const auto r = cmd_build_dataset(ds);
            out << "wrote " << r.entries.size() << " patch entries to " << ds.out.string() << "\n";
        } else if (*c_tr) {
            tr.component = component_from_string(tr_component);
            const auto r = cmd_train(tr);
            out << "trained " << r.log.size() << " epochs, loss " << r.log.front().mean_loss << " -> "
                << r.log.back().mean_loss << "\n";
        } else if (*c_en) {
            const auto r = cmd_enhance(en, err);
            out << "enhanced " << r.size() << " frame(s)\n";
        } else if (*c_ps) {
            out << cmd_psnr(psnr_a, psnr_b, psnr_w, psnr_h).dump(2) << "\n";
        } else if (*c_bd) {
            out << cmd_bdrate(bd_anchor, bd_test, bd_out).dump(2) << "\n";
        } else if (*c_ex) {
            cmd_experiment(load_experiment_config(exp_config), err);
        }
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace pqe
