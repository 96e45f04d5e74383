#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "u3m/u3m.hpp"

namespace {

void maybe_timestamp(bool enabled, std::ostream& out, const char* what) {
    if (!enabled) return;
    std::time_t now = std::time(nullptr);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%d %H:%M:%S", std::localtime(&now));
    out << "# " << what << " at " << buf << "\n";
}

u3m::ModelConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return u3m::parse_config_text("");
    return u3m::parse_config(path);
}

void apply_env_seed(u3m::ModelConfig& cfg) {
    if (const char* env = std::getenv("U3M_SEED")) {
        cfg.train.seed = static_cast<uint64_t>(std::stoull(env));
    }
}

int run_train(const std::string& config_path, const std::string& data_root, const std::string& split,
              const std::string& out_ckpt, const std::string& log_path, long epochs_override, double lr_override,
              long seed_override, bool timestamps) {
    u3m::ModelConfig cfg = load_config_or_default(config_path);
    apply_env_seed(cfg);
    if (epochs_override > 0) cfg.train.epochs = static_cast<size_t>(epochs_override);
    if (lr_override > 0.0) cfg.train.lr = lr_override;
    if (seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(seed_override);
    cfg.validate();

    auto data = u3m::load_dataset_dir(data_root, split, cfg.modalities, cfg.head.num_classes,
                                      cfg.train.ignore_index, cfg.train.pad_to_32);
    u3m::Model model(cfg);

    maybe_timestamp(timestamps, std::cout, "train started");
    std::ofstream log_file;
    std::ostream* csv = &std::cout;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw u3m::io_error("cannot write log file " + log_path);
        csv = &log_file;
    }
    u3m::TrainResult res = u3m::train(model, data, cfg.train, out_ckpt, csv);
    maybe_timestamp(timestamps, std::cout, "train finished");
    std::cout << "trained " << res.steps << " steps; final loss " << res.final_loss << "; best mIoU "
              << res.best_miou << " (epoch " << res.best_epoch << ")\n";
    if (!out_ckpt.empty()) std::cout << "checkpoint written to " << out_ckpt << " (best: " << out_ckpt << ".best)\n";
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& data_root, const std::string& split,
             const std::string& csv_path, bool timestamps) {
    u3m::Model model = u3m::load_checkpoint(ckpt);
    const u3m::ModelConfig& cfg = model.config();
    auto data = u3m::load_dataset_dir(data_root, split, cfg.modalities, cfg.head.num_classes,
                                      cfg.train.ignore_index, cfg.train.pad_to_32);
    maybe_timestamp(timestamps, std::cout, "eval started");
    u3m::ConfusionMatrix cm = u3m::evaluate(model, data, cfg.train.ignore_index);

    std::vector<std::string> names;
    for (size_t c = 0; c < cfg.head.num_classes; ++c) names.push_back("class" + std::to_string(c));
    std::cout << u3m::format_table(cm, names);

    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw u3m::io_error("cannot write " + csv_path);
        f << "class,iou\n";
        std::vector<double> iou = cm.iou_per_class();
        for (size_t c = 0; c < iou.size(); ++c) {
            f << names[c] << ",";
            if (std::isnan(iou[c]))
                f << "undefined";
            else
                f << iou[c];
            f << "\n";
        }
        f << "mean," << cm.miou() << "\n";
    }
    return 0;
}

int run_predict(const std::string& ckpt, const std::string& sample_dir, const std::string& out_path) {
    u3m::Model model = u3m::load_checkpoint(ckpt);
    const u3m::ModelConfig& cfg = model.config();
    std::vector<u3m::Tensor> images = u3m::load_sample_images(sample_dir, cfg.modalities);
    size_t orig_h = images[0].extent(1), orig_w = images[0].extent(2);

    size_t H = orig_h, W = orig_w;
    if (H % 32 != 0 || W % 32 != 0) {
        if (!cfg.train.pad_to_32)
            throw u3m::data_error("sample extent " + std::to_string(H) + "x" + std::to_string(W) +
                                  " is not divisible by 32 (enable pad_to_32 in the config)");
        H = (H + 31) / 32 * 32;
        W = (W + 31) / 32 * 32;
        for (u3m::Tensor& img : images) img = u3m::detail::pad_image_to(img, H, W);
    }

    std::vector<u3m::Tensor> batched;
    for (u3m::Tensor& img : images)
        batched.push_back(img.with_shape({1, img.extent(0), img.extent(1), img.extent(2)}));
    u3m::Tensor logits = model.forward(batched, nullptr);
    u3m::SegMap pred = u3m::predict_labels(logits)[0];

    if (H != orig_h || W != orig_w) {  // crop the centered pad back off
        size_t top = (H - orig_h) / 2, left = (W - orig_w) / 2;
        u3m::SegMap cropped(orig_h, orig_w);
        for (size_t i = 0; i < orig_h; ++i)
            for (size_t j = 0; j < orig_w; ++j) cropped.at(i, j) = pred.at(i + top, j + left);
        pred = std::move(cropped);
    }
    u3m::write_netpbm(out_path, u3m::raster_from_segmap(pred));
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int run_synth(const std::string& out_dir, const std::string& split, size_t n, size_t modalities, size_t classes,
              size_t size, uint64_t seed, double degraded_frac) {
    u3m::SynthOptions opt;
    opt.n = n;
    opt.modalities = modalities;
    opt.classes = classes;
    opt.rows = opt.cols = size;
    opt.seed = seed;
    opt.degraded_frac = degraded_frac;
    auto samples = u3m::synth_dataset(opt);
    u3m::write_synth_dataset(out_dir, split, samples);
    std::cout << "wrote " << samples.size() << " samples to " << out_dir << "/" << split << "\n";
    return 0;
}

int run_gradcheck(const std::string& module, size_t coords, size_t model_coords, double eps, uint64_t seed) {
    u3m::GradCheckOptions opt;
    opt.eps = eps;
    opt.coords_per_param = coords;
    opt.seed = seed;

    bool matched = false;
    bool ok = true;
    double suite_max = 0.0;
    for (const u3m::SuiteEntry& e : u3m::gradcheck_suite()) {
        if (!module.empty() && e.name.find(module) == std::string::npos) continue;
        matched = true;
        u3m::GradCheckOptions entry_opt = opt;
        if (e.name == "model" && model_coords > 0) entry_opt.coords_per_param = model_coords;
        u3m::GradCheckReport r = e.run(entry_opt);
        bool pass = r.max_rel_err < 1e-4;
        ok = ok && pass;
        suite_max = std::max(suite_max, r.max_rel_err);
        std::cout << (pass ? "PASS" : "FAIL") << " " << e.name << ": max rel err " << r.max_rel_err << " over "
                  << r.coords_checked << " coordinates";
        if (!pass) std::cout << " (worst: " << r.worst_param << "[" << r.worst_coord << "])";
        std::cout << "\n";
    }
    if (!matched) {
        std::cerr << "no gradcheck module matches '" << module << "'\n";
        return 1;
    }
    std::cout << (ok ? "gradcheck OK" : "gradcheck FAILED") << ": suite max rel err " << suite_max << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"U3M: unbiased multiscale multimodal fusion segmentation (desk scale)"};
    app.require_subcommand(1);
    bool timestamps = false;
    app.add_flag("--timestamps", timestamps, "prepend wall-clock timestamps to log output");

    std::string config_path, data_root, split = "train", out_path, log_path;
    long epochs_override = -1, seed_override = -1;
    double lr_override = -1.0;

    CLI::App* train = app.add_subcommand("train", "train a model on a dataset directory");
    train->add_option("--config", config_path, "config file (key=value sections); defaults when omitted");
    train->add_option("--data", data_root, "dataset root (root/<split>/<sample>/)")->required();
    train->add_option("--split", split, "dataset split subdirectory (default train)");
    train->add_option("--out", out_path, "checkpoint output path")->required();
    train->add_option("--log", log_path, "write the epoch,loss,miou CSV here instead of stdout");
    train->add_option("--epochs", epochs_override, "override configured epoch count");
    train->add_option("--lr", lr_override, "override configured learning rate");
    train->add_option("--seed", seed_override, "override configured seed");

    std::string eval_ckpt, eval_split = "test", eval_csv;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint: per-class IoU table");
    eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--data", data_root, "dataset root")->required();
    eval->add_option("--split", eval_split, "dataset split (default test)");
    eval->add_option("--csv", eval_csv, "also write the table to this CSV file");

    std::string pred_ckpt, pred_sample, pred_out = "label.pgm";
    CLI::App* predict = app.add_subcommand("predict", "write the argmax label map for one sample directory");
    predict->add_option("--ckpt", pred_ckpt, "checkpoint file")->required();
    predict->add_option("--sample", pred_sample, "sample directory containing mod<k>.ppm/.pgm")->required();
    predict->add_option("--out", pred_out, "output PGM path (default label.pgm)");

    std::string synth_out, synth_split = "train";
    size_t synth_n = 8, synth_m = 2, synth_classes = 3, synth_size = 32;
    uint64_t synth_seed = 0;
    double synth_degraded = 0.3;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic multimodal dataset");
    synth->add_option("--out", synth_out, "dataset root to write")->required();
    synth->add_option("--split", synth_split, "split subdirectory (default train)");
    synth->add_option("--n", synth_n, "sample count (default 8)");
    synth->add_option("--modalities", synth_m, "modality count (default 2)");
    synth->add_option("--classes", synth_classes, "class count (default 3)");
    synth->add_option("--size", synth_size, "square extent, divisible by 32 (default 32)");
    synth->add_option("--seed", synth_seed, "generator seed (default 0)");
    synth->add_option("--degraded-frac", synth_degraded, "fraction of samples whose modality 0 is noise");

    std::string gc_module;
    size_t gc_coords = 100, gc_model_coords = 20;
    double gc_eps = 1e-5;
    uint64_t gc_seed = 20240601;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite; nonzero exit on failure");
    gradcheck->add_option("--module", gc_module, "only run entries whose name contains this substring");
    gradcheck->add_option("--coords", gc_coords, "sampled coordinates per parameter (default 100)");
    gradcheck->add_option("--model-coords", gc_model_coords,
                          "coordinate budget for the full-model entry (default 20, keeps the suite under a minute)");
    gradcheck->add_option("--eps", gc_eps, "central-difference step (default 1e-5)");
    gradcheck->add_option("--seed", gc_seed, "sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train))
            return run_train(config_path, data_root, split, out_path, log_path, epochs_override, lr_override,
                             seed_override, timestamps);
        if (app.got_subcommand(eval)) return run_eval(eval_ckpt, data_root, eval_split, eval_csv, timestamps);
        if (app.got_subcommand(predict)) return run_predict(pred_ckpt, pred_sample, pred_out);
        if (app.got_subcommand(synth))
            return run_synth(synth_out, synth_split, synth_n, synth_m, synth_classes, synth_size, synth_seed,
                             synth_degraded);
        if (app.got_subcommand(gradcheck))
            return run_gradcheck(gc_module, gc_coords, gc_model_coords, gc_eps, gc_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
