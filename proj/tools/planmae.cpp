// planmae: generate-data | train | reconstruct | evaluate | serve
//
// Exit codes: 0 success, 2 usage error, 1 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "planmae/checkpoint.hpp"
#include "planmae/dataset.hpp"
#include "planmae/error.hpp"
#include "planmae/image_io.hpp"
#include "planmae/metrics.hpp"
#include "planmae/run_config.hpp"
#include "planmae/service.hpp"
#include "planmae/training.hpp"

namespace fs = std::filesystem;
using namespace planmae;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string profile;
};

RunConfig load_run_config(const CommonArgs& args) {
    std::string path = args.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("PLANMAE_CONFIG")) path = env;
    }
    if (!path.empty()) return RunConfig::from_file(path, args.profile);
    return RunConfig::defaults(args.profile.empty() ? "default" : args.profile);
}

void dump_config(const RunConfig& cfg) {
    std::cerr << "effective config: " << cfg.to_json().dump() << "\n";
}

Mode model_mode(const ModelConfig& c) { return c.channels == 3 ? Mode::colored : Mode::line_drawing; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

std::string step_name(std::int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%06lld.pmae", static_cast<long long>(step));
    return buf;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    CommonArgs common;
    std::string out;
    std::optional<int> train, val, test, resolution;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
};

int run_generate(const GenerateArgs& a) {
    RunConfig cfg = load_run_config(a.common);
    if (!a.out.empty()) cfg.dataset.out = a.out;
    if (a.train) cfg.dataset.counts.train = *a.train;
    if (a.val) cfg.dataset.counts.val = *a.val;
    if (a.test) cfg.dataset.counts.test = *a.test;
    if (a.seed) cfg.dataset.seed = *a.seed;
    if (a.mode) cfg.dataset.mode = mode_from_string(*a.mode);
    if (a.resolution) cfg.dataset.resolution = *a.resolution;
    cfg.finalize();
    if (cfg.dataset.out.empty()) throw Error(ErrorCode::BadConfig, "no output directory");
    dump_config(cfg);
    const auto manifest = build_corpus(cfg.dataset.out, cfg.dataset.counts, cfg.dataset.seed,
                                       cfg.dataset.mode, cfg.dataset.resolution);
    std::cout << (manifest.root / "manifest.json").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    CommonArgs common;
    std::optional<std::string> corpus, out, strategy, resume;
    std::optional<std::int64_t> steps, warmup, checkpoint_every;
    std::optional<std::uint64_t> seed;
    std::optional<int> batch_size;
    std::optional<double> lr, weight_decay;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    RunConfig cfg = load_run_config(a.common);
    TrainConfig& t = cfg.training.train;
    if (a.corpus) cfg.training.corpus = *a.corpus;
    if (a.out) cfg.training.out_dir = *a.out;
    if (a.steps) t.steps = *a.steps;
    if (a.warmup) t.warmup_steps = *a.warmup;
    if (a.checkpoint_every) t.checkpoint_every = *a.checkpoint_every;
    if (a.batch_size) t.batch_size = *a.batch_size;
    if (a.lr) t.learning_rate = *a.lr;
    if (a.weight_decay) t.weight_decay = *a.weight_decay;
    if (a.seed) {
        t.seed = *a.seed;
        cfg.model.seed = *a.seed;
    }
    if (a.strategy) cfg.masking.train = StrategySpec::parse(*a.strategy);

    std::optional<TrainState> resume;
    if (a.resume) {
        Checkpoint ckpt = load_checkpoint(*a.resume);
        if (!ckpt.opt) throw Error(ErrorCode::CorruptCheckpoint, "checkpoint has no optimizer state");
        cfg.model = ckpt.config;
        resume = TrainState{ckpt.config, std::move(ckpt.params), std::move(*ckpt.opt)};
    }
    cfg.finalize();
    if (cfg.training.corpus.empty()) throw Error(ErrorCode::BadConfig, "no corpus directory given");
    dump_config(cfg);

    const auto corpus =
        load_split(cfg.training.corpus, "train", cfg.model.image_size, model_mode(cfg.model));
    if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "no training images in " + cfg.training.corpus);

    const fs::path out_dir = cfg.training.out_dir;
    fs::create_directories(out_dir);
    write_text(out_dir / "effective_config.json", cfg.to_json().dump(2) + "\n");
    std::ofstream loss_csv(out_dir / "loss.csv", std::ios::trunc);
    loss_csv << "step,loss,realized_ratio\n";

    auto snapshot = [&](const TrainState& state) {
        return Checkpoint{state.model, state.params, state.opt.step, t, state.opt};
    };
    const auto result = fit(cfg.model, t, corpus, std::move(resume),
                            [&](const TrainState& state, const HistoryRow& row) {
                                char line[96];
                                std::snprintf(line, sizeof line, "%lld,%.9g,%.6f\n",
                                              static_cast<long long>(row.step), row.loss, row.realized_ratio);
                                loss_csv << line;
                                if (!a.quiet && (row.step % 50 == 0 || row.step == t.steps)) {
                                    std::cerr << "step " << row.step << " loss " << row.loss << "\n";
                                }
                                if (t.checkpoint_every > 0 && row.step % t.checkpoint_every == 0) {
                                    save_checkpoint(snapshot(state), out_dir / step_name(row.step));
                                }
                            });
    save_checkpoint(snapshot(result.state), out_dir / "final.pmae");
    std::cout << (out_dir / "final.pmae").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct ReconstructArgs {
    CommonArgs common;
    std::string checkpoint, input, out;
    std::optional<std::string> strategy, plan, side, anchor;
    std::optional<double> ratio;
    std::optional<std::uint64_t> seed;
    bool resize = false;
};

int run_reconstruct(const ReconstructArgs& a) {
    RunConfig cfg = load_run_config(a.common);
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const ModelConfig& model = ckpt.config;
    const PatchGrid grid = model.grid();
    const Raster input = read_png(a.input, model.image_size, a.resize, model_mode(model));

    MaskPlan plan;
    if (a.plan) {
        std::ifstream in(*a.plan);
        if (!in) throw Error(ErrorCode::IoError, "cannot read plan " + *a.plan);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::BadMask, e.what());
        }
        // a bare {"masked": [...]} list is read against the model grid
        if (j.is_object() && !j.contains("grid")) {
            j["grid"] = {{"patch_size", grid.patch_size}, {"rows", grid.rows}, {"cols", grid.cols}};
        }
        plan = plan_from_json(j);
        if (!(plan.grid == grid)) throw Error(ErrorCode::GeometryMismatch, "plan grid does not match model");
    } else {
        StrategySpec spec = cfg.masking.train;
        if (a.strategy) spec.strategy = strategy_from_string(*a.strategy);
        if (a.ratio) spec.ratio = *a.ratio;
        if (a.side) spec.side = side_from_string(*a.side);
        if (a.anchor) spec.anchor = anchor_from_string(*a.anchor);
        plan = spec.plan(grid, a.seed.value_or(cfg.masking.seed));
    }

    const Raster recon = reconstruct(ckpt.params, model, input, plan);

    // Masked patches shown as mid-gray blocks.
    PatchSequence shown = patchify(input, grid.patch_size);
    for (int i : plan.masked) {
        auto& p = shown.patches[static_cast<std::size_t>(i)];
        std::fill(p.begin(), p.end(), 0.5f);
    }
    const fs::path out_dir = a.out;
    fs::create_directories(out_dir);
    write_png(unpatchify(shown), out_dir / "masked.png");
    write_png(recon, out_dir / "reconstruction.png");
    write_text(out_dir / "plan.json", to_json(plan).dump(2) + "\n");
    std::cout << (out_dir / "reconstruction.png").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    CommonArgs common;
    std::string checkpoint;
    std::optional<std::string> corpus, out, strategies;
    std::string split = "test";
    std::optional<std::uint64_t> seed;
    int limit = 0;
};

int run_evaluate(const EvaluateArgs& a) {
    RunConfig cfg = load_run_config(a.common);
    if (a.strategies) {
        cfg.masking.eval.clear();
        std::stringstream ss(*a.strategies);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) cfg.masking.eval.push_back(StrategySpec::parse(item));
        }
    }
    if (a.seed) cfg.masking.seed = *a.seed;
    const std::string corpus = a.corpus.value_or(cfg.training.corpus);
    if (corpus.empty()) throw Error(ErrorCode::BadConfig, "no corpus directory given");
    cfg.finalize();
    dump_config(cfg);

    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    auto images = load_split(corpus, a.split, ckpt.config.image_size, model_mode(ckpt.config));
    if (a.limit > 0 && images.size() > static_cast<std::size_t>(a.limit)) {
        images.resize(static_cast<std::size_t>(a.limit));
    }
    const auto report = evaluate(
        [&](const Raster& image, const MaskPlan& plan) {
            return reconstruct(ckpt.params, ckpt.config, image, plan);
        },
        ckpt.config.grid(), images, cfg.masking.eval, cfg.masking.seed);

    std::cout << report.to_table();
    if (a.out) {
        fs::create_directories(*a.out);
        write_text(fs::path(*a.out) / "eval.csv", report.to_csv());
        write_text(fs::path(*a.out) / "eval.txt", report.to_table());
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
    CommonArgs common;
    std::optional<std::string> checkpoint, host;
    std::optional<int> port;
};

int run_serve(const ServeArgs& a) {
    RunConfig cfg = load_run_config(a.common);
    if (a.host) cfg.service.host = *a.host;
    if (a.port) cfg.service.port = *a.port;
    if (!a.checkpoint) throw Error(ErrorCode::BadConfig, "serve needs --checkpoint");
    dump_config(cfg);

    InferenceService service(cfg.service);
    const int port = service.bind();
    if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + cfg.service.host);
    std::thread loader([&] {
        try {
            service.load(load_checkpoint(*a.checkpoint));
            std::cerr << "model loaded\n";
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            service.stop();
        }
    });
    std::cout << "listening on " << cfg.service.host << ":" << port << std::endl;
    const bool ok = service.serve();
    loader.join();
    return ok && service.model_loaded() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Masked-autoencoder floorplan completion"};
    app.require_subcommand(1);

    auto add_common = [](CLI::App* cmd, CommonArgs& c) {
        cmd->add_option("--config", c.config_path, "JSON run config (falls back to $PLANMAE_CONFIG)");
        cmd->add_option("--profile", c.profile, "default | desk");
    };

    GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate-data", "Write a procedural floorplan corpus");
    add_common(gen_cmd, gen.common);
    gen_cmd->add_option("--out", gen.out, "Output root directory")->required();
    gen_cmd->add_option("--train", gen.train);
    gen_cmd->add_option("--val", gen.val);
    gen_cmd->add_option("--test", gen.test);
    gen_cmd->add_option("--seed", gen.seed);
    gen_cmd->add_option("--mode", gen.mode, "line | colored");
    gen_cmd->add_option("--resolution", gen.resolution);

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train the autoencoder on a corpus");
    add_common(train_cmd, tr.common);
    train_cmd->add_option("--corpus", tr.corpus, "Corpus root (uses its train/ split)");
    train_cmd->add_option("--out", tr.out, "Run directory for checkpoints and loss.csv");
    train_cmd->add_option("--steps", tr.steps);
    train_cmd->add_option("--warmup", tr.warmup);
    train_cmd->add_option("--checkpoint-every", tr.checkpoint_every);
    train_cmd->add_option("--batch-size", tr.batch_size);
    train_cmd->add_option("--lr", tr.lr);
    train_cmd->add_option("--weight-decay", tr.weight_decay);
    train_cmd->add_option("--seed", tr.seed, "Training and init seed");
    train_cmd->add_option("--strategy", tr.strategy, "name:ratio[:side|anchor]");
    train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint");
    train_cmd->add_flag("--quiet", tr.quiet);

    ReconstructArgs rc;
    auto* rec_cmd = app.add_subcommand("reconstruct", "Mask and complete one image");
    add_common(rec_cmd, rc.common);
    rec_cmd->add_option("--checkpoint", rc.checkpoint)->required();
    rec_cmd->add_option("--input", rc.input)->required();
    rec_cmd->add_option("--out", rc.out, "Output directory")->required();
    rec_cmd->add_option("--strategy", rc.strategy);
    rec_cmd->add_option("--ratio", rc.ratio);
    rec_cmd->add_option("--side", rc.side);
    rec_cmd->add_option("--anchor", rc.anchor);
    rec_cmd->add_option("--seed", rc.seed);
    rec_cmd->add_option("--plan", rc.plan, "Explicit MaskPlan JSON");
    rec_cmd->add_flag("--resize", rc.resize, "Resample input to the model resolution");

    EvaluateArgs ev;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score reconstructions per masking strategy");
    add_common(eval_cmd, ev.common);
    eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
    eval_cmd->add_option("--corpus", ev.corpus);
    eval_cmd->add_option("--split", ev.split);
    eval_cmd->add_option("--strategies", ev.strategies, "Comma-separated name:ratio[:side|anchor]");
    eval_cmd->add_option("--out", ev.out, "Directory for eval.csv / eval.txt");
    eval_cmd->add_option("--seed", ev.seed);
    eval_cmd->add_option("--limit", ev.limit, "Evaluate only the first N images");

    ServeArgs sv;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP inference service");
    add_common(serve_cmd, sv.common);
    serve_cmd->add_option("--checkpoint", sv.checkpoint);
    serve_cmd->add_option("--host", sv.host);
    serve_cmd->add_option("--port", sv.port);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen_cmd) return run_generate(gen);
        if (*train_cmd) return run_train(tr);
        if (*rec_cmd) return run_reconstruct(rc);
        if (*eval_cmd) return run_evaluate(ev);
        if (*serve_cmd) return run_serve(sv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
