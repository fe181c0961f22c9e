#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geopix/checkpoint.hpp"
#include "geopix/config.hpp"
#include "geopix/dataset.hpp"
#include "geopix/errors.hpp"
#include "geopix/image.hpp"
#include "geopix/redundancy.hpp"
#include "geopix/synth.hpp"
#include "geopix/trainer.hpp"

namespace fs = std::filesystem;
using namespace geopix;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RunConfig base_config() {
    RunConfig config;
    if (const char* env = std::getenv("GEOPIX_SEED")) {
        try {
            std::size_t used = 0;
            config.seed = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
        } catch (const std::exception&) {
            throw ConfigError(std::string("GEOPIX_SEED: not an unsigned integer: '") + env + "'");
        }
    }
    return config;
}

void write_sidecar(const fs::path& output, const RunConfig& config) {
    save_run_config(fs::path(output.string() + ".run_config.json"), config);
}

void require_dir(const fs::path& path, const std::string& what) {
    if (!fs::is_directory(path)) throw UsageError(what + " not found: " + path.string());
}

struct TrainArgs {
    std::string config;
    std::optional<int> steps;
    std::optional<std::string> freeze;
    std::optional<std::string> data;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
    std::optional<int> batch_size;
    std::optional<int> checkpoint_every;
};

int cmd_train(const TrainArgs& a) {
    RunConfig config = base_config();
    if (!a.config.empty()) config = load_run_config(a.config, config);
    if (a.steps) config.train.steps = *a.steps;
    if (a.freeze) config.train.freeze_encoder = *a.freeze == "true";
    if (a.data) config.data.root = *a.data;
    if (a.out) config.output_dir = *a.out;
    if (a.seed) config.seed = *a.seed;
    if (a.lr) config.train.lr = *a.lr;
    if (a.batch_size) config.train.batch_size = *a.batch_size;
    if (a.checkpoint_every) config.train.checkpoint_every = *a.checkpoint_every;
    config.validate();

    const fs::path split_dir = fs::path(config.data.root) / config.data.train_split;
    require_dir(split_dir, "dataset split");
    const DatasetManifest manifest =
        load_manifest(config.data.root, parse_split(config.data.train_split), {config.train.question_mode});

    std::cerr << "training on " << manifest.samples().size() << " samples for " << config.train.steps << " steps\n";
    TrainOptions options;
    options.output_dir = config.output_dir;
    const int every = std::max(1, config.train.steps / 20);
    options.on_step = [&](const LossRecord& r) {
        if (r.step % every == 0 || r.step == config.train.steps) {
            std::cerr << "step " << r.step << " lr " << r.lr << " loss " << r.total << " (focal " << r.focal << ", dice "
                      << r.dice << ", text " << r.text_ce << ")\n";
        }
    };
    const TrainResult result = train(build_model(config), manifest, config, options);
    std::cout << result.checkpoints.back().string() << '\n';
    return kOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string split = "val";
    std::optional<std::string> data;
    std::string out = "eval_report.json";
};

int cmd_eval(const EvalArgs& a) {
    LoadedModel loaded = load_model(a.checkpoint);
    RunConfig config = loaded.config;
    if (a.data) config.data.root = *a.data;
    config.data.eval_split = a.split;
    const Split split = parse_split(a.split);
    require_dir(fs::path(config.data.root) / a.split, "dataset split");
    const DatasetManifest manifest = load_manifest(config.data.root, split);
    const EvalReport report = evaluate(*loaded.model, manifest);
    write_report(a.out, report);
    write_sidecar(a.out, config);
    nlohmann::json j = report;
    j.erase("per_sample_iou");
    j.erase("sample_ids");
    std::cout << j.dump(2) << '\n';
    return kOk;
}

struct InferArgs {
    std::string checkpoint;
    std::string image;
    std::optional<std::string> instruction;
    std::optional<std::string> instruction_file;
    std::string out;
    std::string task = "reasoning";
};

int cmd_infer(const InferArgs& a) {
    std::string instruction;
    if (a.instruction) {
        instruction = *a.instruction;
    } else {
        std::ifstream in(*a.instruction_file);
        if (!in) throw UsageError("instruction file not found: " + *a.instruction_file);
        std::ostringstream text;
        text << in.rdbuf();
        instruction = text.str();
        while (!instruction.empty() && (instruction.back() == '\n' || instruction.back() == '\r')) instruction.pop_back();
    }
    const Task task = parse_task(a.task);
    LoadedModel loaded = load_model(a.checkpoint);
    const Image image = read_image(a.image);
    const Segmentation seg = segment(*loaded.model, image, instruction, task);
    write_mask_png(a.out, seg.mask);
    write_sidecar(a.out, loaded.config);
    if (seg.answer) std::cout << *seg.answer << '\n';
    return kOk;
}

struct RedundancyArgs {
    std::string input;
    int patch_size = 16;
    int levels = 256;
    std::string out;
};

int cmd_redundancy(const RedundancyArgs& a) {
    require_dir(a.input, "input directory");
    RedundancyConfig rc;
    rc.patch_size = a.patch_size;
    rc.levels = a.levels;
    const CorpusReport report = corpus_report(fs::path(a.input), rc);
    report.write_csv(a.out);
    RunConfig config = base_config();
    config.data.root = a.input;
    config.output_dir = fs::path(a.out).parent_path().string();
    write_sidecar(a.out, config);
    std::cout << "images " << report.images.size() << " mean_r_e " << report.mean_r_e << " mean_r_s " << report.mean_r_s
              << '\n';
    return kOk;
}

struct SynthArgs {
    std::string out;
    int n = 8;
    std::optional<std::uint64_t> seed;
    int size = 64;
    double empty_fraction = 0.25;
    double referring_fraction = 0.0;
    int questions = 1;
    std::string split = "train";
};

int cmd_synth(const SynthArgs& a) {
    RunConfig config = base_config();
    if (a.seed) config.seed = *a.seed;
    SynthConfig sc;
    sc.n = a.n;
    sc.size = a.size;
    sc.seed = config.seed;
    sc.empty_fraction = a.empty_fraction;
    sc.referring_fraction = a.referring_fraction;
    sc.questions_per_image = a.questions;
    sc.split = parse_split(a.split);
    const DatasetManifest manifest = synth_dataset(a.out, sc);
    config.data.root = a.out;
    config.data.train_split = a.split;
    config.output_dir = a.out;
    save_run_config(fs::path(a.out) / "run_config.json", config);
    std::cout << "wrote " << manifest.records.size() << " images to " << (fs::path(a.out) / a.split).string() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Language-guided segmentation of remote-sensing imagery"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset split");
    train_cmd->add_option("--config", train_args.config, "JSON run configuration")->check(CLI::ExistingFile);
    train_cmd->add_option("--steps", train_args.steps, "Optimizer steps");
    train_cmd->add_option("--freeze-encoder", train_args.freeze, "Freeze the visual encoder")
        ->check(CLI::IsMember({"true", "false"}));
    train_cmd->add_option("--data", train_args.data, "Dataset root");
    train_cmd->add_option("--out", train_args.out, "Output directory");
    train_cmd->add_option("--seed", train_args.seed, "Random seed");
    train_cmd->add_option("--lr", train_args.lr, "Peak learning rate");
    train_cmd->add_option("--batch-size", train_args.batch_size, "Samples per step");
    train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every, "Checkpoint cadence in steps");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint")->required();
    eval_cmd->add_option("--split", eval_args.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    eval_cmd->add_option("--data", eval_args.data, "Dataset root");
    eval_cmd->add_option("--out", eval_args.out, "Report path");

    InferArgs infer_args;
    auto* infer_cmd = app.add_subcommand("infer", "Segment one image from an instruction");
    infer_cmd->add_option("--checkpoint", infer_args.checkpoint, "Model checkpoint")->required();
    infer_cmd->add_option("--image", infer_args.image, "Input image")->required();
    auto* inline_opt = infer_cmd->add_option("--instruction", infer_args.instruction, "Instruction text");
    auto* file_opt = infer_cmd->add_option("--instruction-file", infer_args.instruction_file, "File holding the instruction");
    inline_opt->excludes(file_opt);
    infer_cmd->add_option("--out", infer_args.out, "Output mask PNG")->required();
    infer_cmd->add_option("--task", infer_args.task, "reasoning or referring")
        ->check(CLI::IsMember({"reasoning", "referring"}));
    infer_cmd->callback([&] {
        if (!infer_args.instruction && !infer_args.instruction_file) {
            throw CLI::RequiredError("--instruction or --instruction-file");
        }
    });

    RedundancyArgs red_args;
    auto* red_cmd = app.add_subcommand("redundancy", "Entropic and structural redundancy of an image folder");
    red_cmd->add_option("--input", red_args.input, "Image directory")->required();
    red_cmd->add_option("--patch-size", red_args.patch_size, "SSIM patch side");
    red_cmd->add_option("--levels", red_args.levels, "Histogram levels");
    red_cmd->add_option("--out", red_args.out, "CSV path")->required();

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic dataset split");
    synth_cmd->add_option("--out", synth_args.out, "Dataset root")->required();
    synth_cmd->add_option("--n", synth_args.n, "Number of images");
    synth_cmd->add_option("--seed", synth_args.seed, "Random seed");
    synth_cmd->add_option("--size", synth_args.size, "Image side in pixels");
    synth_cmd->add_option("--empty-fraction", synth_args.empty_fraction, "Share of empty-target images");
    synth_cmd->add_option("--referring-fraction", synth_args.referring_fraction, "Share of referring-task images");
    synth_cmd->add_option("--questions", synth_args.questions, "Instructions per image");
    synth_cmd->add_option("--split", synth_args.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        std::cerr << sub->help();
        return kUsageError;
    }

    try {
        if (*train_cmd) return cmd_train(train_args);
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*infer_cmd) return cmd_infer(infer_args);
        if (*red_cmd) return cmd_redundancy(red_args);
        if (*synth_cmd) return cmd_synth(synth_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsageError;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kUsageError;
}
