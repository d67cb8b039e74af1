#include <torch/torch.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "aif/aifb_training.hpp"
#include "aif/aifd.hpp"
#include "aif/errors.hpp"
#include "aif/evaluation.hpp"
#include "aif/grid.hpp"
#include "aif/image_io.hpp"
#include "aif/llm_client.hpp"
#include "aif/model_io.hpp"

namespace fs = std::filesystem;

namespace {

using namespace aif;

struct DatasetArgs {
    std::string out;
    std::int64_t per_category = 32;
    std::int64_t resolution = 64;
    std::uint64_t seed = 1234;
};

struct TrainArgs {
    std::string kind;
    std::string data;
    std::string config;
    std::string out;
    std::string log;
    std::vector<std::string> overrides;
};

struct ApplyArgs {
    std::string model;
    std::string content;
    std::string text;
    std::string out;
    double guidance = -1;
    std::uint64_t seed = 0;
    bool use_llm = false;
};

struct EvalArgs {
    std::string model;
    std::string data;
    std::string report;
    std::string split = "test";
    std::uint64_t seed = 0;
    bool use_llm = false;
};

struct GridArgs {
    std::string spec;
    std::string out;
};

TrainConfig load_config(const TrainArgs& a) {
    auto config = a.config.empty() ? TrainConfig{} : TrainConfig::from_file(a.config);
    for (const auto& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    config.validate();
    return config;
}

std::unique_ptr<LanguageModelClient> language_model(bool wanted) {
    if (!wanted) return nullptr;
    auto client = HttpLanguageModelClient::from_environment();
    if (!client) throw ConfigError("--llm needs AIF_LLM_ENDPOINT to be set");
    return client;
}

int run_dataset(const DatasetArgs& a) {
    SyntheticConfig config;
    config.per_category = a.per_category;
    config.resolution = a.resolution;
    std::mt19937_64 rng(a.seed);
    const auto text = TextResources::load(default_data_dir());
    const auto dataset = generate_synthetic_dataset(config, rng, text.keywords);
    save_dataset(dataset, a.out);
    std::cout << "wrote " << dataset.samples.size() << " samples to " << a.out << "\n";
    return 0;
}

int run_train(const TrainArgs& a) {
    torch::manual_seed(0);
    const auto config = load_config(a);
    const auto dataset = load_dataset(a.data);
    auto text = std::make_shared<TextResources>(TextResources::load(default_data_dir()));
    auto vocab = Vocabulary::build(dataset.all_descriptions());
    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!a.log.empty()) {
        log_file.open(a.log);
        if (!log_file) throw FormatError("cannot write " + a.log);
        log = &log_file;
    }
    if (a.kind == "aifd") {
        auto model = AifdModel::create(config, std::move(vocab), text);
        AifdTrainer trainer(model, dataset, log);
        trainer.run_all();
        model.save(a.out);
    } else {
        auto model = AifbModel::create(config, dataset.resolution, std::move(vocab), text);
        AifbTrainer trainer(model, dataset, log);
        trainer.train_classifiers();
        trainer.train(config.aifb_steps);
        model.save(a.out);
        trainer.save_state(fs::path(a.out) / "trainer_state.ckpt");
    }
    std::cerr << "saved " << a.kind << " model to " << a.out << "\n";
    return 0;
}

int run_apply(const ApplyArgs& a) {
    const auto kind = model_kind(a.model);
    auto client = language_model(a.use_llm);
    torch::Tensor out;
    if (kind == "aifd") {
        auto model = AifdModel::load(a.model);
        const auto content = resize_image(read_image(a.content), model.resolution);
        SampleOptions options;
        options.guidance = a.guidance >= 0 ? a.guidance : model.config.guidance;
        options.start_fraction = model.config.start_fraction;
        options.seed = a.seed;
        out = model.apply(content, {model.prompt(a.text, client.get())}, options);
    } else {
        auto model = AifbModel::load(a.model);
        const auto content = resize_image(read_image(a.content), model.resolution);
        out = model.apply(content, {a.text});
    }
    write_png(a.out, out.dim() == 4 ? out.squeeze(0) : out);
    return 0;
}

int run_eval(const EvalArgs& a) {
    const auto kind = model_kind(a.model);
    auto client = language_model(a.use_llm);
    EvalReport report;
    if (kind == "aifd") {
        auto model = AifdModel::load(a.model);
        const auto dataset = load_dataset(a.data, model.resolution);
        SampleOptions options;
        options.guidance = model.config.guidance;
        options.start_fraction = model.config.start_fraction;
        options.seed = a.seed;
        report = evaluate_aifd(model, dataset.subset(parse_split(a.split)), options, client.get());
    } else {
        auto model = AifbModel::load(a.model);
        const auto dataset = load_dataset(a.data, model.resolution);
        report = evaluate_aifb(model, dataset.subset(parse_split(a.split)));
    }
    std::ofstream out(a.report);
    if (!out) throw FormatError("cannot write " + a.report);
    out << report.to_json() << "\n";
    std::cout << report.to_json() << "\n";
    return 0;
}

int run_grid(const GridArgs& a) {
    emit_grid(load_grid_spec(a.spec), a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    CLI::App app{"Affective image filter: dataset generation, training, filtering and evaluation"};
    app.require_subcommand(1);

    DatasetArgs dataset_args;
    auto* dataset = app.add_subcommand("dataset", "Synthetic anchor corpus");
    auto* gen = dataset->add_subcommand("gen", "Generate a corpus directory");
    dataset->require_subcommand(1);
    gen->add_option("--out", dataset_args.out, "Output directory")->required();
    gen->add_option("--per-category", dataset_args.per_category, "Samples per emotion category")
        ->check(CLI::PositiveNumber);
    gen->add_option("--resolution", dataset_args.resolution, "Image side length")->check(CLI::PositiveNumber);
    gen->add_option("--seed", dataset_args.seed, "Generator seed");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a filter model");
    train->add_option("kind", train_args.kind, "aifb or aifd")->required()->check(CLI::IsMember({"aifb", "aifd"}));
    train->add_option("--data", train_args.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--config", train_args.config, "Run configuration file (key = value)")
        ->check(CLI::ExistingFile);
    train->add_option("--set", train_args.overrides, "Extra key=value settings, applied after --config");
    train->add_option("--out", train_args.out, "Model directory")->required();
    train->add_option("--log", train_args.log, "Per-step JSON lines (default stdout)");

    ApplyArgs apply_args;
    auto* apply = app.add_subcommand("apply", "Filter one content image");
    apply->add_option("--model", apply_args.model, "Model directory")->required()->check(CLI::ExistingDirectory);
    apply->add_option("--content", apply_args.content, "Content image")->required()->check(CLI::ExistingFile);
    apply->add_option("--text", apply_args.text, "Emotional description")->required();
    apply->add_option("--guidance", apply_args.guidance, "Classifier-free guidance scale (AIF-D)");
    apply->add_option("--seed", apply_args.seed, "Sampling seed (AIF-D)");
    apply->add_flag("--llm", apply_args.use_llm, "Enhance the description with the configured language model");
    apply->add_option("--out", apply_args.out, "Output PNG")->required();

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset split");
    eval->add_option("--model", eval_args.model, "Model directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--data", eval_args.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--report", eval_args.report, "Report JSON path")->required();
    eval->add_option("--split", eval_args.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--seed", eval_args.seed, "Sampling seed (AIF-D)");
    eval->add_flag("--llm", eval_args.use_llm, "Enhance descriptions with the configured language model");

    GridArgs grid_args;
    auto* grid = app.add_subcommand("grid", "Compose a result grid");
    grid->add_option("--spec", grid_args.spec, "Grid spec JSON")->required()->check(CLI::ExistingFile);
    grid->add_option("--out", grid_args.out, "Output PNG")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return run_dataset(dataset_args);
        if (*train) return run_train(train_args);
        if (*apply) return run_apply(apply_args);
        if (*eval) return run_eval(eval_args);
        if (*grid) return run_grid(grid_args);
    } catch (const aif::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
