#include "test_doctest.hpp"

#include <filesystem>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aif/aifb_training.hpp"
#include "aif/aifd.hpp"
#include "aif/errors.hpp"

using namespace aif;

namespace {

std::shared_ptr<TextResources> resources() {
    static const auto r = std::make_shared<TextResources>(TextResources::load(default_data_dir()));
    return r;
}

const Dataset& micro_corpus() {
    static const Dataset ds = [] {
        SyntheticConfig c;
        c.per_category = 8;
        c.resolution = 32;
        std::mt19937_64 rng(21);
        return generate_synthetic_dataset(c, rng, resources()->keywords);
    }();
    return ds;
}

TrainConfig micro_config() {
    TrainConfig c;
    c.batch_size = 4;
    c.log_every = 1;
    c.classifier_steps = 5;
    c.ae_steps = 5;
    c.finetune_steps = 2;
    c.denoise_pretrain_steps = 2;
    c.predictor_steps = 2;
    c.timesteps = 20;
    c.aifb_steps = 3;
    c.warmup_steps = 2;
    c.model_width = 32;
    c.layers = 1;
    c.heads = 2;
    c.text_dim = 16;
    return c;
}

AifdModel micro_aifd(const TrainConfig& c = micro_config()) {
    return AifdModel::create(c, Vocabulary::build(micro_corpus().all_descriptions()), resources());
}

AifbModel micro_aifb(const TrainConfig& c = micro_config()) {
    return AifbModel::create(c, micro_corpus().resolution, Vocabulary::build(micro_corpus().all_descriptions()),
                             resources());
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("aif_trainer_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::vector<torch::Tensor> snapshot(const torch::nn::Module& m) {
    std::vector<torch::Tensor> out;
    for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
    return out;
}

bool bit_identical(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!torch::equal(a[i], b[i])) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("AIF-D stages must run in order") {
    auto model = micro_aifd();
    AifdTrainer trainer(model, micro_corpus());
    CHECK_THROWS_AS(trainer.finetune_decoder(), TrainingError);
    CHECK_THROWS_AS(trainer.train_predictor(), TrainingError);
    trainer.train_autoencoder();
    CHECK_THROWS_AS(trainer.train_predictor(), TrainingError);
    trainer.finetune_decoder();
    CHECK_NOTHROW(trainer.train_predictor());
    CHECK(model.predictor_trained);
}

TEST_CASE("the decoder stays frozen through predictor training") {
    auto model = micro_aifd();
    AifdTrainer trainer(model, micro_corpus());
    trainer.train_classifiers();
    trainer.train_autoencoder();
    trainer.finetune_decoder();
    const auto decoder = snapshot(*model.autoencoder->decoder());
    const auto predictor = snapshot(*model.predictor);
    trainer.train_predictor();
    CHECK(bit_identical(decoder, snapshot(*model.autoencoder->decoder())));
    CHECK_FALSE(bit_identical(predictor, snapshot(*model.predictor)));
}

TEST_CASE("L_dm falls over 50 steps on a fixed micro-batch") {
    auto model = micro_aifd();
    AifdTrainer trainer(model, micro_corpus());
    trainer.train_autoencoder();
    const auto samples = trainer.batch(0, 6);
    std::vector<torch::Tensor> params = model.predictor->parameters();
    torch::optim::Adam opt(params, torch::optim::AdamOptions(1e-3));
    double first = 0, last = 0;
    for (int i = 0; i < 50; ++i) {
        opt.zero_grad();
        const auto l = trainer.predictor_losses(samples, 0, false);
        l.dm.backward();
        opt.step();
        if (i == 0) first = l.dm.item<double>();
        last = l.dm.item<double>();
    }
    CHECK(last < 0.5 * first);
}

TEST_CASE("zero image-loss weights reduce the objective to plain denoising") {
    auto c = micro_config();
    c.weights.aifd_lambda_ed = 0;
    c.weights.aifd_lambda_as = 0;
    c.weights.lambda_tm = 0;
    auto model = micro_aifd(c);
    AifdTrainer trainer(model, micro_corpus());
    trainer.train_autoencoder();
    const auto samples = trainer.batch(3, 6);
    const auto with = trainer.predictor_losses(samples, 3, true);
    const auto without = trainer.predictor_losses(samples, 3, false);
    CHECK(torch::equal(with.total, with.dm));
    CHECK(torch::equal(with.dm, without.dm));

    auto full = micro_aifd();
    AifdTrainer full_trainer(full, micro_corpus());
    full_trainer.train_autoencoder();
    const auto l = full_trainer.predictor_losses(full_trainer.batch(3, 6), 3, true);
    CHECK(l.ed.item<double>() > 0.0);
    CHECK(l.total.item<double>() > l.dm.item<double>());
}

TEST_CASE("AIF-D models round-trip through a directory") {
    auto c = micro_config();
    auto model = micro_aifd(c);
    AifdTrainer trainer(model, micro_corpus());
    trainer.run_all();
    const auto dir = scratch_dir("aifd");
    model.save(dir);
    auto back = AifdModel::load(dir);
    CHECK(back.config.entries() == model.config.entries());
    CHECK(back.decoder_finetuned);
    CHECK(back.predictor_trained);
    const auto& s = *micro_corpus().subset(Split::test).front();
    SampleOptions opt;
    opt.seed = 9;
    const auto prompt = model.prompt(s.descriptions.front());
    const auto a = model.apply(s.content, {prompt}, opt);
    const auto b = back.apply(s.content, {back.prompt(s.descriptions.front())}, opt);
    CHECK(torch::equal(a, b));
    CHECK(a.sizes() == s.content.sizes());
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(AifdModel::load(dir), FormatError);
}

TEST_CASE("an AIF-B step on a fixed micro-batch lowers the generator objective") {
    auto model = micro_aifb();
    AifbTrainer trainer(model, micro_corpus());
    const auto batch = trainer.make_batch(0);
    const double before = trainer.generator_losses(batch).total.item<double>();
    // Past the warm-up so the step runs at the full rate.
    trainer.train_step(batch, 10);
    const double after = trainer.generator_losses(batch).total.item<double>();
    CHECK(after < before);
}

TEST_CASE("AIF-B logs every named component") {
    auto model = micro_aifb();
    std::ostringstream log;
    AifbTrainer trainer(model, micro_corpus(), &log);
    trainer.train(2);
    std::istringstream in(log.str());
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j["stage"] != "aifb") continue;
        ++rows;
        for (const char* k : {"total", "ed", "sm", "as", "content", "style", "gan_g", "identity", "ae", "gan_d"}) {
            CHECK_MESSAGE(j.contains(k), k);
        }
    }
    CHECK(rows == 2);
    CHECK(model.steps_trained == 2);
}

TEST_CASE("AIF-B resumes bitwise from a checkpoint") {
    const auto dir = scratch_dir("aifb_resume");
    auto straight = micro_aifb();
    std::vector<torch::Tensor> expected;
    {
        AifbTrainer trainer(straight, micro_corpus());
        trainer.train(2);
        straight.save(dir);
        trainer.save_state(dir / "trainer_state.ckpt");
        trainer.train(3);
        expected = snapshot(*straight.generator);
    }
    auto resumed = AifbModel::load(dir);
    CHECK(resumed.steps_trained == 2);
    AifbTrainer trainer(resumed, micro_corpus());
    trainer.load_state(dir / "trainer_state.ckpt");
    trainer.train(3);
    CHECK(bit_identical(expected, snapshot(*resumed.generator)));

    const auto& s = *micro_corpus().subset(Split::test).front();
    CHECK(torch::equal(straight.apply(s.content, {s.descriptions.front()}),
                       resumed.apply(s.content, {s.descriptions.front()})));
    CHECK_THROWS_AS(straight.apply(s.content, {""}), InvalidArgument);

    auto other = micro_aifb();
    AifbTrainer fresh(other, micro_corpus());
    CHECK_THROWS_AS(fresh.load_state(dir / "trainer_state.ckpt"), FormatError);
    std::filesystem::remove_all(dir);
}
