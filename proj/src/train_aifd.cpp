#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <ostream>

#include "aif/aifd.hpp"
#include "aif/checkpoint.hpp"
#include "aif/errors.hpp"
#include "aif/model_io.hpp"

namespace aif {

namespace {

const AnchorSample* pick(const std::vector<const AnchorSample*>& pool, std::mt19937_64& rng) {
    if (pool.empty()) throw InvalidArgument("no training anchors for a required category");
    return pool[static_cast<std::size_t>(rng() % pool.size())];
}

void clip_and_step(torch::optim::Optimizer& opt, const std::vector<torch::Tensor>& params) {
    torch::nn::utils::clip_grad_norm_(params, 1.0);
    opt.step();
}

}  // namespace

AifdModel AifdModel::create(const TrainConfig& config, Vocabulary vocab, std::shared_ptr<TextResources> text) {
    config.validate();
    AifdModel m;
    m.config = config;
    m.vocab = std::move(vocab);
    m.text = std::move(text);
    torch::manual_seed(config.seed);
    m.backbone = FeatureBackbone();
    m.ensemble = std::make_shared<EmotionEnsemble>(m.backbone);
    m.extractor = SentimentExtractor(m.backbone);
    m.autoencoder = Autoencoder();
    PredictorConfig pc;
    pc.vocab_size = m.vocab.size();
    pc.text_dim = config.text_dim;
    pc.max_text = config.max_text;
    pc.content_channels = m.autoencoder->stage_channels();
    pc.content_injection = config.content_injection;
    m.predictor = NoisePredictor(pc);
    m.schedule = DiffusionSchedule::linear(config.timesteps, config.beta_start, config.beta_end, config.stochastic_sampling);
    return m;
}

TextBatch AifdModel::encode_text(const std::vector<std::string>& prompts) const {
    return make_text_batch(prompts, vocab, text->vad, config.max_text);
}

std::string AifdModel::prompt(const std::string& description, LanguageModelClient* client) const {
    return enhance_description(description, client, text->keywords).combined;
}

torch::Tensor AifdModel::apply(const torch::Tensor& content, const std::vector<std::string>& prompts,
                               const SampleOptions& options) {
    autoencoder->eval();
    predictor->eval();
    return sample(autoencoder, predictor, content, encode_text(prompts), schedule, options);
}

void AifdModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto manifest = make_manifest("aifd", config);
    manifest["stages"] = {{"ensemble", ensemble_trained},
                          {"autoencoder", autoencoder_trained},
                          {"decoder_finetune", decoder_finetuned},
                          {"predictor", predictor_trained}};
    manifest["resolution"] = resolution;
    manifest["latent_scale"] = autoencoder->latent_scale();
    write_manifest(dir, manifest);
    vocab.save(dir / "vocab.txt");
    copy_text_resources(text->dir, dir);

    TensorArchive ens;
    ensemble->archive(ens, "ensemble.");
    archive_module(ens, *extractor, "sentiment.");
    ens.save(dir / "ensemble.ckpt");
    save_module(*autoencoder, dir / "autoencoder.ckpt");
    if (decoder_finetuned) save_module(*autoencoder->decoder(), dir / "decoder.ckpt");
    save_module(*predictor, dir / "predictor.ckpt");
}

AifdModel AifdModel::load(const std::filesystem::path& dir) {
    const auto manifest = read_manifest(dir);
    if (manifest.at("kind") != "aifd") throw FormatError(dir.string() + " does not hold an AIF-D model");
    auto text = std::make_shared<TextResources>(TextResources::load(dir));
    auto m = create(config_from_manifest(manifest), Vocabulary::load(dir / "vocab.txt"), text);
    m.resolution = manifest.at("resolution").get<std::int64_t>();
    const auto& stages = manifest.at("stages");
    m.ensemble_trained = stages.at("ensemble").get<bool>();
    m.autoencoder_trained = stages.at("autoencoder").get<bool>();
    m.decoder_finetuned = stages.at("decoder_finetune").get<bool>();
    m.predictor_trained = stages.at("predictor").get<bool>();

    const auto ens = TensorArchive::load(dir / "ensemble.ckpt");
    m.ensemble->restore(ens, "ensemble.");
    restore_module(ens, *m.extractor, "sentiment.");
    load_module(*m.autoencoder, dir / "autoencoder.ckpt");
    if (m.decoder_finetuned) {
        if (!std::filesystem::exists(dir / "decoder.ckpt")) throw FormatError("fine-tuned decoder checkpoint is missing");
        load_module(*m.autoencoder->decoder(), dir / "decoder.ckpt");
        for (auto& p : m.autoencoder->decoder()->parameters()) p.set_requires_grad(false);
    }
    load_module(*m.predictor, dir / "predictor.ckpt");
    m.ensemble->freeze();
    return m;
}

double finetune_decoder_step(Autoencoder& autoencoder, SentimentExtractor& extractor, const FinetuneBatch& batch,
                             const LossWeights& weights, double lambda, torch::optim::Optimizer& optimizer) {
    if (!batch.sed.defined() || batch.sed.size(0) == 0) throw InvalidArgument("empty fine-tuning batch");
    const auto b = batch.sed.size(0);
    torch::Tensor latents;
    {
        torch::NoGradGuard no_grad;
        latents = autoencoder->encode(torch::cat({batch.sed, batch.pos, batch.rel, batch.neg}));
    }
    optimizer.zero_grad();
    const auto decoded = autoencoder->decode(latents);
    const auto v = extractor->forward(decoded);
    const auto sm = sentiment_metric_loss(v.slice(0, 0, b), v.slice(0, b, 2 * b), v.slice(0, 2 * b, 3 * b),
                                          v.slice(0, 3 * b, 4 * b), batch.tuple, weights.alpha, weights.beta);
    auto loss = sm;
    if (lambda != 0.0) {
        auto& backbone = extractor->backbone();
        const auto out = extract_feature_pyramid(decoded.slice(0, 0, b), backbone);
        const auto ref = extract_feature_pyramid(batch.sed, backbone);
        loss = loss + lambda * style_loss(out, ref);
    }
    loss.backward();
    optimizer.step();
    return loss.item<double>();
}

AifdTrainer::AifdTrainer(AifdModel& model, const Dataset& dataset, std::ostream* log)
    : model_(model), dataset_(dataset), train_(dataset.subset(Split::train)), by_label_(kNumEmotions), log_(log) {
    if (train_.empty()) throw InvalidArgument("training split is empty");
    for (const auto* s : train_) by_label_[static_cast<std::size_t>(wheel_position(s->label))].push_back(s);
    model_.resolution = dataset.resolution;
}

std::vector<const AnchorSample*> AifdTrainer::batch(std::int64_t step, std::uint64_t stream) const {
    std::mt19937_64 rng(derive_seed(model_.config.seed, stream, static_cast<std::uint64_t>(step)));
    std::vector<const AnchorSample*> out;
    const auto n = std::min<std::int64_t>(model_.config.batch_size, static_cast<std::int64_t>(train_.size()));
    for (std::int64_t i = 0; i < n; ++i) out.push_back(pick(train_, rng));
    return out;
}

void AifdTrainer::train_classifiers() {
    torch::manual_seed(derive_seed(model_.config.seed, 1, 0));
    train_ensemble(*model_.ensemble, dataset_, model_.config, nullptr);
    model_.ensemble->freeze();
    model_.ensemble_trained = true;
    const auto acc = evaluate_ensemble(*model_.ensemble, dataset_.subset(Split::val));
    log_.write("ensemble", model_.config.classifier_steps,
               {{"color_acc", acc[0]}, {"texture_acc", acc[1]}, {"style_acc", acc[2]}, {"patch_acc", acc[3]},
                {"vote_acc", acc[4]}});
}

void AifdTrainer::train_autoencoder() {
    auto& ae = model_.autoencoder;
    ae->train();
    std::vector<torch::Tensor> params = ae->parameters();
    torch::optim::Adam opt(params, torch::optim::AdamOptions(model_.config.ae_lr));
    history_.clear();
    for (std::int64_t step = 0; step < model_.config.ae_steps; ++step) {
        const auto samples = batch(step, 2);
        // Half anchors, half content renderings.
        const auto half = static_cast<std::int64_t>(samples.size() / 2);
        const auto x = torch::cat({stack_images({samples.begin(), samples.begin() + half}),
                                   stack_images({samples.begin() + half, samples.end()}, true)});
        opt.zero_grad();
        auto loss = torch::mse_loss(ae->forward(x), x);
        loss.backward();
        clip_and_step(opt, params);
        const double v = loss.item<double>();
        check_finite("autoencoder", step, {{"mse", v}});
        history_.push_back(v);
        if (step % model_.config.log_every == 0 || step + 1 == model_.config.ae_steps) log_.write("autoencoder", step, {{"mse", v}});
    }
    ae->calibrate_scale(torch::cat({stack_images(train_), stack_images(train_, true)}));
    model_.autoencoder_trained = true;
}

FinetuneBatch AifdTrainer::finetune_batch(std::int64_t step) const {
    std::mt19937_64 rng(derive_seed(model_.config.seed, 3, static_cast<std::uint64_t>(step)));
    std::vector<const AnchorSample*> sed, pos, rel, neg;
    EmotionTuple first{};
    const auto n = std::min<std::int64_t>(model_.config.batch_size, static_cast<std::int64_t>(train_.size()));
    for (std::int64_t i = 0; i < n; ++i) {
        const auto* s = pick(train_, rng);
        const auto t = sample_emotion_tuple(s->label, rng);
        if (i == 0) first = t;
        sed.push_back(s);
        pos.push_back(pick(by_label_[static_cast<std::size_t>(wheel_position(t.pos))], rng));
        rel.push_back(pick(by_label_[static_cast<std::size_t>(wheel_position(t.rel))], rng));
        neg.push_back(pick(by_label_[static_cast<std::size_t>(wheel_position(t.neg))], rng));
    }
    // Wheel distances of every tuple are (0, 1, 4), so one tuple describes the batch.
    return {stack_images(sed), stack_images(pos), stack_images(rel), stack_images(neg), first};
}

void AifdTrainer::finetune_decoder() {
    if (!model_.autoencoder_trained) throw TrainingError("decoder fine-tuning needs a trained autoencoder");
    auto& decoder = model_.autoencoder->decoder();
    std::vector<torch::Tensor> params = decoder->parameters();
    torch::optim::Adam opt(params, torch::optim::AdamOptions(model_.config.finetune_lr));
    history_.clear();
    for (std::int64_t step = 0; step < model_.config.finetune_steps; ++step) {
        const double v = finetune_decoder_step(model_.autoencoder, model_.extractor, finetune_batch(step),
                                               model_.config.weights, model_.config.weights.finetune_lambda, opt);
        check_finite("finetune", step, {{"loss", v}});
        history_.push_back(v);
        if (step % model_.config.log_every == 0 || step + 1 == model_.config.finetune_steps) {
            log_.write("finetune", step, {{"loss", v}});
        }
    }
    for (auto& p : params) p.set_requires_grad(false);
    model_.decoder_finetuned = true;
}

PredictorLosses AifdTrainer::predictor_losses(const std::vector<const AnchorSample*>& samples, std::int64_t step,
                                              bool image_losses) {
    auto& m = model_;
    const auto& w = m.config.weights;
    const auto b = static_cast<std::int64_t>(samples.size());
    auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(m.config.seed, 4, static_cast<std::uint64_t>(step)));
    std::mt19937_64 rng(derive_seed(m.config.seed, 5, static_cast<std::uint64_t>(step)));

    std::vector<std::string> prompts;
    for (const auto* s : samples) {
        const auto& d = s->descriptions[static_cast<std::size_t>(rng() % s->descriptions.size())];
        prompts.push_back(offline_enhance(d, m.text->keywords).combined);
    }
    const auto text = m.encode_text(prompts);
    const auto content = stack_images(samples, true);
    const auto anchors = stack_images(samples);

    EncoderFeatures features;
    torch::Tensor z_anchor;
    {
        torch::NoGradGuard no_grad;
        features = m.autoencoder->encode_features(content);
        z_anchor = m.autoencoder->encode(anchors);
    }
    const auto z0 = m.config.diffusion_target == "anchor" ? z_anchor : features.latent;
    const auto steps = m.schedule.steps();

    const auto t = torch::randint(1, steps + 1, {b}, gen, torch::kLong);
    const auto eps = torch::randn(z0.sizes(), gen, z0.options());
    const auto keep = torch::rand({b}, gen) >= m.config.cond_dropout;
    const auto cond = m.predictor->condition(text);
    const auto eps_pred =
        m.predictor->forward(forward_diffuse(z0, t, eps, m.schedule), t, m.predictor->drop_condition(cond, keep),
                             features.stages);
    PredictorLosses out;
    out.dm = diffusion_loss(eps, eps_pred);
    const auto zero = torch::zeros({}, z0.options());
    out.tm = out.ed = out.as = zero;

    if (image_losses && (w.aifd_lambda_ed > 0 || w.aifd_lambda_as > 0 || w.lambda_tm > 0)) {
        const auto t_max = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::floor(m.config.image_loss_max_fraction * double(steps))));
        const auto t2 = torch::randint(1, t_max + 1, {b}, gen, torch::kLong);
        const auto eps2 = torch::randn(z0.sizes(), gen, z0.options());
        const auto zt2 = forward_diffuse(z0, t2, eps2, m.schedule);
        const auto estimate = denoised_estimate(zt2, t2, m.predictor->forward(zt2, t2, cond, features.stages), m.schedule);
        std::vector<torch::Tensor> taps_out, taps_anchor;
        const auto image = m.autoencoder->decode(estimate, &taps_out);
        torch::Tensor v_anchor;
        {
            torch::NoGradGuard no_grad;
            m.autoencoder->decode(z_anchor, &taps_anchor);
            v_anchor = m.extractor->forward(anchors);
        }
        if (w.aifd_lambda_ed > 0) {
            out.ed = kl_divergence_loss(stack_distributions(samples), m.ensemble->differentiable_distribution(image));
        }
        if (w.aifd_lambda_as > 0) out.as = anchor_sentiment_loss(m.extractor->forward(image), v_anchor);
        if (w.lambda_tm > 0) out.tm = texture_mapping_loss(taps_anchor, taps_out, w.gamma);
    }
    AifdObjectiveParts<torch::Tensor> parts{out.ed, out.as, aifd_aesthetic_loss(out.dm, out.tm, w)};
    out.total = aifd_total(parts, w);
    return out;
}

void AifdTrainer::train_predictor() {
    if (!model_.decoder_finetuned) {
        throw TrainingError("noise predictor training needs the fine-tuned decoder; run decoder fine-tuning first");
    }
    auto& predictor = model_.predictor;
    predictor->train();
    std::vector<torch::Tensor> params = predictor->parameters();
    const auto pretrain = model_.config.denoise_pretrain_steps;
    const auto total = pretrain + model_.config.predictor_steps;
    torch::optim::Adam pretrain_opt(params, torch::optim::AdamOptions(model_.config.pretrain_lr));
    torch::optim::Adam opt(params, torch::optim::AdamOptions(model_.config.learning_rate));
    history_.clear();
    for (std::int64_t step = 0; step < total; ++step) {
        const bool full = step >= pretrain;
        auto& o = full ? opt : pretrain_opt;
        o.zero_grad();
        const auto l = predictor_losses(batch(step, 6), step, full);
        l.total.backward();
        clip_and_step(o, params);
        const std::vector<std::pair<std::string, double>> values{{"total", l.total.item<double>()},
                                                                 {"dm", l.dm.item<double>()},
                                                                 {"tm", l.tm.item<double>()},
                                                                 {"ed", l.ed.item<double>()},
                                                                 {"as", l.as.item<double>()}};
        check_finite("predictor", step, values);
        history_.push_back(values[1].second);
        if (step % model_.config.log_every == 0 || step + 1 == total) log_.write("predictor", step, values);
    }
    predictor->eval();
    model_.predictor_trained = true;
}

void AifdTrainer::run_all() {
    train_classifiers();
    train_autoencoder();
    finetune_decoder();
    train_predictor();
}

}  // namespace aif
