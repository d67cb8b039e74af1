#include "aif/aifb_training.hpp"

#include "aif/checkpoint.hpp"
#include "aif/errors.hpp"
#include "aif/losses.hpp"
#include "aif/model_io.hpp"

namespace aif {

namespace {

const AnchorSample* pick(const std::vector<const AnchorSample*>& pool, std::mt19937_64& rng) {
    if (pool.empty()) throw InvalidArgument("no training anchors for a required category");
    return pool[static_cast<std::size_t>(rng() % pool.size())];
}

const std::string& pick_description(const AnchorSample& s, std::mt19937_64& rng) {
    return s.descriptions[static_cast<std::size_t>(rng() % s.descriptions.size())];
}

void set_learning_rate(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

}  // namespace

AifbConfig aifb_config(const TrainConfig& config, std::int64_t resolution, std::int64_t vocab_size) {
    AifbConfig c;
    c.patch = config.patch_size;
    c.layers = config.layers;
    c.width = config.model_width;
    c.heads = config.heads;
    c.resolution = resolution;
    c.max_text = config.max_text;
    c.text_dim = config.text_dim;
    c.vocab_size = vocab_size;
    return c;
}

AifbModel AifbModel::create(const TrainConfig& config, std::int64_t resolution, Vocabulary vocab,
                            std::shared_ptr<TextResources> text) {
    config.validate();
    AifbModel m;
    m.config = config;
    m.resolution = resolution;
    m.vocab = std::move(vocab);
    m.text = std::move(text);
    torch::manual_seed(config.seed);
    m.backbone = FeatureBackbone();
    m.ensemble = std::make_shared<EmotionEnsemble>(m.backbone);
    m.extractor = SentimentExtractor(m.backbone);
    m.generator = AifbGenerator(aifb_config(config, resolution, m.vocab.size()));
    m.discriminator = AifbDiscriminator(config.text_dim + 3);
    return m;
}

TextBatch AifbModel::encode_text(const std::vector<std::string>& descriptions) const {
    return make_text_batch(descriptions, vocab, text->vad, config.max_text);
}

torch::Tensor AifbModel::apply(const torch::Tensor& content, const std::vector<std::string>& descriptions) {
    torch::NoGradGuard no_grad;
    const bool single = content.dim() == 3;
    const auto batch = single ? content.unsqueeze(0) : content;
    if (static_cast<std::int64_t>(descriptions.size()) != batch.size(0)) {
        throw InvalidArgument("one description per content image is required");
    }
    generator->eval();
    const auto out = generator->forward(batch, encode_text(descriptions));
    return single ? out.squeeze(0) : out;
}

void AifbModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto manifest = make_manifest("aifb", config);
    manifest["resolution"] = resolution;
    manifest["stages"] = {{"ensemble", ensemble_trained}, {"steps_trained", steps_trained}};
    write_manifest(dir, manifest);
    vocab.save(dir / "vocab.txt");
    copy_text_resources(text->dir, dir);
    TensorArchive ens;
    ensemble->archive(ens, "ensemble.");
    archive_module(ens, *extractor, "sentiment.");
    ens.save(dir / "ensemble.ckpt");
    save_module(*generator, dir / "generator.ckpt");
    save_module(*discriminator, dir / "discriminator.ckpt");
}

AifbModel AifbModel::load(const std::filesystem::path& dir) {
    const auto manifest = read_manifest(dir);
    if (manifest.at("kind") != "aifb") throw FormatError(dir.string() + " does not hold an AIF-B model");
    auto text = std::make_shared<TextResources>(TextResources::load(dir));
    auto m = create(config_from_manifest(manifest), manifest.at("resolution").get<std::int64_t>(),
                    Vocabulary::load(dir / "vocab.txt"), text);
    m.ensemble_trained = manifest.at("stages").at("ensemble").get<bool>();
    m.steps_trained = manifest.at("stages").at("steps_trained").get<std::int64_t>();
    const auto ens = TensorArchive::load(dir / "ensemble.ckpt");
    m.ensemble->restore(ens, "ensemble.");
    restore_module(ens, *m.extractor, "sentiment.");
    m.ensemble->freeze();
    load_module(*m.generator, dir / "generator.ckpt");
    load_module(*m.discriminator, dir / "discriminator.ckpt");
    return m;
}

AifbTrainer::AifbTrainer(AifbModel& model, const Dataset& dataset, std::ostream* log)
    : model_(model), dataset_(dataset), train_(dataset.subset(Split::train)), by_label_(kNumEmotions), log_(log) {
    if (train_.empty()) throw InvalidArgument("training split is empty");
    if (dataset.resolution != model.resolution) throw ShapeError("dataset and model resolutions differ");
    for (const auto* s : train_) by_label_[static_cast<std::size_t>(wheel_position(s->label))].push_back(s);
    g_opt_ = std::make_unique<torch::optim::Adam>(model_.generator->parameters(),
                                                  torch::optim::AdamOptions(model_.config.aifb_lr).betas({0.5, 0.999}));
    d_opt_ = std::make_unique<torch::optim::Adam>(
        model_.discriminator->parameters(), torch::optim::AdamOptions(model_.config.aifb_d_lr).betas({0.5, 0.999}));
}

void AifbTrainer::train_classifiers() {
    torch::manual_seed(derive_seed(model_.config.seed, 1, 0));
    train_ensemble(*model_.ensemble, dataset_, model_.config, nullptr);
    model_.ensemble->freeze();
    model_.ensemble_trained = true;
    const auto acc = evaluate_ensemble(*model_.ensemble, dataset_.subset(Split::val));
    log_.write("ensemble", model_.config.classifier_steps, {{"vote_acc", acc.back()}});
}

AifbBatch AifbTrainer::make_batch(std::int64_t step) const {
    std::mt19937_64 rng(derive_seed(model_.config.seed, 7, static_cast<std::uint64_t>(step)));
    const auto n = std::min<std::int64_t>(model_.config.batch_size, static_cast<std::int64_t>(train_.size()));
    std::vector<const AnchorSample*> seeds;
    std::vector<std::string> texts[4];
    EmotionTuple first{};
    for (std::int64_t i = 0; i < n; ++i) {
        const auto* s = pick(train_, rng);
        const auto t = sample_emotion_tuple(s->label, rng);
        if (i == 0) first = t;
        seeds.push_back(s);
        texts[0].push_back(pick_description(*s, rng));
        const Emotion others[3] = {t.pos, t.rel, t.neg};
        for (int k = 0; k < 3; ++k) {
            const auto* o = pick(by_label_[static_cast<std::size_t>(wheel_position(others[k]))], rng);
            texts[k + 1].push_back(pick_description(*o, rng));
        }
    }
    std::vector<std::string> all;
    for (const auto& t : texts) all.insert(all.end(), t.begin(), t.end());
    return {stack_images(seeds, true), stack_images(seeds), stack_distributions(seeds), model_.encode_text(all), first,
            n};
}

AifbLosses AifbTrainer::generator_losses(const AifbBatch& batch) {
    auto& m = model_;
    const auto& w = m.config.weights;
    const auto b = batch.size;
    const auto sed_text = batch.text.index(torch::arange(b));

    const auto out4 = m.generator->forward(batch.content.repeat({4, 1, 1, 1}), batch.text);
    const auto out = out4.slice(0, 0, b);
    const auto identity = m.generator->forward(batch.anchor, sed_text);

    AifbLosses l;
    const auto v = m.extractor->forward(out4);
    torch::Tensor v_anchor;
    FeaturePyramid content_pyr, anchor_pyr;
    torch::Tensor pooled;
    {
        torch::NoGradGuard no_grad;
        v_anchor = m.extractor->forward(batch.anchor);
        content_pyr = extract_feature_pyramid(batch.content, m.backbone);
        anchor_pyr = extract_feature_pyramid(batch.anchor, m.backbone);
        pooled = masked_mean(m.generator->text_encoder()->augmented(sed_text), sed_text.mask);
    }
    l.ed = kl_divergence_loss(batch.distribution, m.ensemble->differentiable_distribution(out));
    l.sm = sentiment_metric_loss(v.slice(0, 0, b), v.slice(0, b, 2 * b), v.slice(0, 2 * b, 3 * b),
                                 v.slice(0, 3 * b, 4 * b), batch.tuple, w.alpha, w.beta);
    l.as = anchor_sentiment_loss(v.slice(0, 0, b), v_anchor);

    const auto out_pyr = extract_feature_pyramid(out, m.backbone);
    l.content = content_loss(out_pyr, content_pyr);
    l.style = style_loss(out_pyr, anchor_pyr);
    l.identity = identity_loss(identity, batch.anchor, extract_feature_pyramid(identity, m.backbone), anchor_pyr,
                               w.identity_lambda);

    DiscriminatorOutputs d;
    {
        torch::NoGradGuard no_grad;
        const auto real = m.discriminator->forward(batch.anchor, pooled);
        d.real_uncond = real.uncond;
        d.real_cond = real.cond;
    }
    const auto fake = m.discriminator->forward(out, pooled);
    d.fake_uncond = fake.uncond;
    d.fake_cond = fake.cond;
    l.gan = gan_losses(d).generator;

    l.ae = aifb_aesthetic_loss(AifbAestheticParts<torch::Tensor>{l.content, l.style, l.gan, l.identity}, w);
    l.total = aifb_total(AifbObjectiveParts<torch::Tensor>{l.ed, l.sm, l.as, l.ae}, w);
    return l;
}

double AifbTrainer::learning_rate_scale(std::int64_t step) const {
    const auto warmup = model_.config.warmup_steps;
    if (warmup <= 0 || step >= warmup) return 1.0;
    return static_cast<double>(step + 1) / static_cast<double>(warmup);
}

AifbLosses AifbTrainer::train_step(const AifbBatch& batch, std::int64_t step) {
    auto& m = model_;
    const double scale = learning_rate_scale(step);
    set_learning_rate(*g_opt_, m.config.aifb_lr * scale);
    set_learning_rate(*d_opt_, m.config.aifb_d_lr * scale);
    m.generator->train();
    m.discriminator->train();

    const auto b = batch.size;
    const auto sed_text = batch.text.index(torch::arange(b));
    torch::Tensor fake, pooled;
    {
        torch::NoGradGuard no_grad;
        fake = m.generator->forward(batch.content, sed_text);
        pooled = masked_mean(m.generator->text_encoder()->augmented(sed_text), sed_text.mask);
    }
    d_opt_->zero_grad();
    const auto real_scores = m.discriminator->forward(batch.anchor, pooled);
    const auto fake_scores = m.discriminator->forward(fake, pooled);
    const auto d_loss = gan_losses({real_scores.uncond, real_scores.cond, fake_scores.uncond, fake_scores.cond}).discriminator;
    d_loss.backward();
    d_opt_->step();

    g_opt_->zero_grad();
    auto l = generator_losses(batch);
    l.total.backward();
    torch::nn::utils::clip_grad_norm_(m.generator->parameters(), 10.0);
    g_opt_->step();
    l.discriminator = d_loss.detach();

    const std::vector<std::pair<std::string, double>> values{
        {"total", l.total.item<double>()},       {"ed", l.ed.item<double>()},
        {"sm", l.sm.item<double>()},             {"as", l.as.item<double>()},
        {"content", l.content.item<double>()},   {"style", l.style.item<double>()},
        {"gan_g", l.gan.item<double>()},         {"identity", l.identity.item<double>()},
        {"ae", l.ae.item<double>()},             {"gan_d", d_loss.item<double>()},
        {"lr_scale", scale}};
    check_finite("aifb", step, values);
    if (step % m.config.log_every == 0 || step + 1 == m.config.aifb_steps) log_.write("aifb", step, values);
    history_.push_back(values[0].second);
    m.steps_trained = step + 1;
    return l;
}

void AifbTrainer::train(std::int64_t total_steps) {
    for (auto step = model_.steps_trained; step < total_steps; ++step) train_step(make_batch(step), step);
}

void AifbTrainer::save_state(const std::filesystem::path& path) {
    TensorArchive a;
    a.add("steps_trained", torch::tensor(model_.steps_trained, torch::kLong));
    archive_adam(a, *g_opt_, "generator_adam.");
    archive_adam(a, *d_opt_, "discriminator_adam.");
    a.save(path);
}

void AifbTrainer::load_state(const std::filesystem::path& path) {
    const auto a = TensorArchive::load(path);
    const auto steps = a.get("steps_trained").item<std::int64_t>();
    if (steps != model_.steps_trained) throw FormatError("trainer state does not belong to the loaded model");
    restore_adam(a, *g_opt_, "generator_adam.");
    restore_adam(a, *d_opt_, "discriminator_adam.");
}

}  // namespace aif
