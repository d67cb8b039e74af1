// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails. `--only NAME` runs a single criterion.

#include <torch/torch.h>

#include <array>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aif/aifb_training.hpp"
#include "aif/aifd.hpp"
#include "aif/classifiers.hpp"
#include "aif/diffusion.hpp"
#include "aif/emotion.hpp"
#include "aif/evaluation.hpp"
#include "aif/features.hpp"
#include "aif/losses.hpp"
#include "aif/metrics.hpp"
#include "test_support.hpp"

using namespace aif;
using aif::testing::gradient_check;
using aif::testing::seeded;
using clk = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Notes {
public:
    void fail(const std::string& what) {
        if (failures_++ < 3) failed_ += (failed_.empty() ? "" : "; ") + what;
    }
    void note(const std::string& what) { notes_ += (notes_.empty() ? "" : ", ") + what; }
    Outcome done() const {
        std::string s = notes_;
        if (failures_ > 0) s += (s.empty() ? "" : "; ") + std::to_string(failures_) + " failure(s): " + failed_;
        return {failures_ == 0, s};
    }

private:
    int failures_ = 0;
    std::string failed_;
    std::string notes_;
};

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::string fmt(double v, int precision = 3) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

std::array<double, 8> random_simplex(std::mt19937_64& rng, bool sparse) {
    std::exponential_distribution<double> expo(1.0);
    std::bernoulli_distribution drop(0.25);
    std::array<double, 8> p{};
    double s = 0;
    for (auto& v : p) s += (v = (sparse && drop(rng)) ? 0.0 : expo(rng));
    if (s == 0) {
        p[0] = s = 1;
    }
    for (auto& v : p) v /= s;
    return p;
}

Outcome emotion_geometry() {
    const auto t0 = clk::now();
    Notes n;
    // Breadth-first search on the cycle 0-1-...-7-0.
    std::array<std::array<int, 8>, 8> oracle{};
    for (int s = 0; s < 8; ++s) {
        oracle[s].fill(-1);
        oracle[s][s] = 0;
        std::deque<int> q{s};
        while (!q.empty()) {
            const int u = q.front();
            q.pop_front();
            for (int v : {(u + 1) % 8, (u + 7) % 8}) {
                if (oracle[s][v] < 0) {
                    oracle[s][v] = oracle[s][u] + 1;
                    q.push_back(v);
                }
            }
        }
    }
    for (auto a : kAllEmotions) {
        for (auto b : kAllEmotions) {
            const int d = wheel_distance(a, b);
            const auto name = std::string(emotion_name(a)) + "/" + std::string(emotion_name(b));
            if (d != oracle[wheel_position(a)][wheel_position(b)]) n.fail("distance " + name);
            if (d != wheel_distance(b, a)) n.fail("symmetry " + name);
            if ((d == 0) != (a == b)) n.fail("identity " + name);
            if (d < 0) n.fail("negative " + name);
            for (auto c : kAllEmotions) {
                if (wheel_distance(a, c) > d + wheel_distance(b, c)) n.fail("triangle " + name);
            }
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 1.0) n.fail("took " + fmt(secs) + " s");
    n.note("64 pairs, " + fmt(secs * 1e3) + " ms");
    return n.done();
}

Outcome kl_oracle() {
    Notes n;
    std::mt19937_64 rng(2024);
    double worst = 0;
    for (int k = 0; k < 1000; ++k) {
        const auto t = random_simplex(rng, true);
        const auto e = random_simplex(rng, k % 2 == 0);
        double direct = 0;
        for (int i = 0; i < 8; ++i) {
            if (t[i] > 0) direct += t[i] * std::log(t[i] / std::max(e[i], kKlEpsilon));
        }
        worst = std::max(worst, std::abs(kl_divergence(t, e) - direct));
    }
    if (!(worst <= 1e-12)) n.fail("max error " + fmt(worst));
    n.note("1000 pairs, max |error| " + fmt(worst));
    return n.done();
}

Outcome gradient_suite() {
    const auto t0 = clk::now();
    Notes n;
    double worst = 0;
    auto check = [&](const std::string& name, const std::function<torch::Tensor(const torch::Tensor&)>& f,
                     const torch::Tensor& x) {
        const double err = gradient_check(f, x);
        worst = std::max(worst, err);
        if (!(err < 1e-4)) n.fail(name + " relative error " + fmt(err));
    };
    auto g = seeded(77);
    const auto d = torch::kDouble;

    // Emotional distribution loss through the style and patch members on an
    // 8x8 image; the histogram members carry no gradient and get no vote.
    {
        FeatureBackbone backbone;
        EnsembleConfig ec;
        ec.patch = {8, 1};
        EmotionEnsemble ens(backbone, ec);
        ens.to(d);
        ens.set_weights(EnsembleWeights{{0, 0, 1, 1}});
        const auto target = torch::softmax(torch::randn({1, 8}, g, d), 1);
        check("emotional_distribution_loss",
              [&](const torch::Tensor& x) { return emotional_distribution_loss(target, x, ens); },
              torch::rand({1, 3, 8, 8}, g, d) * 0.8 + 0.1);
    }
    {
        const auto t = EmotionTuple{Emotion::awe, Emotion::awe, Emotion::amusement, Emotion::disgust};
        const auto p = torch::randn({2, 8}, g, d), r = torch::randn({2, 8}, g, d), ng = torch::randn({2, 8}, g, d);
        // Large margins keep both hinges active.
        check("sentiment_metric_loss",
              [&](const torch::Tensor& x) { return sentiment_metric_loss(x, p, r, ng, t, 50.0, 50.0); },
              torch::randn({2, 8}, g, d));
    }
    {
        const auto y = torch::randn({4, 8}, g, d);
        check("anchor_sentiment_loss", [&](const torch::Tensor& x) { return anchor_sentiment_loss(x, y); },
              torch::randn({4, 8}, g, d));
    }
    const FeaturePyramid ref{{torch::randn({2, 4, 8, 8}, g, d), torch::randn({2, 4, 4, 4}, g, d)}};
    const auto other = torch::randn({2, 4, 4, 4}, g, d);
    check("content_loss", [&](const torch::Tensor& x) { return content_loss({{x, other}}, ref); },
          torch::randn({2, 4, 8, 8}, g, d));
    check("style_loss", [&](const torch::Tensor& x) { return style_loss({{x, other}}, ref); },
          torch::randn({2, 4, 8, 8}, g, d));
    check("feature_stat_difference", [&](const torch::Tensor& x) { return feature_stat_difference(x, ref.levels[0]); },
          torch::randn({2, 4, 8, 8}, g, d));
    {
        const auto anchor = torch::rand({2, 3, 8, 8}, g, d);
        const FeaturePyramid fa{{torch::randn({2, 4, 4, 4}, g, d)}};
        const auto fixed = torch::randn({2, 4, 4, 4}, g, d);
        check("identity_loss (image)",
              [&](const torch::Tensor& x) { return identity_loss(x, anchor, {{fixed}}, fa); },
              torch::rand({2, 3, 8, 8}, g, d));
        const auto img = torch::rand({2, 3, 8, 8}, g, d);
        check("identity_loss (features)", [&](const torch::Tensor& x) { return identity_loss(img, anchor, {{x}}, fa); },
              torch::randn({2, 4, 4, 4}, g, d));
    }
    {
        const auto truth = torch::randn({2, 4, 8, 8}, g, d);
        check("diffusion_loss", [&](const torch::Tensor& x) { return diffusion_loss(truth, x); },
              torch::randn({2, 4, 8, 8}, g, d));
    }
    {
        const std::vector<torch::Tensor> anchor{torch::randn({2, 4, 4, 4}, g, d), torch::randn({2, 4, 8, 8}, g, d)};
        const auto second = torch::randn({2, 4, 8, 8}, g, d);
        check("texture_mapping_loss",
              [&](const torch::Tensor& x) { return texture_mapping_loss(anchor, {x, second}); },
              torch::randn({2, 4, 4, 4}, g, d));
    }
    const double secs = seconds_since(t0);
    if (secs >= 120.0) n.fail("took " + fmt(secs) + " s");
    n.note("max relative error " + fmt(worst) + ", " + fmt(secs) + " s");
    return n.done();
}

Outcome loss_weights() {
    Notes n;
    const LossWeights w;
    const std::vector<std::pair<const char*, std::pair<double, double>>> expected{
        {"alpha", {w.alpha, 0.02}},
        {"beta", {w.beta, 0.01}},
        {"identity_lambda", {w.identity_lambda, 0.01}},
        {"lambda_c", {w.lambda_c, 5.0}},
        {"lambda_s", {w.lambda_s, 0.3}},
        {"lambda_gan", {w.lambda_gan, 3.0}},
        {"lambda_id", {w.lambda_id, 2.0}},
        {"aifb_lambda_ed", {w.aifb_lambda_ed, 140.0}},
        {"aifb_lambda_sm", {w.aifb_lambda_sm, 30.0}},
        {"aifb_lambda_as", {w.aifb_lambda_as, 600.0}},
        {"aifb_lambda_ae", {w.aifb_lambda_ae, 1.0}},
        {"finetune_lambda", {w.finetune_lambda, 0.01}},
        {"gamma", {w.gamma, 0.3}},
        {"lambda_dm", {w.lambda_dm, 1.0}},
        {"lambda_tm", {w.lambda_tm, 0.001}},
        {"aifd_lambda_ed", {w.aifd_lambda_ed, 10.0}},
        {"aifd_lambda_as", {w.aifd_lambda_as, 10.0}},
        {"aifd_lambda_ae", {w.aifd_lambda_ae, 1.0}},
    };
    for (const auto& [name, v] : expected) {
        if (v.first != v.second) n.fail(std::string(name) + " = " + fmt(v.first, 17));
    }
    if (TrainConfig{}.weights.aifd_lambda_ed != 10.0) n.fail("TrainConfig does not carry the defaults");
    n.note(std::to_string(expected.size()) + " weights");
    return n.done();
}

Outcome diffusion_algebra() {
    Notes n;
    const auto s = DiffusionSchedule::linear(100);
    auto g = seeded(31);
    const auto z0 = torch::randn({2, 4, 8, 8}, g, torch::kDouble);
    const auto eps = torch::randn({2, 4, 8, 8}, g, torch::kDouble);
    double worst = 0;
    for (int t = 1; t <= 100; ++t) {
        const auto zt = forward_diffuse(z0, t, eps, s);
        worst = std::max(worst, (denoised_estimate(zt, t, eps, s) - z0).abs().max().item<double>());
    }
    if (!(worst < 1e-6)) n.fail("round trip error " + fmt(worst));

    PredictorConfig pc;
    pc.vocab_size = 12;
    pc.text_dim = 8;
    pc.max_text = 6;
    pc.channels = {16, 32};
    pc.time_dim = 32;
    torch::manual_seed(4);
    NoisePredictor p(pc);
    TextBatch text;
    text.ids = torch::randint(2, 12, {2, 6}, g, torch::kLong);
    text.vad = torch::rand({2, 6, 3}, g);
    text.mask = torch::ones({2, 6}, torch::kBool);
    const std::vector<torch::Tensor> content{torch::randn({2, 32, 8, 8}, g), torch::randn({2, 64, 4, 4}, g)};
    const auto zt = torch::randn({2, 4, 4, 4}, g);
    torch::NoGradGuard no_grad;
    const auto tt = torch::full({2}, 30, torch::kLong);
    const auto cond = p->forward(zt, tt, p->condition(text), content);
    const auto uncond = p->forward(zt, tt, p->null_condition(2), content);
    if (!torch::equal(guided_noise(p, zt, 30, text, content, 1.0), cond)) n.fail("s = 1 differs from conditional");
    if (!torch::equal(guided_noise(p, zt, 30, text, content, 0.0), uncond)) n.fail("s = 0 differs from unconditional");
    if (!torch::equal(guidance_combine(cond, uncond, 1.0), cond)) n.fail("combine at s = 1");
    if (!torch::equal(guidance_combine(cond, uncond, 0.0), uncond)) n.fail("combine at s = 0");

    const auto with_taps = p->forward(zt, tt, p->condition(text), content);
    p->set_content_injection(false);
    const auto tap_free = p->forward(zt, tt, p->condition(text), content);
    if (!torch::equal(with_taps, tap_free)) n.fail("zeroed injection changes the output");
    n.note("max round-trip error " + fmt(worst));
    return n.done();
}

Outcome ensemble_simplex() {
    Notes n;
    std::mt19937_64 rng(99);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_int_distribution<int> count(1, 6);
    const auto image = torch::zeros({3, 4, 4});
    double worst = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        const int k = count(rng);
        std::vector<EmotionEstimator> classifiers;
        EnsembleWeights weights;
        for (int j = 0; j < k; ++j) {
            const auto d = EmotionDistribution::from_probs(random_simplex(rng, rep % 3 == 0));
            classifiers.push_back([d](const torch::Tensor&) { return d; });
            // Some members get zero weight, at least one stays positive.
            weights.w.push_back(j > 0 && rng() % 4 == 0 ? 0.0 : expo(rng));
        }
        const auto e = ensemble_distribution(image, classifiers, weights);
        double sum = 0;
        for (double v : e.probs()) {
            if (v < 0) n.fail("negative entry");
            sum += v;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    if (!(worst < 1e-12)) n.fail("sum error " + fmt(worst));
    const std::vector<EmotionDistribution> two{EmotionDistribution::delta(Emotion::amusement),
                                               EmotionDistribution::delta(Emotion::awe)};
    const auto mixed = ensemble_distribution(two, EnsembleWeights{{1, 3}});
    if (mixed[0] != 0.25 || mixed[1] != 0.75) n.fail("hand example gave " + fmt(mixed[0]) + ", " + fmt(mixed[1]));
    for (int i = 2; i < 8; ++i) {
        if (mixed[i] != 0.0) n.fail("hand example leaks mass");
    }
    n.note("1000 combinations, max |sum - 1| " + fmt(worst));
    return n.done();
}

Outcome glcm_histogram() {
    Notes n;
    double worst = 0;
    const std::int64_t levels = 8;
    const std::vector<std::pair<std::int64_t, std::int64_t>> offsets{{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    for (int k = 0; k < 50; ++k) {
        auto g = seeded(1000 + k);
        const auto img = torch::rand({3, 8, 8}, g, torch::kDouble);
        const auto q = quantize_gray(img, levels);
        const auto qa = q.accessor<std::int64_t, 2>();
        const auto features = glcm_features(img, GlcmConfig{levels, offsets});
        for (std::size_t o = 0; o < offsets.size(); ++o) {
            const auto [dy, dx] = offsets[o];
            // Enumerate every ordered pixel pair and count both orders.
            std::vector<double> m(levels * levels, 0.0);
            double total = 0;
            for (int y = 0; y < 8; ++y) {
                for (int x = 0; x < 8; ++x) {
                    for (int y2 = 0; y2 < 8; ++y2) {
                        for (int x2 = 0; x2 < 8; ++x2) {
                            if (y2 - y != dy || x2 - x != dx) continue;
                            m[qa[y][x] * levels + qa[y2][x2]] += 1;
                            m[qa[y2][x2] * levels + qa[y][x]] += 1;
                            total += 2;
                        }
                    }
                }
            }
            double contrast = 0, energy = 0, homogeneity = 0, mean_i = 0, mean_j = 0;
            for (std::int64_t i = 0; i < levels; ++i) {
                for (std::int64_t j = 0; j < levels; ++j) {
                    const double p = m[i * levels + j] / total;
                    contrast += p * double((i - j) * (i - j));
                    energy += p * p;
                    homogeneity += p / (1.0 + double((i - j) * (i - j)));
                    mean_i += p * double(i);
                    mean_j += p * double(j);
                }
            }
            double var_i = 0, var_j = 0, cov = 0;
            for (std::int64_t i = 0; i < levels; ++i) {
                for (std::int64_t j = 0; j < levels; ++j) {
                    const double p = m[i * levels + j] / total;
                    var_i += p * (i - mean_i) * (i - mean_i);
                    var_j += p * (j - mean_j) * (j - mean_j);
                    cov += p * (i - mean_i) * (j - mean_j);
                }
            }
            // Degenerate matrices count as perfectly correlated.
            const double correlation = std::sqrt(var_i * var_j) < 1e-15 ? 1.0 : cov / std::sqrt(var_i * var_j);
            const std::array<double, 4> want{contrast, energy, homogeneity, correlation};
            for (int f = 0; f < 4; ++f) {
                const double err = std::abs(features[4 * static_cast<std::int64_t>(o) + f].item<double>() - want[f]);
                worst = std::max(worst, err);
            }
        }
        const std::int64_t bins = 4 + k % 13;
        const auto hist = color_histogram(img, bins);
        const auto a = img.accessor<double, 3>();
        for (int c = 0; c < 3; ++c) {
            std::vector<std::int64_t> counts(bins, 0);
            for (int y = 0; y < 8; ++y) {
                for (int x = 0; x < 8; ++x) {
                    ++counts[std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(a[c][y][x] * double(bins))), bins - 1)];
                }
            }
            for (std::int64_t b = 0; b < bins; ++b) {
                if (hist[c * bins + b].item<double>() != double(counts[b]) / 64.0) n.fail("histogram bin mismatch");
            }
        }
    }
    if (!(worst <= 1e-10)) n.fail("glcm max error " + fmt(worst));
    n.note("50 images, glcm max |error| " + fmt(worst));
    return n.done();
}

Outcome metrics() {
    Notes n;
    auto g = seeded(12);
    for (int k = 0; k < 5; ++k) {
        const auto x = torch::rand({3, 16 + k, 16}, g);
        if (ssim(x, x) != 1.0) n.fail("ssim(x, x) = " + fmt(ssim(x, x), 17));
    }
    const double kc = cohen_kappa({0, 0, 1, 1, 0, 1, 0, 0, 1, 1}, {0, 1, 1, 1, 0, 0, 0, 1, 1, 1});
    if (!(std::abs(kc - 0.4) <= 1e-12)) n.fail("cohen toy table " + fmt(kc, 17));
    const double kneg = cohen_kappa({0, 1, 0, 1}, {1, 0, 1, 0});
    if (!(std::abs(kneg + 1.0) <= 1e-12)) n.fail("cohen disagreement " + fmt(kneg, 17));
    const double kf = fleiss_kappa({{2, 0, 0}, {1, 1, 0}, {0, 1, 1}});
    if (!(std::abs(kf + 1.0 / 11.0) <= 1e-12)) n.fail("fleiss toy table " + fmt(kf, 17));
    const double kf1 = fleiss_kappa({{3, 0}, {0, 3}, {3, 0}});
    if (!(std::abs(kf1 - 1.0) <= 1e-12)) n.fail("fleiss unanimous " + fmt(kf1, 17));
    std::mt19937_64 rng(4);
    std::vector<int> r1, r2;
    for (int i = 0; i < 10000; ++i) {
        r1.push_back(static_cast<int>(rng() % 8));
        r2.push_back(static_cast<int>(rng() % 8));
    }
    const double chance = cohen_kappa(r1, r2);
    if (!(std::abs(chance) <= 0.05)) n.fail("chance-level kappa " + fmt(chance));
    n.note("chance-level kappa " + fmt(chance));
    return n.done();
}

std::shared_ptr<TextResources> resources() {
    static const auto r = std::make_shared<TextResources>(TextResources::load(default_data_dir()));
    return r;
}

Dataset corpus(std::uint64_t seed, std::int64_t per_category, std::int64_t resolution) {
    SyntheticConfig c;
    c.per_category = per_category;
    c.resolution = resolution;
    std::mt19937_64 rng(seed);
    return generate_synthetic_dataset(c, rng, resources()->keywords);
}

Outcome aifb_smoke() {
    const auto t0 = clk::now();
    Notes n;
    const auto ds = corpus(1234, 32, 64);
    auto model = AifbModel::create(TrainConfig{}, 64, Vocabulary::build(ds.all_descriptions()), resources());
    AifbTrainer trainer(model, ds);
    trainer.train_classifiers();
    const auto batch = trainer.make_batch(0);
    const double first = trainer.generator_losses(batch).total.item<double>();
    for (int step = 0; step < 200; ++step) trainer.train_step(batch, step);
    const double last = trainer.generator_losses(batch).total.item<double>();
    const double secs = seconds_since(t0);
    if (!(last <= 0.5 * first)) n.fail("objective fell only to " + fmt(last / first) + " of its start");
    if (secs >= 600) n.fail("took " + fmt(secs) + " s");
    n.note("objective " + fmt(first) + " -> " + fmt(last) + " (ratio " + fmt(last / first) + "), " + fmt(secs) + " s");
    return n.done();
}

bool same_parameters(const torch::nn::Module& a, const torch::nn::Module& b) {
    const auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (!torch::equal(pa[i], pb[i])) return false;
    }
    return true;
}

Outcome determinism() {
    Notes n;
    const auto a = corpus(8, 8, 32), b = corpus(8, 8, 32);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        const auto& x = a.samples[i];
        const auto& y = b.samples[i];
        if (x.id != y.id || x.descriptions != y.descriptions || !(x.distribution == y.distribution) ||
            !torch::equal(x.image, y.image) || !torch::equal(x.content, y.content)) {
            n.fail("corpus sample " + x.id);
        }
    }
    TrainConfig c;
    c.batch_size = 4;
    c.classifier_steps = 5;
    c.ae_steps = 5;
    c.finetune_steps = 2;
    c.denoise_pretrain_steps = 3;
    c.predictor_steps = 2;
    c.timesteps = 20;
    c.model_width = 32;
    c.layers = 1;
    c.heads = 2;
    c.text_dim = 16;
    const auto vocab = Vocabulary::build(a.all_descriptions());
    const auto& probe = *a.subset(Split::test).front();

    std::vector<AifdModel> d;
    std::vector<torch::Tensor> d_out;
    for (int run = 0; run < 2; ++run) {
        d.push_back(AifdModel::create(c, vocab, resources()));
        AifdTrainer trainer(d.back(), a);
        trainer.run_all();
        SampleOptions opt;
        opt.seed = 17;
        d_out.push_back(d.back().apply(probe.content, {d.back().prompt(probe.descriptions.front())}, opt));
    }
    if (!same_parameters(*d[0].predictor, *d[1].predictor)) n.fail("AIF-D predictor weights");
    if (!same_parameters(*d[0].autoencoder, *d[1].autoencoder)) n.fail("AIF-D autoencoder weights");
    if (!torch::equal(d_out[0], d_out[1])) n.fail("AIF-D apply");

    std::vector<AifbModel> m;
    std::vector<torch::Tensor> b_out;
    for (int run = 0; run < 2; ++run) {
        m.push_back(AifbModel::create(c, a.resolution, vocab, resources()));
        AifbTrainer trainer(m.back(), a);
        trainer.train_classifiers();
        trainer.train(3);
        b_out.push_back(m.back().apply(probe.content, {probe.descriptions.front()}));
    }
    if (!same_parameters(*m[0].generator, *m[1].generator)) n.fail("AIF-B generator weights");
    if (!same_parameters(*m[0].discriminator, *m[1].discriminator)) n.fail("AIF-B discriminator weights");
    if (!torch::equal(b_out[0], b_out[1])) n.fail("AIF-B apply");
    n.note("corpus, both trainers and apply repeated twice");
    return n.done();
}

Outcome end_to_end() {
    const auto t0 = clk::now();
    Notes n;
    const auto ds = corpus(1234, 32, 64);
    auto model = AifdModel::create(TrainConfig{}, Vocabulary::build(ds.all_descriptions()), resources());
    AifdTrainer trainer(model, ds);
    trainer.run_all();
    SampleOptions opt;
    opt.guidance = model.config.guidance;
    opt.start_fraction = model.config.start_fraction;
    opt.seed = model.config.seed;
    const auto report = evaluate_aifd(model, ds.subset(Split::test), opt);
    const double secs = seconds_since(t0);
    if (!(report.eacc >= 0.60)) n.fail("EAcc " + fmt(report.eacc));
    if (!(report.ssim >= 0.40)) n.fail("SSIM " + fmt(report.ssim));
    if (!(report.sg < report.sg_content)) n.fail("SG " + fmt(report.sg) + " not below " + fmt(report.sg_content));
    if (secs > 7200) n.fail("took " + fmt(secs) + " s");
    n.note("EAcc " + fmt(report.eacc) + ", SSIM " + fmt(report.ssim) + ", SG " + fmt(report.sg) +
           " vs content " + fmt(report.sg_content) + ", " + std::to_string(report.count) + " test images, " +
           fmt(secs, 4) + " s");
    return n.done();
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    std::string only;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--only") only = argv[i + 1];
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"emotion_geometry", emotion_geometry},
        {"kl_oracle", kl_oracle},
        {"gradient_suite", gradient_suite},
        {"loss_weight_fidelity", loss_weights},
        {"diffusion_algebra", diffusion_algebra},
        {"ensemble_simplex", ensemble_simplex},
        {"glcm_histogram_oracles", glcm_histogram},
        {"end_to_end_toy", end_to_end},
        {"aifb_smoke", aifb_smoke},
        {"metrics", metrics},
        {"determinism", determinism},
    };
    int failed = 0, ran = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && name != only) continue;
        ++ran;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    if (ran == 0) {
        std::cerr << "no criterion named " << only << "\n";
        return 2;
    }
    return failed == 0 ? 0 : 1;
}
