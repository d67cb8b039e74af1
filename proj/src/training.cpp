#include "aif/training.hpp"

#include <charconv>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <variant>

#include "aif/config.hpp"
#include "aif/errors.hpp"

namespace aif {

namespace {

using Member = std::variant<double TrainConfig::*, std::int64_t TrainConfig::*, std::uint64_t TrainConfig::*,
                            bool TrainConfig::*, std::string TrainConfig::*>;

struct Field {
    const char* name;
    Member member;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> table{
        {"seed", &TrainConfig::seed},
        {"batch_size", &TrainConfig::batch_size},
        {"log_every", &TrainConfig::log_every},
        {"classifier_steps", &TrainConfig::classifier_steps},
        {"classifier_lr", &TrainConfig::classifier_lr},
        {"ae_steps", &TrainConfig::ae_steps},
        {"ae_lr", &TrainConfig::ae_lr},
        {"finetune_steps", &TrainConfig::finetune_steps},
        {"finetune_lr", &TrainConfig::finetune_lr},
        {"predictor_steps", &TrainConfig::predictor_steps},
        {"denoise_pretrain_steps", &TrainConfig::denoise_pretrain_steps},
        {"pretrain_lr", &TrainConfig::pretrain_lr},
        {"learning_rate", &TrainConfig::learning_rate},
        {"timesteps", &TrainConfig::timesteps},
        {"beta_start", &TrainConfig::beta_start},
        {"beta_end", &TrainConfig::beta_end},
        {"stochastic_sampling", &TrainConfig::stochastic_sampling},
        {"cond_dropout", &TrainConfig::cond_dropout},
        {"guidance", &TrainConfig::guidance},
        {"start_fraction", &TrainConfig::start_fraction},
        {"image_loss_max_fraction", &TrainConfig::image_loss_max_fraction},
        {"diffusion_target", &TrainConfig::diffusion_target},
        {"content_injection", &TrainConfig::content_injection},
        {"text_dim", &TrainConfig::text_dim},
        {"max_text", &TrainConfig::max_text},
        {"aifb_steps", &TrainConfig::aifb_steps},
        {"aifb_lr", &TrainConfig::aifb_lr},
        {"aifb_d_lr", &TrainConfig::aifb_d_lr},
        {"warmup_steps", &TrainConfig::warmup_steps},
        {"patch_size", &TrainConfig::patch_size},
        {"model_width", &TrainConfig::model_width},
        {"layers", &TrainConfig::layers},
        {"heads", &TrainConfig::heads},
    };
    return table;
}

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

torch::Tensor soft_cross_entropy(const torch::Tensor& logits, const torch::Tensor& targets) {
    return -(targets * torch::log_softmax(logits, 1)).sum(1).mean();
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key != f.name) continue;
        std::visit(
            [&](auto member) {
                using T = std::remove_reference_t<decltype(this->*member)>;
                if constexpr (std::is_same_v<T, double>) {
                    this->*member = parse_double_value(key, value);
                } else if constexpr (std::is_same_v<T, std::int64_t>) {
                    this->*member = parse_int_value(key, value);
                } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                    const auto v = parse_int_value(key, value);
                    if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
                    this->*member = static_cast<std::uint64_t>(v);
                } else if constexpr (std::is_same_v<T, bool>) {
                    this->*member = parse_bool_value(key, value);
                } else {
                    this->*member = value;
                }
            },
            f.member);
        return;
    }
    if (weights.set(key, parse_double_value(key, value))) return;
    throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) {
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(this->*member)>;
                const auto& v = this->*member;
                if constexpr (std::is_same_v<T, double>) {
                    out.emplace_back(f.name, format_double(v));
                } else if constexpr (std::is_same_v<T, bool>) {
                    out.emplace_back(f.name, v ? "true" : "false");
                } else if constexpr (std::is_same_v<T, std::string>) {
                    out.emplace_back(f.name, v);
                } else {
                    out.emplace_back(f.name, std::to_string(v));
                }
            },
            f.member);
    }
    for (const auto& n : LossWeights::names()) out.emplace_back(n, format_double(weights.get(n)));
    return out;
}

TrainConfig TrainConfig::from_entries(const std::vector<std::pair<std::string, std::string>>& entries) {
    TrainConfig c;
    for (const auto& [k, v] : entries) c.set(k, v);
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
    return from_entries(KeyValueFile::load(path).entries());
}

void TrainConfig::validate() const {
    auto positive = [](const char* name, double v) {
        if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive("batch_size", double(batch_size));
    positive("log_every", double(log_every));
    positive("timesteps", double(timesteps));
    positive("learning_rate", learning_rate);
    positive("pretrain_lr", pretrain_lr);
    positive("classifier_lr", classifier_lr);
    positive("ae_lr", ae_lr);
    positive("finetune_lr", finetune_lr);
    positive("aifb_lr", aifb_lr);
    positive("aifb_d_lr", aifb_d_lr);
    positive("text_dim", double(text_dim));
    positive("max_text", double(max_text));
    for (auto [name, v] : {std::pair{"classifier_steps", classifier_steps}, std::pair{"ae_steps", ae_steps},
                           std::pair{"finetune_steps", finetune_steps}, std::pair{"predictor_steps", predictor_steps},
                           std::pair{"denoise_pretrain_steps", denoise_pretrain_steps},
                           std::pair{"aifb_steps", aifb_steps}, std::pair{"warmup_steps", warmup_steps}}) {
        if (v < 0) throw ConfigError(std::string(name) + " must be non-negative");
    }
    if (cond_dropout < 0 || cond_dropout >= 1) throw ConfigError("cond_dropout must lie in [0, 1)");
    if (guidance < 0) throw ConfigError("guidance must be non-negative");
    if (!(start_fraction > 0 && start_fraction <= 1)) throw ConfigError("start_fraction must lie in (0, 1]");
    if (!(image_loss_max_fraction > 0 && image_loss_max_fraction <= 1)) {
        throw ConfigError("image_loss_max_fraction must lie in (0, 1]");
    }
    if (diffusion_target != "anchor" && diffusion_target != "content") {
        throw ConfigError("diffusion_target must be 'anchor' or 'content'");
    }
    if (model_width % heads != 0) throw ConfigError("model_width must be divisible by heads");
}

TextResources TextResources::load(const std::filesystem::path& dir) {
    return {VadLexicon::load(dir / "vad_lexicon.tsv"), KeywordLexicon::load(dir / "emotion_keywords.tsv"), dir};
}

torch::Tensor stack_images(const std::vector<const AnchorSample*>& samples, bool content) {
    if (samples.empty()) throw InvalidArgument("empty batch");
    std::vector<torch::Tensor> images;
    for (const auto* s : samples) images.push_back(content ? s->content : s->image);
    return torch::stack(images);
}

torch::Tensor stack_distributions(const std::vector<const AnchorSample*>& samples) {
    std::vector<torch::Tensor> rows;
    for (const auto* s : samples) {
        rows.push_back(torch::tensor(std::vector<double>(s->distribution.probs().begin(), s->distribution.probs().end()),
                                     torch::kDouble));
    }
    return torch::stack(rows).to(torch::kFloat);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) {
    return splitmix(splitmix(splitmix(seed) ^ stream) ^ step);
}

void LossLog::write(const std::string& stage, std::int64_t step,
                    const std::vector<std::pair<std::string, double>>& values) {
    if (!out_) return;
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["step"] = step;
    for (const auto& [k, v] : values) j[k] = v;
    *out_ << j.dump() << '\n';
    out_->flush();
}

void check_finite(const std::string& stage, std::int64_t step,
                  const std::vector<std::pair<std::string, double>>& values) {
    for (const auto& [k, v] : values) {
        if (!std::isfinite(v)) {
            throw TrainingError(stage + " diverged at step " + std::to_string(step) + ": " + k + " = " +
                                std::to_string(v));
        }
    }
}

void train_ensemble(EmotionEnsemble& ensemble, const Dataset& dataset, const TrainConfig& config, std::ostream* log) {
    const auto train = dataset.subset(Split::train);
    const auto val = dataset.subset(Split::val);
    if (train.empty()) throw InvalidArgument("training split is empty");
    if (val.empty()) throw InvalidArgument("validation split is empty");
    LossLog logger(log);
    const auto images = stack_images(train);
    const auto targets = stack_distributions(train);

    for (auto p : kAllPerspectives) {
        torch::Tensor features;
        {
            torch::NoGradGuard no_grad;
            features = ensemble.features(p, images).to(torch::kFloat);
        }
        auto t = targets;
        if (p == Perspective::patch) t = targets.repeat_interleave(ensemble.config().patch.count, 0);
        auto& clf = ensemble.classifier(p);
        clf->set_normalization(features.mean(0), features.std(0, false).clamp_min(1e-6));
        torch::optim::Adam opt(clf->parameters(), torch::optim::AdamOptions(config.classifier_lr).weight_decay(1e-4));
        double last = 0;
        for (std::int64_t step = 0; step < config.classifier_steps; ++step) {
            opt.zero_grad();
            auto loss = soft_cross_entropy(clf->forward(features), t);
            loss.backward();
            opt.step();
            last = loss.item<double>();
            check_finite(std::string("ensemble.") + std::string(perspective_name(p)), step, {{"loss", last}});
        }
        logger.write("ensemble", config.classifier_steps,
                     {{std::string(perspective_name(p)) + "_loss", last}});
    }

    std::vector<torch::Tensor> val_images;
    std::vector<Emotion> val_labels;
    for (const auto* s : val) {
        val_images.push_back(s->image);
        val_labels.push_back(s->label);
    }
    const auto estimators = ensemble.estimators();
    auto weights = fit_ensemble_weights(estimators, val_images, val_labels);
    double total = 0;
    for (double w : weights.w) total += w;
    if (total <= 0) throw TrainingError("every perspective classifier failed on the validation split");
    ensemble.set_weights(weights);
    std::vector<std::pair<std::string, double>> entries;
    for (auto p : kAllPerspectives) entries.emplace_back(std::string(perspective_name(p)) + "_weight", weights.w[static_cast<std::size_t>(p)]);
    logger.write("ensemble", config.classifier_steps, entries);
}

std::vector<double> evaluate_ensemble(EmotionEnsemble& ensemble, const std::vector<const AnchorSample*>& samples) {
    if (samples.empty()) throw InvalidArgument("empty evaluation split");
    torch::NoGradGuard no_grad;
    const auto images = stack_images(samples);
    std::vector<std::int64_t> labels;
    for (const auto* s : samples) labels.push_back(wheel_position(s->label));
    const auto y = torch::tensor(labels);
    std::vector<double> out;
    std::vector<torch::Tensor> probs;
    for (auto p : kAllPerspectives) {
        probs.push_back(ensemble.probabilities(p, images));
        out.push_back((probs.back().argmax(1) == y).to(torch::kDouble).mean().item<double>());
    }
    const auto vote = ensemble_distribution(probs, ensemble.weights());
    out.push_back((vote.argmax(1) == y).to(torch::kDouble).mean().item<double>());
    return out;
}

std::vector<std::string> sample_prompts(const AnchorSample& sample, const KeywordLexicon& keywords) {
    std::vector<std::string> out;
    for (const auto& d : sample.descriptions) out.push_back(offline_enhance(d, keywords).combined);
    return out;
}

}  // namespace aif
