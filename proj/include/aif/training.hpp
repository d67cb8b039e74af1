#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aif/classifiers.hpp"
#include "aif/dataset.hpp"
#include "aif/losses.hpp"

namespace aif {

/// Every tunable of the trainers. Keys in run configuration files match the
/// member names; loss weights use the LossWeights names.
struct TrainConfig {
    std::uint64_t seed = 7;
    std::int64_t batch_size = 16;
    std::int64_t log_every = 10;

    // Voting ensemble.
    std::int64_t classifier_steps = 300;
    double classifier_lr = 1e-3;

    // Toy autoencoder.
    std::int64_t ae_steps = 1500;
    double ae_lr = 1e-3;

    // AIF-D.
    std::int64_t finetune_steps = 100;
    double finetune_lr = 1e-6;
    /// Predictor steps on L_dm alone at pretrain_lr, standing in for a
    /// pretrained denoiser.
    std::int64_t denoise_pretrain_steps = 5000;
    double pretrain_lr = 1e-4;
    /// Steps on the full objective at learning_rate, after the pretraining.
    std::int64_t predictor_steps = 1000;
    double learning_rate = 1e-6;
    std::int64_t timesteps = 100;
    double beta_start = 1e-3;
    double beta_end = 0.2;
    bool stochastic_sampling = false;
    double cond_dropout = 0.1;
    double guidance = 8.0;
    double start_fraction = 0.6;
    double image_loss_max_fraction = 0.3;
    std::string diffusion_target = "anchor";
    bool content_injection = true;
    std::int64_t text_dim = 64;
    std::int64_t max_text = 24;

    // AIF-B.
    std::int64_t aifb_steps = 2000;
    double aifb_lr = 1e-4;
    double aifb_d_lr = 1e-4;
    std::int64_t warmup_steps = 100;
    std::int64_t patch_size = 8;
    std::int64_t model_width = 128;
    std::int64_t layers = 4;
    std::int64_t heads = 4;

    LossWeights weights;

    /// Throws ConfigError for unknown keys or malformed values.
    void set(const std::string& key, const std::string& value);
    /// All keys with their current values, in a fixed order.
    std::vector<std::pair<std::string, std::string>> entries() const;

    static TrainConfig from_file(const std::filesystem::path& path);
    static TrainConfig from_entries(const std::vector<std::pair<std::string, std::string>>& entries);
    void validate() const;
};

/// Lexicons bundled with the repository (or copied into a model directory).
struct TextResources {
    VadLexicon vad;
    KeywordLexicon keywords;
    /// Directory the lexicon files came from; model directories copy them.
    std::filesystem::path dir;

    static TextResources load(const std::filesystem::path& dir);
};

/// Stacks images of `samples` into a [B,3,H,W] batch.
torch::Tensor stack_images(const std::vector<const AnchorSample*>& samples, bool content = false);
torch::Tensor stack_distributions(const std::vector<const AnchorSample*>& samples);

/// A generator seeded from (seed, stream, step), so any step can be replayed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t step);

/// One JSON object per line: {"stage", "step", <named components>...}.
class LossLog {
public:
    explicit LossLog(std::ostream* out) : out_(out) {}
    void write(const std::string& stage, std::int64_t step, const std::vector<std::pair<std::string, double>>& values);

private:
    std::ostream* out_;
};

/// Throws TrainingError naming the stage, step and component when a loss is
/// not finite.
void check_finite(const std::string& stage, std::int64_t step,
                  const std::vector<std::pair<std::string, double>>& values);

/// Trains the four perspective classifiers on the training anchors with
/// soft targets, then sets the voting weights to validation accuracies.
void train_ensemble(EmotionEnsemble& ensemble, const Dataset& dataset, const TrainConfig& config,
                    std::ostream* log = nullptr);

/// Top-1 accuracy of every perspective and of the vote on a split.
std::vector<double> evaluate_ensemble(EmotionEnsemble& ensemble, const std::vector<const AnchorSample*>& samples);

/// Rich prompts (offline enhancement) for every description of a sample.
std::vector<std::string> sample_prompts(const AnchorSample& sample, const KeywordLexicon& keywords);

}  // namespace aif
