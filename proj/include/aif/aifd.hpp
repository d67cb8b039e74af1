#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "aif/classifiers.hpp"
#include "aif/dataset.hpp"
#include "aif/diffusion.hpp"
#include "aif/features.hpp"
#include "aif/training.hpp"

namespace aif {

/// Every trained component of the diffusion-based filter.
struct AifdModel {
    TrainConfig config;
    /// Side length of the training images; set by AifdTrainer.
    std::int64_t resolution = 64;
    Vocabulary vocab;
    std::shared_ptr<TextResources> text;
    FeatureBackbone backbone{nullptr};
    std::shared_ptr<EmotionEnsemble> ensemble;
    SentimentExtractor extractor{nullptr};
    Autoencoder autoencoder{nullptr};
    NoisePredictor predictor{nullptr};
    DiffusionSchedule schedule;
    bool ensemble_trained = false;
    bool autoencoder_trained = false;
    bool decoder_finetuned = false;
    bool predictor_trained = false;

    /// Fresh components; module initialization is seeded from config.seed.
    static AifdModel create(const TrainConfig& config, Vocabulary vocab, std::shared_ptr<TextResources> text);

    TextBatch encode_text(const std::vector<std::string>& prompts) const;
    /// Rich prompt of a raw description (language model when given, offline otherwise).
    std::string prompt(const std::string& description, LanguageModelClient* client = nullptr) const;

    /// Filters one [3,H,W] content image (or a batch) with the prompts.
    torch::Tensor apply(const torch::Tensor& content, const std::vector<std::string>& prompts,
                        const SampleOptions& options);

    void save(const std::filesystem::path& dir) const;
    static AifdModel load(const std::filesystem::path& dir);
};

/// Anchor images for one decoder fine-tuning step.
struct FinetuneBatch {
    torch::Tensor sed, pos, rel, neg;
    EmotionTuple tuple;
};

/// One step of L_sm + lambda L_s on decoded anchors; returns the loss.
double finetune_decoder_step(Autoencoder& autoencoder, SentimentExtractor& extractor, const FinetuneBatch& batch,
                             const LossWeights& weights, double lambda, torch::optim::Optimizer& optimizer);

/// Parts of one predictor step, before weighting.
struct PredictorLosses {
    torch::Tensor dm, tm, ed, as, total;
};

/// Staged AIF-D training: ensemble, autoencoder, decoder fine-tuning, then
/// the noise predictor. Stages must run in that order.
class AifdTrainer {
public:
    AifdTrainer(AifdModel& model, const Dataset& dataset, std::ostream* log = nullptr);

    void train_classifiers();
    void train_autoencoder();
    /// Stage 1. Freezes the decoder afterwards.
    void finetune_decoder();
    /// Stage 2. Throws TrainingError unless the decoder was fine-tuned.
    void train_predictor();
    void run_all();

    FinetuneBatch finetune_batch(std::int64_t step) const;
    std::vector<const AnchorSample*> batch(std::int64_t step, std::uint64_t stream) const;
    /// Losses of one predictor step on `samples` (no optimizer update). The
    /// image-space terms are zero unless `image_losses` is set.
    PredictorLosses predictor_losses(const std::vector<const AnchorSample*>& samples, std::int64_t step,
                                     bool image_losses = true);

    /// Per-step values of the last finished stage, in order.
    const std::vector<double>& history() const { return history_; }

private:
    AifdModel& model_;
    const Dataset& dataset_;
    std::vector<const AnchorSample*> train_;
    std::vector<std::vector<const AnchorSample*>> by_label_;
    LossLog log_;
    std::vector<double> history_;
};

}  // namespace aif
