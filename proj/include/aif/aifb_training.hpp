#pragma once

#include <filesystem>
#include <memory>
#include <ostream>

#include "aif/aifb.hpp"
#include "aif/classifiers.hpp"
#include "aif/dataset.hpp"
#include "aif/training.hpp"

namespace aif {

AifbConfig aifb_config(const TrainConfig& config, std::int64_t resolution, std::int64_t vocab_size);

/// Generator, discriminator and the frozen emotion priors they train against.
struct AifbModel {
    TrainConfig config;
    std::int64_t resolution = 64;
    Vocabulary vocab;
    std::shared_ptr<TextResources> text;
    FeatureBackbone backbone{nullptr};
    std::shared_ptr<EmotionEnsemble> ensemble;
    SentimentExtractor extractor{nullptr};
    AifbGenerator generator{nullptr};
    AifbDiscriminator discriminator{nullptr};
    bool ensemble_trained = false;
    std::int64_t steps_trained = 0;

    static AifbModel create(const TrainConfig& config, std::int64_t resolution, Vocabulary vocab,
                            std::shared_ptr<TextResources> text);

    TextBatch encode_text(const std::vector<std::string>& descriptions) const;
    /// Filters [3,H,W] or [B,3,H,W] content with one description per image.
    /// Throws InvalidArgument for an empty description.
    torch::Tensor apply(const torch::Tensor& content, const std::vector<std::string>& descriptions);

    void save(const std::filesystem::path& dir) const;
    static AifbModel load(const std::filesystem::path& dir);
};

/// One training micro-batch: content and anchors of the seed samples and the
/// texts of the seed, positive, related and negative samples, stacked in
/// that order (4B rows).
struct AifbBatch {
    torch::Tensor content;
    torch::Tensor anchor;
    torch::Tensor distribution;
    TextBatch text;
    EmotionTuple tuple;
    std::int64_t size = 0;
};

/// Generator-side components of one step, before weighting.
struct AifbLosses {
    torch::Tensor ed, sm, as, content, style, gan, identity, ae, total;
    torch::Tensor discriminator;
};

class AifbTrainer {
public:
    AifbTrainer(AifbModel& model, const Dataset& dataset, std::ostream* log = nullptr);

    void train_classifiers();
    AifbBatch make_batch(std::int64_t step) const;
    /// Discriminator update, then generator update, at global step `step`.
    AifbLosses train_step(const AifbBatch& batch, std::int64_t step);
    /// Generator objective of a batch without touching any weights.
    AifbLosses generator_losses(const AifbBatch& batch);
    /// Continues from model.steps_trained up to `total_steps`.
    void train(std::int64_t total_steps);

    /// Optimizer moments and the step counter, for bitwise resumption.
    void save_state(const std::filesystem::path& path);
    void load_state(const std::filesystem::path& path);

    /// Generator objective of every step run by this trainer.
    const std::vector<double>& history() const { return history_; }

private:
    double learning_rate_scale(std::int64_t step) const;

    AifbModel& model_;
    const Dataset& dataset_;
    std::vector<const AnchorSample*> train_;
    std::vector<std::vector<const AnchorSample*>> by_label_;
    LossLog log_;
    std::unique_ptr<torch::optim::Adam> g_opt_;
    std::unique_ptr<torch::optim::Adam> d_opt_;
    std::vector<double> history_;
};

}  // namespace aif
