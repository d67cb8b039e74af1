#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <vector>

#include "aif/text_encoder.hpp"

namespace aif {

/// Discrete noise schedule with index 0 as the clean sample: alpha[0] =
/// alpha_bar[0] = 1 and sigma[0] = 0; steps run 1..T.
class DiffusionSchedule {
public:
    /// Linear beta from beta_start to beta_end; the defaults are the usual
    /// 1e-4..0.02 range rescaled for 100 steps. `stochastic` enables
    /// sigma_t^2 = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t); sigma is 0 otherwise.
    static DiffusionSchedule linear(std::int64_t steps = 100, double beta_start = 1e-3, double beta_end = 0.2,
                                    bool stochastic = false);
    /// Builds from explicit per-step alphas (alphas[0] is step 1).
    static DiffusionSchedule from_alphas(const std::vector<double>& alphas, const std::vector<double>& sigmas = {});

    std::int64_t steps() const { return static_cast<std::int64_t>(alpha_.size()) - 1; }
    double alpha(std::int64_t t) const;
    double alpha_bar(std::int64_t t) const;
    double sigma(std::int64_t t) const;
    /// alpha_bar for every step, [T+1] float64.
    torch::Tensor alpha_bar_table() const;

private:
    void check(std::int64_t t) const;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
    std::vector<double> sigma_;
};

/// sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps. `t` is a step in 1..T,
/// or a [B] int64 tensor of steps for batched latents.
torch::Tensor forward_diffuse(const torch::Tensor& z0, std::int64_t t, const torch::Tensor& eps,
                              const DiffusionSchedule& schedule);
torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                              const DiffusionSchedule& schedule);

/// (z_t - sqrt(1 - alpha_bar_t) eps_pred) / sqrt(alpha_bar_t). Accepts t = 0.
torch::Tensor denoised_estimate(const torch::Tensor& zt, std::int64_t t, const torch::Tensor& eps_pred,
                                const DiffusionSchedule& schedule);
torch::Tensor denoised_estimate(const torch::Tensor& zt, const torch::Tensor& t, const torch::Tensor& eps_pred,
                                const DiffusionSchedule& schedule);

/// One reverse update from a noise estimate:
/// (z_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_t) + sigma_t n.
torch::Tensor reverse_update(const torch::Tensor& zt, std::int64_t t, const torch::Tensor& eps_pred,
                             const DiffusionSchedule& schedule, torch::Generator* rng);

struct AutoencoderConfig {
    std::vector<std::int64_t> channels{16, 32, 64};
    std::int64_t latent_channels = 4;
};

/// Latent-to-pixel decoder exposing the activations of its blocks, ordered
/// from the latent end (D_1) to the pixel end.
class LatentDecoderImpl : public torch::nn::Module {
public:
    explicit LatentDecoderImpl(const AutoencoderConfig& config);

    torch::Tensor forward(const torch::Tensor& latent);
    torch::Tensor forward(const torch::Tensor& latent, std::vector<torch::Tensor>* taps);
    std::int64_t num_taps() const { return static_cast<std::int64_t>(blocks_.size()); }

private:
    torch::nn::Conv2d input_{nullptr};
    std::vector<torch::nn::Sequential> blocks_;
    torch::nn::Conv2d output_{nullptr};
};
TORCH_MODULE(LatentDecoder);

/// Image encoder features E_i fed to the content preservation module.
struct EncoderFeatures {
    torch::Tensor latent;
    std::vector<torch::Tensor> stages;
};

/// Convolutional autoencoder with two stride-2 stages (f = 4). Latents are
/// multiplied by a stored scale so they have roughly unit variance.
class AutoencoderImpl : public torch::nn::Module {
public:
    explicit AutoencoderImpl(AutoencoderConfig config = {});

    /// [B,3,H,W] -> [B,c,H/4,W/4], scaled. Throws ShapeError for sizes not divisible by 4.
    torch::Tensor encode(const torch::Tensor& images);
    EncoderFeatures encode_features(const torch::Tensor& images);
    /// Scaled latents -> images in [0,1].
    torch::Tensor decode(const torch::Tensor& latents, std::vector<torch::Tensor>* taps = nullptr);
    torch::Tensor forward(const torch::Tensor& images) { return decode(encode(images)); }

    /// Sets the latent scale to 1 / std of the raw latents of `images`.
    void calibrate_scale(const torch::Tensor& images);
    double latent_scale() const { return scale_.item<double>(); }

    std::int64_t factor() const { return 4; }
    const AutoencoderConfig& config() const { return config_; }
    /// Channel counts of the E_i stages.
    std::vector<std::int64_t> stage_channels() const { return {config_.channels[1], config_.channels[2]}; }

    torch::nn::Module& encoder() { return *encoder_; }
    LatentDecoder& decoder() { return decoder_; }
    const LatentDecoder& decoder() const { return decoder_; }

private:
    torch::Tensor raw_encode(const torch::Tensor& images, std::vector<torch::Tensor>* stages);

    AutoencoderConfig config_;
    std::shared_ptr<torch::nn::Module> encoder_;  // parent of the four encoder convolutions
    torch::nn::Conv2d conv_in_{nullptr};
    torch::nn::Conv2d down1_{nullptr};
    torch::nn::Conv2d down2_{nullptr};
    torch::nn::Conv2d to_latent_{nullptr};
    LatentDecoder decoder_{nullptr};
    torch::Tensor scale_;
};
TORCH_MODULE(Autoencoder);

/// f_i + F_cp(E_i). Throws ShapeError when the projected encoder features do
/// not match the stage features.
torch::Tensor content_inject(const torch::Tensor& stage_features, const torch::Tensor& encoder_features,
                             torch::nn::Sequential& projection);

struct PredictorConfig {
    std::int64_t latent_channels = 4;
    std::vector<std::int64_t> channels{32, 64};
    std::int64_t time_dim = 128;
    std::int64_t heads = 4;
    std::int64_t vocab_size = 2;
    std::int64_t text_dim = 64;
    std::int64_t max_text = 24;
    /// E_i channel counts (one per stage); empty disables the content taps.
    std::vector<std::int64_t> content_channels{32, 64};
    /// Each E_i is downsampled by this factor by F_cp to reach its stage.
    std::vector<std::int64_t> content_strides{2, 2};
    bool content_injection = true;
};

class ResBlockImpl : public torch::nn::Module {
public:
    ResBlockImpl(std::int64_t in, std::int64_t out, std::int64_t time_dim);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

private:
    torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
    torch::nn::Linear time_{nullptr};
    torch::nn::Conv2d skip_{nullptr};
};
TORCH_MODULE(ResBlock);

/// Spatial positions attend to text tokens; residual.
class CrossAttentionImpl : public torch::nn::Module {
public:
    CrossAttentionImpl(std::int64_t channels, std::int64_t context_dim, std::int64_t heads);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context, const torch::Tensor& mask);

private:
    std::int64_t heads_;
    torch::nn::GroupNorm norm_{nullptr};
    torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr}, out_{nullptr};
};
TORCH_MODULE(CrossAttention);

/// Text conditioning: tokens [B,M,C] with a real-token mask. An absent
/// context selects the learned null embedding.
struct Conditioning {
    torch::Tensor tokens;
    torch::Tensor mask;
};

/// Two-level U-Net noise predictor with time embedding, text
/// cross-attention and per-stage content preservation taps.
class NoisePredictorImpl : public torch::nn::Module {
public:
    explicit NoisePredictorImpl(PredictorConfig config);

    /// Text tokens of a batch: [B,M,text_dim+3] plus mask.
    Conditioning condition(const TextBatch& text);
    /// The null-text conditioning for `batch` rows, padded to `length` tokens.
    Conditioning null_condition(std::int64_t batch, std::int64_t length = 1);
    /// Rows where `keep` is false switch to the null conditioning.
    Conditioning drop_condition(const Conditioning& cond, const torch::Tensor& keep);

    /// eps_theta(z_t, t, text, E). `content` holds the E_i stages (ignored
    /// when injection is disabled); `t` is a [B] int64 tensor.
    torch::Tensor forward(const torch::Tensor& zt, const torch::Tensor& t, const Conditioning& cond,
                          const std::vector<torch::Tensor>& content);

    const PredictorConfig& config() const { return config_; }
    void set_content_injection(bool on) { config_.content_injection = on; }
    /// The F_cp convolution stacks, one per stage.
    std::vector<torch::nn::Sequential>& content_projections() { return projections_; }
    TextEncoder& text_encoder() { return text_; }

private:
    torch::Tensor time_embedding(const torch::Tensor& t);

    PredictorConfig config_;
    TextEncoder text_{nullptr};
    torch::Tensor null_text_;
    torch::nn::Linear time1_{nullptr}, time2_{nullptr};
    torch::nn::Conv2d conv_in_{nullptr};
    ResBlock down_block1_{nullptr}, down_block2_{nullptr}, mid_block_{nullptr}, up_block_{nullptr};
    CrossAttention attn1_{nullptr}, attn2_{nullptr}, attn_up_{nullptr};
    torch::nn::Conv2d downsample_{nullptr};
    torch::nn::Conv2d upsample_conv_{nullptr};
    torch::nn::GroupNorm norm_out_{nullptr};
    torch::nn::Conv2d conv_out_{nullptr};
    std::vector<torch::nn::Sequential> projections_;
};
TORCH_MODULE(NoisePredictor);

/// eps_u + s (eps_c - eps_u).
torch::Tensor guidance_combine(const torch::Tensor& eps_cond, const torch::Tensor& eps_uncond, double scale);

/// Classifier-free guided noise estimate. s = 1 skips the unconditional pass.
torch::Tensor guided_noise(NoisePredictor& predictor, const torch::Tensor& zt, std::int64_t t, const TextBatch& text,
                           const std::vector<torch::Tensor>& content, double scale);

/// One guided reverse step (t >= 1) with content injection.
torch::Tensor denoise_step(NoisePredictor& predictor, const torch::Tensor& zt, std::int64_t t, const TextBatch& text,
                           const std::vector<torch::Tensor>& content, const DiffusionSchedule& schedule,
                           double guidance, torch::Generator* rng);

struct SampleOptions {
    double guidance = 2.0;
    /// Starting depth as a fraction of T.
    double start_fraction = 0.6;
    std::uint64_t seed = 0;
};

/// Encodes the content, noises it to T_start, runs the guided reverse chain
/// and decodes with the autoencoder's (fine-tuned) decoder.
torch::Tensor sample(Autoencoder& autoencoder, NoisePredictor& predictor, const torch::Tensor& content_images,
                     const TextBatch& text, const DiffusionSchedule& schedule, const SampleOptions& options);

}  // namespace aif
