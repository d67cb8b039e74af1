#include "aif/diffusion.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <numbers>

#include "aif/errors.hpp"

namespace aif {

namespace {

namespace F = torch::nn::functional;

torch::nn::Conv2d conv3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::GroupNorm group_norm(std::int64_t channels) {
    return torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min<std::int64_t>(8, channels), channels));
}

torch::Tensor upsample2(const torch::Tensor& x) {
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
}

torch::Tensor broadcast_rows(const torch::Tensor& table, const torch::Tensor& t, const torch::Tensor& like) {
    auto values = table.index_select(0, t.to(torch::kLong)).to(like.scalar_type());
    std::vector<std::int64_t> shape(static_cast<std::size_t>(like.dim()), 1);
    shape[0] = like.size(0);
    return values.view(shape);
}

void check_steps(const torch::Tensor& t, std::int64_t batch, std::int64_t lo, std::int64_t hi) {
    if (t.dim() != 1 || t.size(0) != batch) throw ShapeError("timestep tensor must be [B]");
    if (t.numel() > 0 && (t.min().item<std::int64_t>() < lo || t.max().item<std::int64_t>() > hi)) {
        throw InvalidArgument("timestep outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
}

}  // namespace

DiffusionSchedule DiffusionSchedule::linear(std::int64_t steps, double beta_start, double beta_end, bool stochastic) {
    if (steps < 1) throw InvalidArgument("schedule needs at least one step");
    if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1)) throw InvalidArgument("betas must satisfy 0 < start <= end < 1");
    std::vector<double> alphas;
    for (std::int64_t t = 1; t <= steps; ++t) {
        const double frac = steps == 1 ? 0.0 : double(t - 1) / double(steps - 1);
        alphas.push_back(1.0 - (beta_start + (beta_end - beta_start) * frac));
    }
    auto s = from_alphas(alphas);
    if (stochastic) {
        for (std::int64_t t = 1; t <= steps; ++t) {
            const double beta = 1.0 - s.alpha_[t];
            s.sigma_[t] = std::sqrt(beta * (1.0 - s.alpha_bar_[t - 1]) / (1.0 - s.alpha_bar_[t]));
        }
    }
    return s;
}

DiffusionSchedule DiffusionSchedule::from_alphas(const std::vector<double>& alphas, const std::vector<double>& sigmas) {
    if (alphas.empty()) throw InvalidArgument("schedule needs at least one step");
    if (!sigmas.empty() && sigmas.size() != alphas.size()) throw InvalidArgument("one sigma per step is required");
    DiffusionSchedule s;
    s.alpha_ = {1.0};
    s.alpha_bar_ = {1.0};
    s.sigma_ = {0.0};
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] > 0 && alphas[i] <= 1)) throw InvalidArgument("alpha_t must lie in (0, 1]");
        s.alpha_.push_back(alphas[i]);
        s.alpha_bar_.push_back(s.alpha_bar_.back() * alphas[i]);
        const double sigma = sigmas.empty() ? 0.0 : sigmas[i];
        if (sigma < 0) throw InvalidArgument("sigma_t must be non-negative");
        s.sigma_.push_back(sigma);
    }
    return s;
}

void DiffusionSchedule::check(std::int64_t t) const {
    if (t < 0 || t > steps()) throw InvalidArgument("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
}

double DiffusionSchedule::alpha(std::int64_t t) const {
    check(t);
    return alpha_[static_cast<std::size_t>(t)];
}

double DiffusionSchedule::alpha_bar(std::int64_t t) const {
    check(t);
    return alpha_bar_[static_cast<std::size_t>(t)];
}

double DiffusionSchedule::sigma(std::int64_t t) const {
    check(t);
    return sigma_[static_cast<std::size_t>(t)];
}

torch::Tensor DiffusionSchedule::alpha_bar_table() const { return torch::tensor(alpha_bar_, torch::kDouble); }

torch::Tensor forward_diffuse(const torch::Tensor& z0, std::int64_t t, const torch::Tensor& eps,
                              const DiffusionSchedule& schedule) {
    if (t < 1 || t > schedule.steps()) throw InvalidArgument("forward_diffuse needs 1 <= t <= T");
    if (!z0.sizes().equals(eps.sizes())) throw ShapeError("noise shape differs from the latent");
    const double ab = schedule.alpha_bar(t);
    return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& t, const torch::Tensor& eps,
                              const DiffusionSchedule& schedule) {
    if (!z0.sizes().equals(eps.sizes())) throw ShapeError("noise shape differs from the latent");
    check_steps(t, z0.size(0), 1, schedule.steps());
    const auto ab = broadcast_rows(schedule.alpha_bar_table(), t, z0);
    return ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps;
}

torch::Tensor denoised_estimate(const torch::Tensor& zt, std::int64_t t, const torch::Tensor& eps_pred,
                                const DiffusionSchedule& schedule) {
    if (!zt.sizes().equals(eps_pred.sizes())) throw ShapeError("noise estimate shape differs from the latent");
    const double ab = schedule.alpha_bar(t);
    if (ab <= 0) throw InvalidArgument("alpha_bar_t is zero");
    return (zt - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
}

torch::Tensor denoised_estimate(const torch::Tensor& zt, const torch::Tensor& t, const torch::Tensor& eps_pred,
                                const DiffusionSchedule& schedule) {
    if (!zt.sizes().equals(eps_pred.sizes())) throw ShapeError("noise estimate shape differs from the latent");
    check_steps(t, zt.size(0), 0, schedule.steps());
    const auto ab = broadcast_rows(schedule.alpha_bar_table(), t, zt);
    return (zt - (1.0 - ab).sqrt() * eps_pred) / ab.sqrt();
}

torch::Tensor reverse_update(const torch::Tensor& zt, std::int64_t t, const torch::Tensor& eps_pred,
                             const DiffusionSchedule& schedule, torch::Generator* rng) {
    if (t < 1 || t > schedule.steps()) throw InvalidArgument("denoising needs 1 <= t <= T");
    if (!zt.sizes().equals(eps_pred.sizes())) throw ShapeError("noise estimate shape differs from the latent");
    const double a = schedule.alpha(t);
    const double ab = schedule.alpha_bar(t);
    auto next = (zt - ((1.0 - a) / std::sqrt(1.0 - ab)) * eps_pred) / std::sqrt(a);
    const double sigma = schedule.sigma(t);
    if (sigma > 0) {
        if (rng == nullptr) throw InvalidArgument("stochastic sampling needs a generator");
        next = next + sigma * torch::randn(zt.sizes(), *rng, zt.options());
    }
    return next;
}

LatentDecoderImpl::LatentDecoderImpl(const AutoencoderConfig& config) {
    const auto& c = config.channels;
    input_ = register_module("input", conv3(config.latent_channels, c[2]));
    const std::vector<std::pair<std::int64_t, std::int64_t>> widths{{c[2], c[2]}, {c[2], c[1]}, {c[1], c[0]}};
    for (std::size_t i = 0; i < widths.size(); ++i) {
        auto [in, out] = widths[i];
        torch::nn::Sequential block(conv3(in, out), torch::nn::SiLU(), conv3(out, out), torch::nn::SiLU());
        blocks_.push_back(register_module("block" + std::to_string(i + 1), block));
    }
    output_ = register_module("output", conv3(c[0], 3));
}

torch::Tensor LatentDecoderImpl::forward(const torch::Tensor& latent) { return forward(latent, nullptr); }

torch::Tensor LatentDecoderImpl::forward(const torch::Tensor& latent, std::vector<torch::Tensor>* taps) {
    auto h = torch::silu(input_->forward(latent));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (i > 0) h = upsample2(h);
        h = blocks_[i]->forward(h);
        if (taps) taps->push_back(h);
    }
    return torch::sigmoid(output_->forward(h));
}

AutoencoderImpl::AutoencoderImpl(AutoencoderConfig config) : config_(std::move(config)) {
    if (config_.channels.size() != 3) throw ConfigError("autoencoder needs three channel widths");
    const auto& c = config_.channels;
    encoder_ = register_module("encoder", std::make_shared<torch::nn::Module>());
    conv_in_ = encoder_->register_module("conv_in", conv3(3, c[0]));
    down1_ = encoder_->register_module("down1", conv3(c[0], c[1], 2));
    down2_ = encoder_->register_module("down2", conv3(c[1], c[2], 2));
    to_latent_ = encoder_->register_module("to_latent", conv3(c[2], config_.latent_channels));
    decoder_ = register_module("decoder", LatentDecoder(config_));
    scale_ = register_buffer("latent_scale", torch::ones({}));
}

torch::Tensor AutoencoderImpl::raw_encode(const torch::Tensor& images, std::vector<torch::Tensor>* stages) {
    if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("autoencoder expects [B,3,H,W] images");
    if (images.size(2) % 4 != 0 || images.size(3) % 4 != 0) {
        throw ShapeError("image height and width must be multiples of 4");
    }
    auto h = torch::silu(conv_in_->forward(images));
    h = torch::silu(down1_->forward(h));
    if (stages) stages->push_back(h);
    h = torch::silu(down2_->forward(h));
    if (stages) stages->push_back(h);
    return to_latent_->forward(h);
}

torch::Tensor AutoencoderImpl::encode(const torch::Tensor& images) { return raw_encode(images, nullptr) * scale_; }

EncoderFeatures AutoencoderImpl::encode_features(const torch::Tensor& images) {
    EncoderFeatures f;
    f.latent = raw_encode(images, &f.stages) * scale_;
    return f;
}

torch::Tensor AutoencoderImpl::decode(const torch::Tensor& latents, std::vector<torch::Tensor>* taps) {
    return decoder_->forward(latents / scale_, taps);
}

void AutoencoderImpl::calibrate_scale(const torch::Tensor& images) {
    torch::NoGradGuard no_grad;
    const auto std = raw_encode(images, nullptr).std().item<double>();
    if (!(std > 0) || !std::isfinite(std)) throw TrainingError("latent standard deviation is not positive");
    scale_.fill_(1.0 / std);
}

torch::Tensor content_inject(const torch::Tensor& stage_features, const torch::Tensor& encoder_features,
                             torch::nn::Sequential& projection) {
    const auto projected = projection->forward(encoder_features);
    if (!projected.sizes().equals(stage_features.sizes())) {
        throw ShapeError("projected encoder features do not match the stage features");
    }
    return stage_features + projected;
}

ResBlockImpl::ResBlockImpl(std::int64_t in, std::int64_t out, std::int64_t time_dim) {
    norm1_ = register_module("norm1", group_norm(in));
    conv1_ = register_module("conv1", conv3(in, out));
    time_ = register_module("time", torch::nn::Linear(time_dim, out));
    norm2_ = register_module("norm2", group_norm(out));
    conv2_ = register_module("conv2", conv3(out, out));
    if (in != out) skip_ = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
    auto h = conv1_->forward(torch::silu(norm1_->forward(x)));
    h = h + time_->forward(torch::silu(temb)).unsqueeze(2).unsqueeze(3);
    h = conv2_->forward(torch::silu(norm2_->forward(h)));
    return (skip_ ? skip_->forward(x) : x) + h;
}

CrossAttentionImpl::CrossAttentionImpl(std::int64_t channels, std::int64_t context_dim, std::int64_t heads)
    : heads_(heads) {
    if (channels % heads != 0) throw ConfigError("attention channels must be divisible by the head count");
    norm_ = register_module("norm", group_norm(channels));
    q_ = register_module("q", torch::nn::Linear(torch::nn::LinearOptions(channels, channels).bias(false)));
    k_ = register_module("k", torch::nn::Linear(torch::nn::LinearOptions(context_dim, channels).bias(false)));
    v_ = register_module("v", torch::nn::Linear(torch::nn::LinearOptions(context_dim, channels).bias(false)));
    out_ = register_module("out", torch::nn::Linear(channels, channels));
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& context,
                                          const torch::Tensor& mask) {
    const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    const auto m = context.size(1);
    const auto d = c / heads_;
    auto tokens = norm_->forward(x).flatten(2).transpose(1, 2);  // [B,HW,C]
    auto q = q_->forward(tokens).view({b, h * w, heads_, d}).transpose(1, 2);
    auto k = k_->forward(context).view({b, m, heads_, d}).transpose(1, 2);
    auto v = v_->forward(context).view({b, m, heads_, d}).transpose(1, 2);
    auto scores = torch::matmul(q, k.transpose(2, 3)) / std::sqrt(double(d));
    scores = scores.masked_fill(mask.logical_not().view({b, 1, 1, m}), -std::numeric_limits<float>::infinity());
    auto attn = torch::softmax(scores, -1);
    auto out = torch::matmul(attn, v).transpose(1, 2).reshape({b, h * w, c});
    return x + out_->forward(out).transpose(1, 2).view({b, c, h, w});
}

NoisePredictorImpl::NoisePredictorImpl(PredictorConfig config) : config_(std::move(config)) {
    if (config_.channels.size() != 2) throw ConfigError("noise predictor needs two stage widths");
    const auto c0 = config_.channels[0], c1 = config_.channels[1];
    const auto td = config_.time_dim;
    const auto ctx = config_.text_dim + kVadChannels;
    text_ = register_module("text", TextEncoder(config_.vocab_size, config_.text_dim, config_.max_text));
    null_text_ = register_parameter("null_text", torch::randn({1, 1, ctx}) * 0.02);
    time1_ = register_module("time1", torch::nn::Linear(td, td));
    time2_ = register_module("time2", torch::nn::Linear(td, td));
    conv_in_ = register_module("conv_in", conv3(config_.latent_channels, c0));
    down_block1_ = register_module("down_block1", ResBlock(c0, c0, td));
    attn1_ = register_module("attn1", CrossAttention(c0, ctx, config_.heads));
    downsample_ = register_module("downsample", conv3(c0, c1, 2));
    down_block2_ = register_module("down_block2", ResBlock(c1, c1, td));
    attn2_ = register_module("attn2", CrossAttention(c1, ctx, config_.heads));
    mid_block_ = register_module("mid_block", ResBlock(c1, c1, td));
    upsample_conv_ = register_module("upsample_conv", conv3(c1, c0));
    up_block_ = register_module("up_block", ResBlock(2 * c0, c0, td));
    attn_up_ = register_module("attn_up", CrossAttention(c0, ctx, config_.heads));
    norm_out_ = register_module("norm_out", group_norm(c0));
    conv_out_ = register_module("conv_out", conv3(c0, config_.latent_channels));

    if (!config_.content_channels.empty()) {
        if (config_.content_channels.size() != 2 || config_.content_strides.size() != 2) {
            throw ConfigError("content taps need one channel count and stride per stage");
        }
        const std::int64_t stage_channels[2] = {c0, c1};
        for (std::size_t i = 0; i < 2; ++i) {
            auto zero = torch::nn::Conv2d(torch::nn::Conv2dOptions(stage_channels[i], stage_channels[i], 1));
            torch::NoGradGuard no_grad;
            zero->weight.zero_();
            zero->bias.zero_();
            torch::nn::Sequential proj(
                torch::nn::Conv2d(torch::nn::Conv2dOptions(config_.content_channels[i], stage_channels[i], 3)
                                      .stride(config_.content_strides[i])
                                      .padding(1)),
                torch::nn::SiLU(), zero);
            projections_.push_back(register_module("content_proj" + std::to_string(i + 1), proj));
        }
    }
}

Conditioning NoisePredictorImpl::condition(const TextBatch& text) { return {text_->augmented(text), text.mask}; }

Conditioning NoisePredictorImpl::null_condition(std::int64_t batch, std::int64_t length) {
    auto tokens = torch::zeros({batch, length, null_text_.size(2)}, null_text_.options());
    tokens = torch::cat({null_text_.expand({batch, 1, null_text_.size(2)}), tokens.slice(1, 1)}, 1);
    auto mask = torch::zeros({batch, length}, torch::kBool);
    mask.select(1, 0).fill_(true);
    return {tokens, mask};
}

Conditioning NoisePredictorImpl::drop_condition(const Conditioning& cond, const torch::Tensor& keep) {
    const auto null = null_condition(cond.tokens.size(0), cond.tokens.size(1));
    const auto k = keep.to(torch::kBool);
    return {torch::where(k.view({-1, 1, 1}), cond.tokens, null.tokens), torch::where(k.view({-1, 1}), cond.mask, null.mask)};
}

torch::Tensor NoisePredictorImpl::time_embedding(const torch::Tensor& t) {
    const auto half = config_.time_dim / 2;
    const auto freqs =
        torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat) / double(half)).to(null_text_.scalar_type());
    const auto args = t.to(null_text_.scalar_type()).unsqueeze(1) * freqs.unsqueeze(0);
    const auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
    return time2_->forward(torch::silu(time1_->forward(emb)));
}

torch::Tensor NoisePredictorImpl::forward(const torch::Tensor& zt, const torch::Tensor& t, const Conditioning& cond,
                                          const std::vector<torch::Tensor>& content) {
    if (zt.dim() != 4 || zt.size(1) != config_.latent_channels) throw ShapeError("latent must be [B,c,h,w]");
    if (zt.size(2) % 2 != 0 || zt.size(3) % 2 != 0) throw ShapeError("latent height and width must be even");
    if (t.dim() != 1 || t.size(0) != zt.size(0)) throw ShapeError("timestep tensor must be [B]");
    const bool inject = config_.content_injection && !projections_.empty();
    if (inject && content.size() != projections_.size()) throw ShapeError("one encoder feature map per stage is required");

    const auto temb = time_embedding(t);
    auto h = conv_in_->forward(zt);
    h = down_block1_->forward(h, temb);
    if (inject) h = content_inject(h, content[0], projections_[0]);
    h = attn1_->forward(h, cond.tokens, cond.mask);
    const auto skip = h;
    h = downsample_->forward(h);
    h = down_block2_->forward(h, temb);
    if (inject) h = content_inject(h, content[1], projections_[1]);
    h = attn2_->forward(h, cond.tokens, cond.mask);
    h = mid_block_->forward(h, temb);
    h = upsample_conv_->forward(upsample2(h));
    h = up_block_->forward(torch::cat({h, skip}, 1), temb);
    h = attn_up_->forward(h, cond.tokens, cond.mask);
    return conv_out_->forward(torch::silu(norm_out_->forward(h)));
}

torch::Tensor guidance_combine(const torch::Tensor& eps_cond, const torch::Tensor& eps_uncond, double scale) {
    if (scale < 0) throw InvalidArgument("guidance scale must be non-negative");
    if (scale == 1.0) return eps_cond;
    if (scale == 0.0) return eps_uncond;
    return eps_uncond + scale * (eps_cond - eps_uncond);
}

torch::Tensor guided_noise(NoisePredictor& predictor, const torch::Tensor& zt, std::int64_t t, const TextBatch& text,
                           const std::vector<torch::Tensor>& content, double scale) {
    if (scale < 0) throw InvalidArgument("guidance scale must be non-negative");
    const auto steps = torch::full({zt.size(0)}, t, torch::kLong);
    torch::Tensor cond_eps, uncond_eps;
    if (scale != 0.0) cond_eps = predictor->forward(zt, steps, predictor->condition(text), content);
    if (scale != 1.0) uncond_eps = predictor->forward(zt, steps, predictor->null_condition(zt.size(0)), content);
    if (scale == 1.0) return cond_eps;
    if (scale == 0.0) return uncond_eps;
    return guidance_combine(cond_eps, uncond_eps, scale);
}

torch::Tensor denoise_step(NoisePredictor& predictor, const torch::Tensor& zt, std::int64_t t, const TextBatch& text,
                           const std::vector<torch::Tensor>& content, const DiffusionSchedule& schedule,
                           double guidance, torch::Generator* rng) {
    if (t < 1 || t > schedule.steps()) throw InvalidArgument("denoising needs 1 <= t <= T");
    return reverse_update(zt, t, guided_noise(predictor, zt, t, text, content, guidance), schedule, rng);
}

torch::Tensor sample(Autoencoder& autoencoder, NoisePredictor& predictor, const torch::Tensor& content_images,
                     const TextBatch& text, const DiffusionSchedule& schedule, const SampleOptions& options) {
    if (!(options.start_fraction > 0 && options.start_fraction <= 1)) throw InvalidArgument("start fraction must lie in (0, 1]");
    const bool single = content_images.dim() == 3;
    const auto images = single ? content_images.unsqueeze(0) : content_images;
    if (text.size() != images.size(0)) throw ShapeError("one text per content image is required");
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(options.seed);
    const auto features = autoencoder->encode_features(images);
    const auto t_start = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(options.start_fraction * double(schedule.steps()))));
    auto z = forward_diffuse(features.latent, t_start, torch::randn(features.latent.sizes(), gen, features.latent.options()),
                             schedule);
    for (std::int64_t t = t_start; t >= 1; --t) {
        z = denoise_step(predictor, z, t, text, features.stages, schedule, options.guidance, &gen);
    }
    auto out = autoencoder->decode(z);
    return single ? out.squeeze(0) : out;
}

}  // namespace aif
