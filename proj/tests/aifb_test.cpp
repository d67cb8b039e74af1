#include "test_doctest.hpp"

#include "aif/aifb.hpp"
#include "aif/errors.hpp"
#include "test_support.hpp"

using namespace aif;
using aif::testing::seeded;

namespace {

AifbConfig tiny_config() {
    AifbConfig c;
    c.patch = 8;
    c.layers = 2;
    c.width = 32;
    c.heads = 4;
    c.resolution = 32;
    c.max_text = 12;
    c.text_dim = 8;
    c.vocab_size = 20;
    return c;
}

TextBatch text_batch(std::int64_t batch, std::int64_t length, std::int64_t real, std::uint64_t seed = 1) {
    auto g = seeded(seed);
    TextBatch t;
    t.ids = torch::randint(2, 20, {batch, length}, g, torch::kLong);
    t.vad = torch::rand({batch, length, 3}, g);
    t.mask = torch::arange(length).lt(real).unsqueeze(0).expand({batch, length}).contiguous();
    t.ids.masked_fill_(t.mask.logical_not(), Vocabulary::kPad);
    t.vad.masked_fill_(t.mask.logical_not().unsqueeze(2), 0.5);
    return t;
}

}  // namespace

TEST_CASE("config validation") {
    auto c = tiny_config();
    CHECK_NOTHROW(c.validate());
    c.width = 30;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.resolution = 36;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.patch = 6;
    c.resolution = 36;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("modal type embeddings are two distinct parameters") {
    torch::manual_seed(0);
    ModalTypeEmbedding m(16);
    CHECK(m->parameters().size() == 2);
    CHECK_FALSE(torch::equal(m->image_type, m->text_type));
}

TEST_CASE("patch encoding counts tokens and follows patch order") {
    torch::manual_seed(1);
    auto c = tiny_config();
    c.resolution = 64;
    AifbGenerator g(c);
    auto gen = seeded(2);
    const auto img = torch::rand({1, 3, 64, 64}, gen);
    torch::NoGradGuard no_grad;
    CHECK(g->encode_image_patches(img).sizes() == torch::IntArrayRef{1, 64, 32});
    CHECK(torch::equal(g->encode_image_patches(img), g->encode_image_patches(img)));
    CHECK_THROWS_AS(g->encode_image_patches(torch::rand({1, 3, 32, 32})), ShapeError);

    c.position_encoding = false;
    torch::manual_seed(1);
    AifbGenerator plain(c);
    // Swap patches (0,0) and (2,5) and expect the tokens to swap likewise.
    auto swapped = img.clone();
    auto a = img.index({torch::indexing::Slice(), torch::indexing::Slice(), torch::indexing::Slice(0, 8),
                        torch::indexing::Slice(0, 8)});
    auto b = img.index({torch::indexing::Slice(), torch::indexing::Slice(), torch::indexing::Slice(16, 24),
                        torch::indexing::Slice(40, 48)});
    swapped.index_put_({torch::indexing::Slice(), torch::indexing::Slice(), torch::indexing::Slice(0, 8),
                        torch::indexing::Slice(0, 8)},
                       b);
    swapped.index_put_({torch::indexing::Slice(), torch::indexing::Slice(), torch::indexing::Slice(16, 24),
                        torch::indexing::Slice(40, 48)},
                       a);
    const auto t0 = plain->encode_image_patches(img);
    const auto t1 = plain->encode_image_patches(swapped);
    const std::int64_t j = 2 * 8 + 5;
    CHECK(torch::allclose(t1[0][0], t0[0][j]));
    CHECK(torch::allclose(t1[0][j], t0[0][0]));
    CHECK(torch::equal(t1[0][1], t0[0][1]));
}

TEST_CASE("token fusion") {
    auto g = seeded(4);
    const auto img = torch::randn({2, 64, 16}, g);
    const auto txt = torch::randn({2, 12, 16}, g);
    const auto t0 = torch::randn({16}, g), t1 = torch::randn({16}, g);
    const auto z = fuse_tokens(img, txt, t0, t1);
    CHECK(z.sizes() == torch::IntArrayRef{2, 76, 16});
    CHECK(torch::equal(fuse_tokens(img, txt, torch::zeros({16}), torch::zeros({16})), torch::cat({img, txt}, 1)));
    CHECK(torch::allclose(z.slice(1, 0, 64), img + t0));
    CHECK_FALSE(torch::equal(fuse_tokens(img, txt, t1, t0), z));
    CHECK_THROWS_AS(fuse_tokens(img, torch::randn({2, 12, 8}), t0, t1), ShapeError);
}

TEST_CASE("transformer blocks") {
    torch::manual_seed(5);
    auto g = seeded(5);
    const auto z = torch::randn({2, 10, 32}, g);
    std::vector<TransformerBlock> none;
    CHECK(torch::equal(transformer_forward(z, none), z));

    std::vector<TransformerBlock> blocks{TransformerBlock(32, 4), TransformerBlock(32, 4)};
    auto mask = torch::ones({2, 10}, torch::kBool);
    mask[1].slice(0, 7).fill_(false);
    std::vector<torch::Tensor> attention;
    torch::NoGradGuard no_grad;
    const auto out = transformer_forward(z, blocks, mask, &attention);
    CHECK(out.sizes() == z.sizes());
    REQUIRE(attention.size() == 2);
    for (const auto& a : attention) {
        CHECK(a.sizes() == torch::IntArrayRef{2, 4, 10, 10});
        CHECK((a.sum(-1) - 1).abs().max().item<double>() < 1e-6);
        CHECK(a[1].slice(2, 7).abs().max().item<double>() == 0.0);
    }
}

TEST_CASE("generator forward: shape, range, purity and padded text") {
    torch::manual_seed(6);
    AifbGenerator g(tiny_config());
    auto gen = seeded(6);
    const auto content = torch::rand({2, 3, 32, 32}, gen);
    const auto text = text_batch(2, 6, 4);
    torch::NoGradGuard no_grad;
    const auto out = g->forward(content, text);
    CHECK(out.sizes() == content.sizes());
    CHECK(out.min().item<float>() >= 0.0f);
    CHECK(out.max().item<float>() <= 1.0f);
    CHECK(torch::equal(out, g->forward(content, text)));

    // Extra padding never changes the output shape, and masked tokens are ignored.
    TextBatch longer;
    longer.ids = torch::nn::functional::pad(text.ids, torch::nn::functional::PadFuncOptions({0, 6}));
    longer.vad = torch::cat({text.vad, torch::full({2, 6, 3}, 0.5)}, 1);
    longer.mask = torch::nn::functional::pad(text.mask, torch::nn::functional::PadFuncOptions({0, 6}));
    const auto out_long = g->forward(content, longer);
    CHECK(out_long.sizes() == out.sizes());
    CHECK(torch::allclose(out_long, out, 1e-5, 1e-6));
    CHECK_THROWS_AS(g->forward(content, text_batch(3, 6, 4)), ShapeError);
}

TEST_CASE("every generator parameter receives gradient") {
    torch::manual_seed(7);
    AifbGenerator g(tiny_config());
    auto gen = seeded(7);
    const auto content = torch::rand({2, 3, 32, 32}, gen);
    const auto text = text_batch(2, 6, 6);
    g->forward(content, text).pow(2).mean().backward();
    for (const auto& p : g->named_parameters()) {
        INFO(p.key());
        REQUIRE(p.value().grad().defined());
        if (p.key().find("embedding") != std::string::npos) continue;  // rows of unused words stay zero
        CHECK(p.value().grad().norm().item<double>() > 0.0);
    }
}

TEST_CASE("discriminator heads") {
    torch::manual_seed(8);
    AifbDiscriminator d(11);
    auto gen = seeded(8);
    const auto x = torch::rand({3, 3, 32, 32}, gen);
    const auto scores = d->forward(x, torch::randn({3, 11}, gen));
    CHECK(scores.uncond.sizes() == torch::IntArrayRef{3});
    CHECK(scores.cond.sizes() == torch::IntArrayRef{3});
    CHECK(scores.uncond.gt(0).all().item<bool>());
    CHECK(scores.cond.lt(1).all().item<bool>());
    CHECK_THROWS_AS(d->forward(x, torch::randn({2, 11})), ShapeError);
}
