#include <doctest.h>

#include <cmath>

#include "hfr/gan.hpp"
#include "oracles.hpp"

using namespace hfr;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1,
                        double hi = 1) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

GeneratorConfig small_generator(std::size_t hw = 16) {
  GeneratorConfig g;
  g.in_hw = hw;
  g.widths = {8, 12, 16};
  g.dropout_blocks = 2;
  return g;
}

DiscriminatorConfig small_discriminator(std::size_t hw = 16) {
  DiscriminatorConfig d;
  d.in_hw = hw;
  d.widths = {8, 12};
  d.stride1_width = 16;
  return d;
}

FacePairSet toy_pairs(std::size_t count, std::size_t hw, Rng& rng) {
  FacePairSet data;
  for (std::size_t i = 0; i < count; ++i) {
    data.colors.push_back(random_tensor<float>({3, hw, hw}, rng, -0.5, 0.5));
    Tensor<float> d({1, hw, hw});
    // depth correlated with the first color channel keeps the task learnable
    for (std::size_t p = 0; p < hw * hw; ++p)
      d[p] = std::clamp(0.5f + 0.8f * data.colors.back()[p], 0.0f, 1.0f);
    data.depths.push_back(std::move(d));
  }
  return data;
}

}  // namespace

TEST_CASE("generator produces 128x128x1 in [0,1] at the published architecture") {
  GeneratorConfig cfg;  // 6 blocks, 64..512, 128 input
  cfg.width_scale = 0.0625;  // narrow for test speed; depths and shapes unchanged
  GeneratorNet<float> gen(cfg);
  Rng rng(1);
  gen.init(rng);
  Tensor<float> x = random_tensor<float>({1, 3, 128, 128}, rng);
  Tensor<float> y = gen.forward(x, false);
  CHECK(y.shape() == std::vector<std::size_t>{1, 1, 128, 128});
  for (auto v : y.vec()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("deterministic forward: identical inputs give bitwise-identical outputs") {
  GeneratorNet<float> gen(small_generator());
  Rng rng(2);
  gen.init(rng);
  Tensor<float> x = random_tensor<float>({2, 3, 16, 16}, rng);
  Tensor<float> y1 = gen.forward(x, false);
  Tensor<float> y2 = gen.forward(x, false);
  CHECK(y1.vec() == y2.vec());
}

TEST_CASE("stochastic forward draws dropout noise, deterministic under one seed") {
  GeneratorNet<float> gen(small_generator());
  Rng rng(3);
  gen.init(rng);
  Tensor<float> x = random_tensor<float>({1, 3, 16, 16}, rng);
  Rng za(10), zb(10), zc(11);
  Tensor<float> ya = gen.forward(x, true, &za);
  Tensor<float> yb = gen.forward(x, true, &zb);
  Tensor<float> yc = gen.forward(x, true, &zc);
  CHECK(ya.vec() == yb.vec());
  CHECK(ya.vec() != yc.vec());
  CHECK_THROWS_AS(gen.forward(x, true, nullptr), InvalidInputError);
}

TEST_CASE("zero-initialized final layer maps everything to 0.5") {
  GeneratorNet<float> gen(small_generator());
  Rng rng(4);
  gen.init(rng);
  nn::ParamRegistry<float> params;
  gen.register_params(params, "g");
  for (auto& p : params)
    if (p.name.find("dec2") != std::string::npos) p.value->fill(0.0f);  // final block
  Tensor<float> x = random_tensor<float>({1, 3, 16, 16}, rng);
  Tensor<float> y = gen.forward(x, false);
  for (auto v : y.vec()) CHECK(v == 0.5f);
}

TEST_CASE("generator rejects wrong input shapes") {
  GeneratorNet<float> gen(small_generator());
  Tensor<float> bad({1, 3, 8, 8});
  CHECK_THROWS_AS(gen.forward(bad, false), ShapeError);
  Tensor<float> bad_ch({1, 1, 16, 16});
  CHECK_THROWS_AS(gen.forward(bad_ch, false), ShapeError);
}

TEST_CASE("discriminator patch map size follows convolution arithmetic") {
  DiscriminatorConfig cfg;  // 3 stride-2 blocks + stride-1 + head on 128
  DiscriminatorNet<float> dis(cfg);
  std::size_t expected = oracle::conv_chain_out(
      128, {{{4, 2, 1}}, {{4, 2, 1}}, {{4, 2, 1}}, {{4, 1, 1}}, {{4, 1, 1}}});
  CHECK(dis.patch_hw() == expected);
  CHECK(expected == 14);
  CHECK(dis.patch_hw() > 1);  // patch-level, not image-level

  Rng rng(5);
  DiscriminatorConfig small = small_discriminator();
  DiscriminatorNet<float> d2(small);
  d2.init(rng);
  Tensor<float> depth = random_tensor<float>({1, 1, 16, 16}, rng);
  Tensor<float> cond = random_tensor<float>({1, 3, 16, 16}, rng);
  Tensor<float> logits = d2.forward(depth, cond, false);
  CHECK(logits.dim(2) == d2.patch_hw());
  CHECK(logits.dim(1) == 1);
}

TEST_CASE("patch receptive fields match the recurrence oracle") {
  // the published discriminator sees 70x70 patches on a 128 input
  CHECK(oracle::receptive_field({{4, 2}, {4, 2}, {4, 2}, {4, 1}, {4, 1}}) == 70);

  // empirical check on a smaller stack: two stride-2 blocks + stride-1 + head
  const std::vector<std::array<std::size_t, 3>> chain = {
      {4, 2, 1}, {4, 2, 1}, {4, 1, 1}, {4, 1, 1}};
  DiscriminatorConfig cfg;
  cfg.in_hw = 32;
  cfg.widths = {4, 8};
  cfg.stride1_width = 8;
  DiscriminatorNet<float> dis(cfg);
  Rng rng(6);
  dis.init(rng);

  Tensor<float> depth = random_tensor<float>({1, 1, 32, 32}, rng);
  Tensor<float> cond = random_tensor<float>({1, 3, 32, 32}, rng);
  Tensor<float> base = dis.forward(depth, cond, false);

  // flipping one input pixel may only change logits whose receptive range
  // covers it
  const long py = 21, px = 26;
  Tensor<float> poked = depth;
  poked.at4(0, 0, py, px) += 10.0f;
  Tensor<float> changed = dis.forward(poked, cond, false);
  std::size_t moved_count = 0;
  for (std::size_t oy = 0; oy < base.dim(2); ++oy)
    for (std::size_t ox = 0; ox < base.dim(3); ++ox) {
      bool moved = std::abs(base.at4(0, 0, oy, ox) - changed.at4(0, 0, oy, ox)) > 1e-7f;
      auto [ylo, yhi] = oracle::receptive_range(chain, static_cast<long>(oy));
      auto [xlo, xhi] = oracle::receptive_range(chain, static_cast<long>(ox));
      bool covers = py >= ylo && py <= yhi && px >= xlo && px <= xhi;
      if (moved) {
        CHECK(covers);
        ++moved_count;
      }
    }
  CHECK(moved_count > 0);
}

TEST_CASE("averaged probability is 0.5 on zero logits and lives in (0,1)") {
  Tensor<float> zeros({2, 1, 5, 5});
  CHECK(averaged_probability(zeros) == doctest::Approx(0.5));
  Rng rng(7);
  Tensor<float> logits = random_tensor<float>({2, 1, 5, 5}, rng, -8, 8);
  float p = averaged_probability(logits);
  CHECK(p > 0.0f);
  CHECK(p < 1.0f);
}

TEST_CASE("discriminator rejects mismatched shapes") {
  DiscriminatorNet<float> dis(small_discriminator());
  Tensor<float> depth({1, 1, 16, 16});
  Tensor<float> cond({1, 3, 8, 8});
  CHECK_THROWS_AS(dis.forward(depth, cond, false), ShapeError);
}

TEST_CASE("train step with learning rate zero leaves parameters bitwise unchanged") {
  Rng rng(8);
  GeneratorNet<float> gen(small_generator());
  DiscriminatorNet<float> dis(small_discriminator());
  gen.init(rng);
  dis.init(rng);
  GanTrainConfig cfg;
  cfg.lr = 0.0;
  cfg.l1_weight = 500.0;
  cfg.batch_size = 2;
  cfg.seed = 1;
  GanTrainer trainer(std::move(gen), std::move(dis), cfg);

  std::vector<Tensor<float>> before;
  for (auto& p : trainer.generator_params()) before.push_back(*p.value);
  for (auto& p : trainer.discriminator_params()) before.push_back(*p.value);

  FacePairSet data = toy_pairs(2, 16, rng);
  Tensor<float> colors({2, 3, 16, 16}), depths({2, 1, 16, 16});
  for (int i = 0; i < 2; ++i) {
    std::copy(data.colors[i].data(), data.colors[i].data() + data.colors[i].numel(),
              colors.data() + i * data.colors[i].numel());
    std::copy(data.depths[i].data(), data.depths[i].data() + data.depths[i].numel(),
              depths.data() + i * data.depths[i].numel());
  }
  trainer.train_step(colors, depths);

  std::size_t at = 0;
  for (auto& p : trainer.generator_params())
    CHECK(p.value->vec() == before[at++].vec());
  for (auto& p : trainer.discriminator_params())
    CHECK(p.value->vec() == before[at++].vec());
}

TEST_CASE("eta zero reduces the generator gradient to the adversarial part") {
  Rng rng(9);
  GeneratorNet<double> gen(small_generator());
  DiscriminatorNet<double> dis(small_discriminator());
  gen.init(rng);
  dis.init(rng);
  Tensor<double> cond = random_tensor<double>({1, 3, 16, 16}, rng);
  Tensor<double> target = random_tensor<double>({1, 1, 16, 16}, rng, 0, 1);

  nn::ParamRegistry<double> params;
  gen.register_params(params, "g");

  nn::zero_grads(params);
  gan_g_loss_and_grads(gen, dis, cond, target, 0.0, true, true, false, nullptr);
  std::vector<Tensor<double>> with_eta0;
  for (auto& p : params) with_eta0.push_back(*p.grad);

  nn::zero_grads(params);
  gan_g_loss_and_grads(gen, dis, cond, target, 123.0, true, false, false, nullptr);
  std::size_t at = 0;
  for (auto& p : params) {
    const Tensor<double>& a = with_eta0[at++];
    for (std::size_t i = 0; i < a.numel(); ++i)
      CHECK(a[i] == doctest::Approx((*p.grad)[i]).epsilon(1e-12));
  }
}

TEST_CASE("with a zero discriminator head the generator gradient is pure weighted L1") {
  Rng rng(10);
  GeneratorNet<double> gen(small_generator());
  DiscriminatorNet<double> dis(small_discriminator());
  gen.init(rng);
  dis.init(rng);
  // zero the final conv of D: adversarial gradient through it vanishes
  nn::ParamRegistry<double> d_params;
  dis.register_params(d_params, "d");
  for (auto& p : d_params)
    if (p.name.find("conv3") != std::string::npos) p.value->fill(0.0);

  Tensor<double> cond = random_tensor<double>({1, 3, 16, 16}, rng);
  Tensor<double> target = random_tensor<double>({1, 1, 16, 16}, rng, 0, 1);
  const double eta = 77.0;

  nn::ParamRegistry<double> g_params;
  gen.register_params(g_params, "g");

  nn::zero_grads(g_params);
  gan_g_loss_and_grads(gen, dis, cond, target, eta, true, true, false, nullptr);
  std::vector<Tensor<double>> joint;
  for (auto& p : g_params) joint.push_back(*p.grad);

  nn::zero_grads(g_params);
  gan_g_loss_and_grads(gen, dis, cond, target, eta, false, true, false, nullptr);
  std::size_t at = 0;
  for (auto& p : g_params) {
    const Tensor<double>& a = joint[at++];
    for (std::size_t i = 0; i < a.numel(); ++i)
      CHECK(a[i] == doctest::Approx((*p.grad)[i]).epsilon(1e-10));
  }
}

TEST_CASE("training reports all loss terms and they bolt together") {
  Rng rng(11);
  GeneratorNet<float> gen(small_generator());
  DiscriminatorNet<float> dis(small_discriminator());
  gen.init(rng);
  dis.init(rng);
  GanTrainConfig cfg;
  cfg.lr = 1e-4;
  cfg.l1_weight = 500.0;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 3;
  GanTrainer trainer(std::move(gen), std::move(dis), cfg);
  FacePairSet data = toy_pairs(8, 16, rng);
  auto history = trainer.train(data);
  REQUIRE(history.size() == 2);
  for (const auto& rep : history) {
    CHECK(rep.loss_g_l1 >= 0.0);
    CHECK(std::isfinite(rep.loss_d));
    CHECK(rep.loss_g_total ==
          doctest::Approx(rep.loss_g_adv + cfg.l1_weight * rep.loss_g_l1).epsilon(1e-9));
  }
}

TEST_CASE("non-finite loss raises a diverged error with diagnostics") {
  Rng rng(12);
  GeneratorNet<float> gen(small_generator());
  DiscriminatorNet<float> dis(small_discriminator());
  gen.init(rng);
  dis.init(rng);
  GanTrainConfig cfg;
  cfg.batch_size = 1;
  GanTrainer trainer(std::move(gen), std::move(dis), cfg);
  Tensor<float> colors({1, 3, 16, 16});
  Tensor<float> depths({1, 1, 16, 16});
  depths[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(trainer.train_step(colors, depths), TrainingDivergedError);
}

TEST_CASE("two identically seeded training runs produce identical parameters") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    GeneratorNet<float> gen(small_generator());
    DiscriminatorNet<float> dis(small_discriminator());
    gen.init(rng);
    dis.init(rng);
    GanTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 99;
    GanTrainer trainer(std::move(gen), std::move(dis), cfg);
    Rng data_rng(1234);
    FacePairSet data = toy_pairs(8, 16, data_rng);
    trainer.train(data);
    std::vector<float> flat;
    for (auto& p : trainer.generator_params())
      flat.insert(flat.end(), p.value->vec().begin(), p.value->vec().end());
    return flat;
  };
  CHECK(run(5) == run(5));
}

TEST_CASE("skip connections carry more information than the bottleneck") {
  // train a small model briefly so the claim is about a working network
  Rng rng(13);
  GeneratorNet<float> gen(small_generator());
  DiscriminatorNet<float> dis(small_discriminator());
  gen.init(rng);
  dis.init(rng);
  GanTrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.lr = 2e-4;
  cfg.seed = 7;
  GanTrainer trainer(std::move(gen), std::move(dis), cfg);
  Rng data_rng(55);
  FacePairSet data = toy_pairs(16, 16, data_rng);
  trainer.train(data);

  Tensor<float> x = random_tensor<float>({1, 3, 16, 16}, data_rng, -0.5, 0.5);
  Tensor<float> base = trainer.generator().forward(x, false);
  GeneratorAblation no_bottleneck;
  no_bottleneck.zero_bottleneck = true;
  Tensor<float> without_deep = trainer.generator().forward(x, false, nullptr, false, no_bottleneck);
  GeneratorAblation no_skips;
  no_skips.zero_skips = true;
  Tensor<float> without_skips = trainer.generator().forward(x, false, nullptr, false, no_skips);

  double delta_bottleneck = 0, delta_skips = 0;
  for (std::size_t i = 0; i < base.numel(); ++i) {
    delta_bottleneck += std::abs(double(base[i]) - double(without_deep[i]));
    delta_skips += std::abs(double(base[i]) - double(without_skips[i]));
  }
  CHECK(delta_skips > delta_bottleneck);
}

TEST_CASE("reconstruct batches agree with single forwards and preserve order") {
  Rng rng(14);
  GeneratorNet<float> gen(small_generator());
  gen.init(rng);
  std::vector<Tensor<float>> colors;
  for (int i = 0; i < 5; ++i)
    colors.push_back(random_tensor<float>({3, 16, 16}, rng, -0.5, 0.5));
  std::vector<const Tensor<float>*> ptrs;
  for (auto& c : colors) ptrs.push_back(&c);

  std::vector<Tensor<float>> batched = reconstruct(gen, ptrs, 2);
  REQUIRE(batched.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<const Tensor<float>*> one{ptrs[i]};
    std::vector<Tensor<float>> single = reconstruct(gen, one, 1);
    CHECK(single[0].vec() == batched[i].vec());
  }

  // permuting inputs permutes outputs identically
  std::vector<const Tensor<float>*> reversed(ptrs.rbegin(), ptrs.rend());
  std::vector<Tensor<float>> rev_out = reconstruct(gen, reversed, 2);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(rev_out[4 - i].vec() == batched[i].vec());
}

TEST_CASE("reconstruct warns about raw-looking inputs instead of failing") {
  Rng rng(15);
  GeneratorNet<float> gen(small_generator());
  gen.init(rng);
  std::vector<Tensor<float>> raw{random_tensor<float>({3, 16, 16}, rng, 0.0, 1.0)};
  raw[0][0] = 0.9f;
  std::vector<const Tensor<float>*> ptrs{&raw[0]};
  ReconstructReport report;
  reconstruct(gen, ptrs, 4, &report);
  CHECK(report.unnormalized_input_warning);

  std::vector<Tensor<float>> norm{random_tensor<float>({3, 16, 16}, rng, -0.4, 0.6)};
  norm[0][0] = -0.2f;
  std::vector<const Tensor<float>*> nptrs{&norm[0]};
  reconstruct(gen, nptrs, 4, &report);
  CHECK(!report.unnormalized_input_warning);
}
