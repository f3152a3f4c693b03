#include <filesystem>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "longiseg/model.hpp"

using namespace longiseg;
using namespace longiseg::model;

namespace {

Tensor<float> random_input(int n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor<float> x(n, kInputChannels, h, w);
  for (auto& v : x.storage()) v = u(rng);
  return x;
}

BackboneConfig two_level() {
  BackboneConfig c = BackboneConfig::preset("fc-densenet-tiny");
  c.architecture = "two-level";
  c.down_layers = {1, 2};
  c.bottleneck_layers = 1;
  c.up_layers = {2, 1};
  c.growth_rate = 2;
  return c;
}

}  // namespace

TEST_CASE("presets validate and FC-DenseNet56 has the expected depth") {
  for (auto name : {"fc-densenet56", "fc-densenet-desk", "fc-densenet-tiny"}) {
    auto c = BackboneConfig::preset(name);
    CHECK_NOTHROW(c.validate());
  }
  auto c = BackboneConfig::preset("fc-densenet56");
  CHECK(c.stride_multiple() == 32);
  // 5 down blocks + bottleneck + 5 up blocks of 4 layers, 5 transition-down convs,
  // first conv and head: 44 + 5 + 2 = 51 weight layers, plus 5 transposed convs = 56.
  DenseNet<float> net(c);
  int convs = 0;
  for (const auto& p : net.parameters())
    if (p.shape.size() == 4) ++convs;
  CHECK(convs == 56);
  CHECK_THROWS_AS(BackboneConfig::preset("resnet"), std::invalid_argument);
  auto bad = c;
  bad.in_channels = 7;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("config survives JSON") {
  auto c = two_level();
  c.seed = 17;
  nlohmann::json j = c;
  auto back = j.get<BackboneConfig>();
  CHECK(back.down_layers == c.down_layers);
  CHECK(back.up_layers == c.up_layers);
  CHECK(back.growth_rate == c.growth_rate);
  CHECK(back.seed == 17);
}

TEST_CASE("outputs are probabilities with the input's spatial size") {
  DenseNet<float> net(BackboneConfig::preset("fc-densenet-desk"));
  for (auto [h, w] : {std::pair{16, 16}, std::pair{13, 21}, std::pair{150, 9}}) {
    auto x = random_input(2, h, w, 3);
    auto p = net.infer(x);
    REQUIRE(p.n() == 2);
    REQUIRE(p.c() == 3);
    REQUIRE(p.h() == h);
    REQUIRE(p.w() == w);
    for (int b = 0; b < 2; ++b)
      for (int y = 0; y < h; ++y)
        for (int z = 0; z < w; ++z) {
          float s = 0;
          for (int c = 0; c < 3; ++c) {
            const float v = p.at(b, c, y, z);
            CHECK((v >= 0.0f && v <= 1.0f));
            s += v;
          }
          CHECK(std::abs(s - 1.0f) < 1e-5f);
        }
  }
}

TEST_CASE("wrong channel count is rejected") {
  DenseNet<float> net(BackboneConfig::preset("fc-densenet-tiny"));
  Tensor<float> x(1, 7, 8, 8);
  CHECK_THROWS(net.infer(x));
}

TEST_CASE("zero-initialised head gives uniform probabilities") {
  auto c = BackboneConfig::preset("fc-densenet-desk");
  CHECK(c.zero_init_head);
  DenseNet<float> net(c);
  auto p = net.infer(random_input(1, 24, 24, 5));
  for (float v : p.storage()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("inference is deterministic and batch order permutes outputs") {
  auto c = BackboneConfig::preset("fc-densenet-desk");
  c.seed = 9;
  DenseNet<float> a(c), b(c);
  CHECK(a.digest() == b.digest());
  auto x = random_input(3, 16, 16, 6);
  auto p1 = a.infer(x);
  CHECK(p1 == a.infer(x));
  CHECK(p1 == b.infer(x));

  Tensor<float> swapped(3, kInputChannels, 16, 16);
  const std::size_t item = static_cast<std::size_t>(kInputChannels) * 256;
  const int order[3] = {2, 0, 1};
  for (int i = 0; i < 3; ++i) std::copy_n(x.data() + order[i] * item, item, swapped.data() + i * item);
  auto p2 = a.infer(swapped);
  const std::size_t out_item = 3 * 256;
  for (int i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < out_item; ++k) {
      CHECK(std::abs(p2.storage()[i * out_item + k] - p1.storage()[order[i] * out_item + k]) < 1e-6f);
    }
  }
}

TEST_CASE("mse loss matches hand-evaluated values") {
  std::vector<LabelImage> gt;
  gt.emplace_back(std::array<int, 2>{2, 3});
  gt[0](0, 1) = 1;
  gt[0](1, 2) = 2;
  Tensor<double> uniform(1, 3, 2, 3, 1.0 / 3.0);
  // per pixel: two classes at (1/3)^2 and one at (2/3)^2, averaged over 3 classes
  CHECK(mse_loss(uniform, std::span<const LabelImage>(gt)) == doctest::Approx(6.0 / 27.0).epsilon(1e-12));

  Tensor<double> onehot(1, 3, 2, 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) onehot.at(0, gt[0](y, x), y, x) = 1.0;
  CHECK(mse_loss(onehot, std::span<const LabelImage>(gt)) == 0.0);

  std::vector<LabelImage> wrong;
  wrong.emplace_back(std::array<int, 2>{3, 3});
  CHECK_THROWS_AS(mse_loss(uniform, std::span<const LabelImage>(wrong)), ShapeError);
}

TEST_CASE("gradient check: two-layer tiny backbone") {
  auto r = testing::gradcheck(BackboneConfig::preset("fc-densenet-tiny"), 2, 8, 11);
  INFO(r.worst);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("gradient check: transitions, skips and odd-size padding") {
  auto r = testing::gradcheck(two_level(), 2, 8, 12);
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-3);
  auto padded = testing::gradcheck(two_level(), 1, 6, 13);
  INFO(padded.worst);
  CHECK(padded.max_rel_error < 1e-3);
}

TEST_CASE("training reduces the loss on a fixed batch") {
  auto c = BackboneConfig::preset("fc-densenet-desk");
  DenseNet<float> net(c);
  Adam<float> opt(AdamConfig{1e-3});
  auto x = random_input(2, 16, 16, 21);
  std::vector<LabelImage> gt;
  for (int b = 0; b < 2; ++b) {
    LabelImage g({16, 16});
    for (int y = 4; y < 12; ++y)
      for (int z = 4; z < 12; ++z) g(y, z) = static_cast<std::uint8_t>(1 + b);
    gt.push_back(g);
  }
  const float first = training_step(net, x, std::span<const LabelImage>(gt), opt);
  float last = first;
  for (int i = 0; i < 30; ++i) last = training_step(net, x, std::span<const LabelImage>(gt), opt);
  CHECK(opt.steps() == 31);
  CHECK(last < 0.5f * first);
}

TEST_CASE("non-finite loss aborts before the update") {
  DenseNet<float> net(BackboneConfig::preset("fc-densenet-tiny"));
  Adam<float> opt;
  auto x = random_input(1, 8, 8, 1);
  x.storage()[5] = std::numeric_limits<float>::quiet_NaN();
  std::vector<LabelImage> gt{LabelImage({8, 8})};
  const auto before = net.parameters();
  CHECK_THROWS_AS(training_step(net, x, std::span<const LabelImage>(gt), opt), NonFiniteLoss);
  for (std::size_t i = 0; i < before.size(); ++i)
    if (before[i].trainable) CHECK(before[i].value == net.parameters()[i].value);
  CHECK(opt.steps() == 0);
}

TEST_CASE("Adam with AMSGrad follows the bias-corrected update") {
  std::vector<Parameter<double>> params{{"p", {2}, {1.0, -2.0}, {0.5, -0.25}, true}};
  Adam<double> opt(AdamConfig{0.1});
  opt.step(params);
  // first step: m_hat = g, v_hat = g^2, so the update is lr * sign(g) up to eps
  CHECK(params[0].value[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(params[0].value[1] == doctest::Approx(-1.9).epsilon(1e-6));
  params[0].grad = {0.0, 0.0};
  opt.step(params);
  // m decays by beta1, v by beta2; vmax keeps the first step's v
  const double m = 0.9 * 0.1 * 0.5, v = 0.001 * 0.25;
  const double first = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
  const double expected = first - 0.1 * (m / (1 - 0.81)) / (std::sqrt(v) / std::sqrt(1 - 0.999 * 0.999) + 1e-8);
  CHECK(params[0].value[0] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("checkpoint round trip") {
  auto c = two_level();
  c.seed = 4;
  DenseNet<float> net(c);
  Adam<float> opt;
  auto x = random_input(1, 8, 8, 2);
  std::vector<LabelImage> gt{LabelImage({8, 8}, 1)};
  training_step(net, x, std::span<const LabelImage>(gt), opt);

  const auto path = std::filesystem::temp_directory_path() / "longiseg_ckpt_test.bin";
  save_checkpoint(path, net, CheckpointInfo{3, 0.75, {{"scheme", "proposed"}}});
  auto loaded = load_checkpoint(path);
  CHECK(loaded.info.epoch == 3);
  CHECK(loaded.info.validation_metric == 0.75);
  CHECK(loaded.info.extra.at("scheme") == "proposed");
  CHECK(loaded.net.digest() == net.digest());
  CHECK(loaded.net.infer(x) == net.infer(x));

  std::filesystem::resize_file(path, 40);
  CHECK_THROWS(load_checkpoint(path));
  std::filesystem::remove(path);
}

TEST_CASE("forward cost of FC-DenseNet56") {
  DenseNet<float> net(BackboneConfig::preset("fc-densenet56"));
  const double macs = net.forward_macs(150, 150);
  CHECK(macs > 1e9);
  CHECK(macs < 1e10);
}
