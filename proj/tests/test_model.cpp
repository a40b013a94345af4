#include <doctest.h>

#include <cmath>
#include <functional>

#include "skd/errors.hpp"
#include "skd/data.hpp"
#include "skd/losses.hpp"
#include "skd/model.hpp"
#include "skd/nn/resnet3d.hpp"
#include "skd/reference.hpp"
#include "skd/train.hpp"

using namespace skd;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (float& v : t.span()) v = static_cast<float>(scale * rng.normal());
  return t;
}

double dot(const Tensor& a, const Tensor& w) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * w[i];
  return s;
}

// Checks the input gradient and every parameter gradient of `layer` against
// central differences of L(x) = <layer(x), w> for a fixed random w.
void check_layer_gradients(nn::Layer& layer, Tensor x, std::uint64_t seed, double tol = 2e-2) {
  Tensor y = layer.forward(x, nn::Mode::train);
  const Tensor w = random_tensor(y.shape(), seed);
  nn::ParamList params;
  layer.collect("l", params);
  for (auto& p : params)
    if (p.grad) p.grad->fill(0.0f);
  const Tensor dx = layer.backward(w);

  auto loss = [&] { return dot(layer.forward(x, nn::Mode::train), w); };
  auto check = [&](Tensor& target, const Tensor& analytic, const std::string& what) {
    Rng pick(seed + 1);
    std::vector<double> num, ana;
    const std::int64_t probes = std::min<std::int64_t>(target.size(), 40);
    for (std::int64_t k = 0; k < probes; ++k) {
      const std::int64_t i = static_cast<std::int64_t>(pick.below(static_cast<std::uint64_t>(target.size())));
      const float keep = target[i];
      const float h = 1e-2f;
      target[i] = keep + h;
      const double up = loss();
      target[i] = keep - h;
      const double down = loss();
      target[i] = keep;
      num.push_back((up - down) / (2.0 * h));
      ana.push_back(analytic[i]);
    }
    INFO(what);
    CHECK(reference::relative_error(num, ana) < tol);
  };
  check(x, dx, "input");
  for (auto& p : params)
    if (p.grad) check(*p.value, *p.grad, p.name);
}

}  // namespace

TEST_CASE("layer gradients match central differences") {
  SUBCASE("conv3d") {
    nn::Conv3d conv({3, 4, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, true});
    Rng rng(1);
    conv.init(rng);
    check_layer_gradients(conv, random_tensor({2, 3, 4, 6, 6}, 2), 3);
  }
  SUBCASE("conv3d asymmetric kernel") {
    nn::Conv3d conv({2, 3, {3, 4, 4}, {2, 4, 4}, {1, 0, 0}, false});
    Rng rng(4);
    conv.init(rng);
    check_layer_gradients(conv, random_tensor({2, 2, 5, 8, 8}, 5), 6);
  }
  SUBCASE("batchnorm") {
    nn::BatchNorm bn(3);
    Rng rng(7);
    bn.init(rng);
    check_layer_gradients(bn, random_tensor({4, 3, 2, 3, 3}, 8, 2.0), 9);
  }
  SUBCASE("batchnorm on rows") {
    nn::BatchNorm bn(5);
    Rng rng(10);
    bn.init(rng);
    check_layer_gradients(bn, random_tensor({6, 5}, 11), 12);
  }
  SUBCASE("linear") {
    nn::Linear lin(7, 3);
    Rng rng(13);
    lin.init(rng);
    check_layer_gradients(lin, random_tensor({4, 7}, 14), 15);
  }
  SUBCASE("relu") {
    nn::ReLU relu;
    check_layer_gradients(relu, random_tensor({3, 10}, 16), 17);
  }
  SUBCASE("maxpool") {
    nn::MaxPool3d pool({3, 3, 3}, {2, 2, 2}, {1, 1, 1});
    check_layer_gradients(pool, random_tensor({1, 2, 4, 6, 6}, 18), 19);
  }
  SUBCASE("global average pool") {
    nn::GlobalAvgPool pool;
    check_layer_gradients(pool, random_tensor({2, 3, 2, 2, 2}, 20), 21);
  }
  SUBCASE("zero-pad shortcut") {
    nn::ZeroPadShortcut sc(2, 4, 2);
    check_layer_gradients(sc, random_tensor({2, 2, 4, 4, 4}, 22), 23);
  }
}

TEST_CASE("linear layer matches a scalar dot-product oracle") {
  nn::Linear lin(6, 3);
  Rng rng(30);
  lin.init(rng);
  for (float& b : lin.bias().span()) b = static_cast<float>(rng.normal());
  const Tensor x = random_tensor({2, 6}, 31);
  const Tensor y = lin.forward(x, nn::Mode::eval);
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 3; ++o) {
      double s = lin.bias()[o];
      for (int i = 0; i < 6; ++i) s += static_cast<double>(lin.weight()[o * 6 + i]) * x[n * 6 + i];
      CHECK(y[n * 3 + o] == doctest::Approx(s).epsilon(1e-6));
    }
  lin.weight().fill(0.0f);
  lin.bias().fill(0.0f);
  const Tensor zero = lin.forward(x, nn::Mode::eval);
  for (float v : zero.span()) CHECK(v == 0.0f);
}

TEST_CASE("identity-weight heads pass representations through") {
  nn::Linear lin(4, 4);
  lin.weight().fill(0.0f);
  for (int i = 0; i < 4; ++i) lin.weight()[i * 4 + i] = 1.0f;
  const Tensor r = random_tensor({3, 4}, 32);
  CHECK(lin.forward(r, nn::Mode::eval) == r);
}

TEST_CASE("model spec defaults and validation") {
  const auto toy = ModelSpec::defaults(EncoderArch::toy3d, 4);
  CHECK(toy.repr_dim == 128);
  CHECK(toy.proj_dim == 128);
  CHECK(toy.pred_hidden == 32);
  const auto r50 = ModelSpec::defaults(EncoderArch::resnet3d_50, 101);
  CHECK(r50.repr_dim == 2048);
  CHECK(r50.proj_dim == 2048);
  CHECK(r50.pred_hidden == 512);
  CHECK(toy.pred_hidden * 4 == toy.proj_dim);
  CHECK(r50.pred_hidden * 4 == r50.proj_dim);
  CHECK_THROWS_AS(parse_encoder_arch("vgg"), InvalidInput);
  auto bad = toy;
  bad.pred_hidden = 128;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("toy3d forward shapes and parameter count") {
  SiameseModel m = build_model(ModelSpec::defaults(EncoderArch::toy3d, 4), 1);
  CHECK(m.parameter_count() == 318532);
  CHECK(m.parameter_count() < 2000000);
  const Tensor x = random_tensor({2, 3, 16, 112, 112}, 2);
  const auto out = m.forward(x, nn::Mode::eval, true);
  CHECK(out.r.shape() == Shape{2, 128});
  CHECK(out.p.shape() == Shape{2, 4});
  CHECK(out.z.shape() == Shape{2, 128});
  CHECK(out.v.shape() == Shape{2, 128});
  CHECK_THROWS_AS(m.encode(random_tensor({1, 2, 16, 112, 112}, 3), nn::Mode::eval), ShapeError);
  CHECK_THROWS_AS(m.classify(random_tensor({1, 64}, 3), nn::Mode::eval), ShapeError);
}

TEST_CASE("eval-mode batching and determinism") {
  SiameseModel m = build_model(ModelSpec::defaults(EncoderArch::toy3d, 4), 4);
  const Tensor x = random_tensor({3, 3, 16, 112, 112}, 5);
  const Tensor r = m.encode(x, nn::Mode::eval);
  CHECK(m.encode(x, nn::Mode::eval) == r);
  for (int i = 0; i < 3; ++i) {
    const Tensor ri = m.encode(x.slice_rows(i, i + 1), nn::Mode::eval);
    for (int d = 0; d < 128; ++d) CHECK(ri[d] == doctest::Approx(r[i * 128 + d]).epsilon(1e-5));
  }
}

TEST_CASE("siamese forward symmetry") {
  SiameseModel m = build_model(ModelSpec::defaults(EncoderArch::toy3d, 4), 6);
  const Tensor a = random_tensor({2, 3, 16, 112, 112}, 7), b = random_tensor({2, 3, 16, 112, 112}, 8);
  const auto same = m.siamese_forward(a, a, nn::Mode::eval);
  for (const auto& s : same) {
    CHECK(s.r1 == s.r2);
    CHECK(s.p1 == s.p2);
    CHECK(s.z1 == s.z2);
    CHECK(s.v1 == s.v2);
  }
  const auto ab = m.siamese_forward(a, b, nn::Mode::eval), ba = m.siamese_forward(b, a, nn::Mode::eval);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    CHECK(ab[i].p1 == ba[i].p2);
    CHECK(ab[i].p2 == ba[i].p1);
    CHECK(ab[i].v1 == ba[i].v2);
    CHECK(ab[i].z2 == ba[i].z1);
  }
}

TEST_CASE("predictor dead-ReLU case returns the final bias") {
  ModelSpec spec = ModelSpec::defaults(EncoderArch::toy3d, 4);
  SiameseModel m = build_model(spec, 9);
  for (auto& p : m.params()) {
    if (p.name == "predictor.fc1.weight" || p.name == "predictor.fc1.bias") p.value->fill(0.0f);
    if (p.name == "predictor.bn1.beta") p.value->fill(-1.0f);
    if (p.name == "predictor.fc2.bias") p.value->fill(0.0f);
  }
  const Tensor v = m.predict(random_tensor({3, 128}, 10), nn::Mode::eval);
  for (float x : v.span()) CHECK(x == 0.0f);
}

TEST_CASE("build_model determinism and canonical names") {
  const auto spec = ModelSpec::defaults(EncoderArch::toy3d, 4);
  SiameseModel a = build_model(spec, 11), b = build_model(spec, 11), c = build_model(spec, 12);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(*pa[i].value == *pb[i].value);
    any_diff |= !(*pa[i].value == *pc[i].value);
    const auto& n = pa[i].name;
    CHECK((n.starts_with("encoder.") || n.starts_with("fc.") || n.starts_with("projector.") ||
           n.starts_with("predictor.")));
  }
  CHECK(any_diff);
}

TEST_CASE("resnet3d-18 layer list follows the standard 3D ResNet-18") {
  SiameseModel m(ModelSpec::defaults(EncoderArch::resnet3d_18, 101));
  const auto layers = m.layer_list();
  auto has = [&](const std::string& s) { return std::find(layers.begin(), layers.end(), s) != layers.end(); };
  CHECK(has("encoder.conv1: Conv3d(3->64, k=7x7x7, s=1x2x2, p=3x3x3)"));
  CHECK(has("encoder.maxpool: MaxPool3d(k=3x3x3, s=2x2x2, p=1x1x1)"));
  const int widths[] = {64, 128, 256, 512};
  int blocks = 0;
  for (int s = 0; s < 4; ++s)
    for (int b = 0; b < 2; ++b) {
      const std::string base = "encoder.layer" + std::to_string(s + 1) + "." + std::to_string(b);
      CHECK(has(base + ": BasicBlock"));
      blocks += has(base + ": BasicBlock");
      const int in = (b == 0 && s > 0) ? widths[s - 1] : widths[s];
      const std::string stride = (b == 0 && s > 0) ? "2x2x2" : "1x1x1";
      CHECK(has(base + ".conv1: Conv3d(" + std::to_string(in) + "->" + std::to_string(widths[s]) +
                ", k=3x3x3, s=" + stride + ", p=1x1x1)"));
    }
  CHECK(blocks == 8);
  CHECK(has("encoder.avgpool: GlobalAvgPool"));
  CHECK(has("fc: Linear(512->101)"));
}

TEST_CASE("resnet encoders produce the declared widths") {
  for (auto arch : {EncoderArch::resnet3d_18, EncoderArch::resnet3d_50}) {
    SiameseModel m = build_model(ModelSpec::defaults(arch, 5), 13);
    const Tensor r = m.encode(random_tensor({1, 3, 8, 32, 32}, 14), nn::Mode::eval);
    CHECK(r.shape() == Shape{1, m.spec().repr_dim});
  }
}

TEST_CASE("one step of total_loss reaches every parameter group and moves the forward") {
  SiameseModel m = build_model(ModelSpec::defaults(EncoderArch::toy3d, 4), 15);
  const Tensor x1 = random_tensor({4, 3, 16, 112, 112}, 16), x2 = random_tensor({4, 3, 16, 112, 112}, 17);
  const auto before = m.siamese_forward(x1, x2, nn::Mode::eval);

  const auto fwd = m.forward(Tensor::concat_rows(x1, x2), nn::Mode::train, true);
  const auto branches = split_branches(fwd, 4);
  std::vector<LabeledBranches> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({branches[i], one_hot(i % 4, 4)});
  std::vector<losses::BranchGrads> g;
  losses::total_loss(batch, {}, &g);
  Tensor dp({8, 4}), dv({8, 128});
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 4; ++k) {
      dp[i * 4 + k] = static_cast<float>(g[i].p1[k]);
      dp[(4 + i) * 4 + k] = static_cast<float>(g[i].p2[k]);
    }
    for (int k = 0; k < 128; ++k) {
      dv[i * 128 + k] = static_cast<float>(g[i].v1[k]);
      dv[(4 + i) * 128 + k] = static_cast<float>(g[i].v2[k]);
    }
  }
  m.zero_grad();
  m.backward(dp, {}, dv);
  for (const char* group : {"encoder.", "fc.", "projector.", "predictor."}) {
    double n = 0.0;
    for (auto& p : m.params())
      if (p.grad && p.name.starts_with(group))
        for (float v : p.grad->span()) n += std::abs(v);
    INFO(group);
    CHECK(n > 0.0);
  }
  TrainConfig cfg;
  auto opt = init_optimizer(cfg);
  auto params = m.params();
  sgd_step(params, opt, cfg);
  const auto after = m.siamese_forward(x1, x2, nn::Mode::eval);
  CHECK(after[0].p1 != before[0].p1);
}
