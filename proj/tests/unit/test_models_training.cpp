#include "torch_doctest.hpp"

#include <cmath>
#include <filesystem>

#include "latsep/attacks.hpp"
#include "latsep/datasets.hpp"
#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/nn/training.hpp"

using namespace latsep;
using namespace latsep::nn;
namespace fs = std::filesystem;

namespace {

DatasetSplits small_synthetic(std::size_t train_size = 300, std::uint64_t seed = 5) {
  SyntheticOptions o;
  o.train_size = train_size;
  o.test_size = 200;
  return make_synthetic(o, seed);
}

TrainConfig quick_config(int epochs = 2) {
  TrainConfig c = desk_train_config();
  c.epochs = epochs;
  c.decay_epochs = {};
  c.lr = 0.05;
  c.batch_size = 32;
  c.augmentation = false;
  c.seed = 3;
  return c;
}

/// Head that ignores its input and always prefers `target`.
void make_constant(Network& net, int target) {
  torch::NoGradGuard g;
  for (auto& p : net->named_parameters()) {
    if (p.key() == "head.weight") p.value().zero_();
    if (p.key() == "head.bias") {
      p.value().zero_();
      p.value()[target].fill_(50.0);
    }
  }
}

}  // namespace

TEST_CASE("latent widths and logits") {
  seed_torch(1);
  const ImageShape s32{32, 32, 3};
  for (auto [arch, dim] : {std::pair{Architecture::resnet20, 64}, std::pair{Architecture::vgg16, 512},
                           std::pair{Architecture::mobilenetv2, 1280}}) {
    auto net = make_network(arch, 10, s32);
    net->eval();
    const auto x = torch::rand({2, 3, 32, 32});
    CHECK((net->features(x).sizes() == std::vector<int64_t>{2, dim}));
    CHECK((net->forward(x).sizes() == std::vector<int64_t>{2, 10}));
  }
  auto small = make_network(Architecture::vgg16, 10, ImageShape{16, 16, 3});
  small->eval();
  CHECK(small->features(torch::rand({1, 3, 16, 16})).size(1) == 512);
  CHECK_THROWS_AS(make_network(Architecture::resnet20, 1, s32), InvalidInput);
}

TEST_CASE("duplicate inputs give identical latent rows") {
  seed_torch(2);
  auto data = small_synthetic(20).train;
  data.push_back(std::vector<float>(data.image(3).begin(), data.image(3).end()), data.label(3));
  auto net = make_network(Architecture::resnet20, 10, data.shape());
  const Matrix z = extract_latents(net, data);
  CHECK(z.rows() == static_cast<Eigen::Index>(data.size()));
  CHECK(z.cols() == 64);
  CHECK(z.row(3) == z.row(static_cast<Eigen::Index>(data.size() - 1)));
}

TEST_CASE("constant predictor: ASR 1 and clean accuracy equals the target prior") {
  seed_torch(3);
  const auto ds = small_synthetic();
  auto net = make_network(Architecture::resnet20, 10, ds.test.shape());
  make_constant(net, 4);
  const auto trig = single_trigger_fn(make_builtin_trigger("badnet_patch", ds.test.shape()), 1.0);
  const auto m = evaluate(net, ds.test, &trig, 4);
  const double prior = static_cast<double>(class_counts(ds.test)[4]) / static_cast<double>(ds.test.size());
  CHECK(m.asr == 1.0);
  CHECK(m.clean_accuracy == doctest::Approx(prior).epsilon(1e-12));
  CHECK(m.asr_samples == ds.test.size() - class_counts(ds.test)[4]);
  CHECK(!evaluate(net, ds.test, nullptr, 4).asr);
}

TEST_CASE("untriggered pass-through ASR equals misclassification into the target") {
  seed_torch(4);
  const auto ds = small_synthetic();
  auto net = make_network(Architecture::resnet20, 10, ds.test.shape());
  const auto trigger = make_builtin_trigger("blend", ds.test.shape());
  const std::vector<double> opacities{0.0, trigger.train_opacity};
  const auto curve = asr_opacity_sweep(net, ds.test, trigger, opacities, 2);
  const auto pred = predict(net, ds.test);
  std::size_t into = 0, n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (ds.test.label(i) == 2) continue;
    ++n;
    into += pred[i] == 2;
  }
  CHECK(curve[0].asr == doctest::Approx(static_cast<double>(into) / static_cast<double>(n)).epsilon(1e-12));
  const auto fn = single_trigger_fn(trigger, trigger.train_opacity);
  CHECK(curve[1].asr == *evaluate(net, ds.test, &fn, 2).asr);
}

TEST_CASE("training is deterministic and learns the synthetic task") {
  const auto ds = small_synthetic(600);
  const auto cfg = quick_config(4);
  auto a = train(ds.train, 10, cfg, "digest-a");
  auto b = train(ds.train, 10, cfg, "digest-a");
  CHECK(serialize_weights(a.model) == serialize_weights(b.model));
  CHECK(a.metrics.at("train_loss") == b.metrics.at("train_loss"));
  const auto m = evaluate(a.model, ds.test, nullptr, 0);
  CHECK(m.clean_accuracy > 0.3);
  auto c_cfg = cfg;
  c_cfg.seed = 4;
  auto c = train(ds.train, 10, c_cfg, "digest-a");
  CHECK(serialize_weights(a.model) != serialize_weights(c.model));
}

TEST_CASE("augmentation keeps shapes and pixel ranges") {
  const auto ds = small_synthetic(16);
  auto x = to_tensor(ds.train);
  const auto before = x.clone();
  Rng rng(1);
  augment_batch(x, "cifar", rng);
  CHECK(x.sizes() == before.sizes());
  CHECK(x.min().item<float>() >= 0.0f);
  CHECK(x.max().item<float>() <= before.max().item<float>());
  auto y = before.clone();
  augment_batch(y, "gtsrb", rng);
  CHECK(y.sizes() == before.sizes());
  CHECK_THROWS_AS(augment_batch(y, "mixup", rng), ConfigError);
  const auto t = to_tensor(ds.train, std::vector<std::size_t>{2});
  CHECK((t.sizes() == std::vector<int64_t>{1, 3, 16, 16}));
  CHECK(t[0][1][5][7].item<float>() == ds.train.image(2)[(5 * 16 + 7) * 3 + 1]);
}

TEST_CASE("divergence raises a training error with the epoch") {
  const auto ds = small_synthetic(64);
  auto cfg = quick_config(3);
  cfg.lr = 1e30;
  try {
    train(ds.train, 10, cfg, "x");
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() >= 0);
    CHECK(e.epoch() < 3);
  }
}

TEST_CASE("checkpoints round trip") {
  const auto ds = small_synthetic(64);
  auto ck = train(ds.train, 10, quick_config(1), "abc123");
  ck.metrics["clean_accuracy"] = 0.25;
  const auto path = fs::temp_directory_path() / "latsep_ckpt_test" / "m.ckpt";
  save_checkpoint(path, ck);
  auto back = load_checkpoint(path);
  CHECK(back.dataset_digest == "abc123");
  CHECK(back.config == ck.config);
  CHECK(back.metrics == ck.metrics);
  CHECK(back.model->architecture() == Architecture::resnet20);
  CHECK(predict(back.model, ds.test) == predict(ck.model, ds.test));
  CHECK(extract_latents(back.model, ds.test) == extract_latents(ck.model, ds.test));
  write_file_atomic(path, "garbage");
  CHECK_THROWS_AS(load_checkpoint(path), IntegrityError);
  fs::remove_all(path.parent_path());
}

TEST_CASE("clones are independent") {
  seed_torch(9);
  auto net = make_network(Architecture::resnet20, 10, ImageShape{16, 16, 3});
  auto copy = clone_network(net);
  CHECK(serialize_weights(copy) == serialize_weights(net));
  copy->channel_mask[0].fill_(0.0);
  CHECK(net->channel_mask[0].item<float>() == 1.0f);
}
