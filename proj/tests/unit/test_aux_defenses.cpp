#include "torch_doctest.hpp"

#include <cmath>
#include <set>

#include "latsep/datasets.hpp"
#include "latsep/defense_stats.hpp"
#include "latsep/errors.hpp"
#include "latsep/metrics.hpp"
#include "latsep/nn/aux_defenses.hpp"

using namespace latsep;
using namespace latsep::nn;

namespace {

DatasetSplits small_synthetic(std::size_t train_size = 200) {
  SyntheticOptions o;
  o.train_size = train_size;
  o.test_size = 200;
  return make_synthetic(o, 17);
}

void set_head(Network& net, int favoured, double bias) {
  torch::NoGradGuard g;
  for (auto& p : net->named_parameters()) {
    if (p.key() == "head.weight") p.value().zero_();
    if (p.key() == "head.bias") {
      p.value().zero_();
      if (favoured >= 0) p.value()[favoured].fill_(bias);
    }
  }
}

TrainConfig quick_config() {
  TrainConfig c = desk_train_config();
  c.epochs = 2;
  c.decay_epochs = {};
  c.lr = 0.05;
  c.batch_size = 32;
  c.augmentation = false;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("STRIP entropy of uniform and one-hot predictors") {
  seed_torch(1);
  const auto ds = small_synthetic(40);
  auto net = make_network(Architecture::resnet20, 10, ds.train.shape());
  set_head(net, -1, 0.0);
  for (double h : strip_entropies(net, ds.train, ds.test, 8, 1)) CHECK(h == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  set_head(net, 3, 1e4);
  for (double h : strip_entropies(net, ds.train, ds.test, 8, 1)) CHECK(h == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(strip_entropies(net, ds.train, ImageSet(ds.train.shape(), 10), 8, 1), ConfigError);
  CHECK(strip_entropies(net, ds.train, ds.test, 8, 1).size() == ds.train.size());
}

TEST_CASE("STRIP filter sacrifice on calibration-distributed inputs stays near the FPR") {
  const auto ds = small_synthetic(600);
  auto ck = train(ds.train, 10, quick_config(), "d");
  StripOptions o;
  o.overlays = 8;
  o.seed = 5;
  // Calibration and clean test inputs are disjoint halves of the same split.
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < 600; ++i) (i % 2 ? b : a).push_back(i);
  const auto cal = ds.train.subset(a);
  const auto clean = ds.train.subset(b);
  const auto r = strip_filter(ck.model, cal, clean, clean, o);
  const double sigma = std::sqrt(0.1 * 0.9 / static_cast<double>(clean.size()));
  CHECK(std::abs(r.sacrifice_rate - 0.1) <= 3 * sigma + 1.0 / 300.0);
  CHECK(r.clean_rejected.size() == clean.size());

  const auto res = strip_cleanser(ck.model, clean, cal, o);
  CHECK(res.method == "strip_cleanse");
  CHECK(res.parameters.at("overlays") == 8);
  const double frac = static_cast<double>(res.suspected_indices.size()) / static_cast<double>(clean.size());
  CHECK(std::abs(frac - 0.1) <= 3 * sigma + 1.0 / 300.0);
}

TEST_CASE("neural cleanse on a constant predictor") {
  seed_torch(2);
  const auto ds = small_synthetic(40);
  auto net = make_network(Architecture::resnet20, 10, ds.train.shape());
  set_head(net, 6, 50.0);
  NeuralCleanseOptions o;
  o.epochs = 2;
  const auto before = serialize_weights(net);
  const auto r = neural_cleanse(net, ds.test.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}), o);
  CHECK(serialize_weights(net) == before);
  REQUIRE(r.triggers.size() == 10);
  CHECK(std::isfinite(r.mask_norms[6]));
  for (int k = 0; k < 10; ++k) {
    if (k != 6) CHECK(std::isinf(r.mask_norms[static_cast<std::size_t>(k)]));
  }
  CHECK(r.anomaly_indices == mad_anomaly_indices(r.mask_norms));
  CHECK((r.triggers[0].mask.sizes() == std::vector<int64_t>{1, 16, 16}));
  CHECK((r.triggers[0].pattern.sizes() == std::vector<int64_t>{3, 16, 16}));
  for (auto p : net->parameters()) CHECK(p.requires_grad());
}

TEST_CASE("zero-mask reversed trigger leaves inputs unchanged and unlearning copies the model") {
  const auto ds = small_synthetic(100);
  ReversedTrigger t;
  t.mask = torch::zeros({1, 16, 16});
  t.pattern = torch::rand({3, 16, 16});
  const auto x = to_tensor(ds.train);
  CHECK(torch::equal(apply_reversed(x, t), x));
  seed_torch(3);
  auto net = make_network(Architecture::resnet20, 10, ds.train.shape());
  const auto before = serialize_weights(net);
  UnlearnOptions uo;
  uo.batch_size = 32;
  auto out = nc_unlearn(net, t, ds.train, quick_config(), uo);
  CHECK(serialize_weights(net) == before);
  CHECK(serialize_weights(out) != before);
}

TEST_CASE("fine-pruning respects the accuracy bound") {
  const auto ds = small_synthetic(600);
  auto ck = train(ds.train, 10, quick_config(), "d");
  const auto r = fine_prune(ck.model, ds.test, 0.10);
  CHECK(r.probe_accuracy_after >= 0.9 * r.probe_accuracy_before);
  Network pruned = r.model;
  const auto m = evaluate(pruned, ds.test, nullptr, 0);
  CHECK(m.clean_accuracy == doctest::Approx(r.probe_accuracy_after).epsilon(1e-12));
  CHECK(r.pruned_channels.size() < 64);
  std::set<int> unique(r.pruned_channels.begin(), r.pruned_channels.end());
  CHECK(unique.size() == r.pruned_channels.size());
  CHECK(ck.model->channel_mask.sum().item<float>() == 64.0f);
  CHECK(r.model->channel_mask.sum().item<float>() == static_cast<float>(64 - r.pruned_channels.size()));
  CHECK_THROWS_AS(fine_prune(ck.model, ds.test, 1.5), ConfigError);
}

TEST_CASE("pruning an always-zero channel leaves predictions unchanged") {
  seed_torch(4);
  const auto ds = small_synthetic(40);
  auto net = make_network(Architecture::resnet20, 10, ds.train.shape());
  // A zero head column makes the channel irrelevant, as if it never fired.
  {
    torch::NoGradGuard g;
    for (auto& p : net->named_parameters())
      if (p.key() == "head.weight") p.value().select(1, 5).zero_();
  }
  const auto before = predict(net, ds.test);
  auto copy = clone_network(net);
  copy->channel_mask[5].fill_(0.0);
  CHECK(predict(copy, ds.test) == before);
}

TEST_CASE("ABL isolates exactly the configured count") {
  const auto ds = small_synthetic(120);
  PoisonPlan plan;
  for (std::size_t i = 0; i < 10; ++i) plan.entries.push_back({i * 3, Role::payload, "t", 0});
  AblOptions o;
  o.isolate = 12;
  o.isolation_epochs = 1;
  o.finetune_epochs = 1;
  o.finetune_decay_epochs = {};
  o.unlearn_epochs = 1;
  auto cfg = quick_config();
  const auto r = abl(ds.train, 10, &plan, cfg, o);
  CHECK(r.isolated.size() == 12);
  CHECK(std::is_sorted(r.isolated.begin(), r.isolated.end()));
  REQUIRE(r.isolation_precision);
  CHECK(*r.isolation_precision == isolation_precision(plan, r.isolated));
  o.isolate = 120;
  CHECK_THROWS_AS(abl(ds.train, 10, &plan, cfg, o), ConfigError);
}
