#include "latsep/nn/training.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "latsep/config.hpp"
#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/log.hpp"

namespace latsep::nn {

namespace {

constexpr std::string_view kCheckpointMagic = "LATSEP-CHECKPOINT 1";

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::vector<std::size_t> chunk(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

}  // namespace

torch::Tensor to_tensor(const ImageSet& data, std::span<const std::size_t> indices) {
  const auto& s = data.shape();
  const std::size_t n = indices.empty() ? data.size() : indices.size();
  auto t = torch::empty({static_cast<long>(n), s.height, s.width, s.channels}, torch::kFloat32);
  float* dst = t.data_ptr<float>();
  for (std::size_t k = 0; k < n; ++k) {
    const auto img = data.image(indices.empty() ? k : indices[k]);
    std::copy(img.begin(), img.end(), dst + k * s.size());
  }
  return t.permute({0, 3, 1, 2}).contiguous();
}

torch::Tensor label_tensor(const ImageSet& data, std::span<const std::size_t> indices) {
  const std::size_t n = indices.empty() ? data.size() : indices.size();
  auto t = torch::empty({static_cast<long>(n)}, torch::kInt64);
  auto* dst = t.data_ptr<int64_t>();
  for (std::size_t k = 0; k < n; ++k) dst[k] = data.label(indices.empty() ? k : indices[k]);
  return t;
}

void augment_batch(torch::Tensor& batch, const std::string& recipe, Rng& rng) {
  const long n = batch.size(0), h = batch.size(2), w = batch.size(3);
  if (recipe == "cifar") {
    const long pad = std::max<long>(1, h / 8);
    auto padded = torch::constant_pad_nd(batch, {pad, pad, pad, pad}, 0.0);
    for (long i = 0; i < n; ++i) {
      const long dy = static_cast<long>(rng.uniform_index(2 * pad + 1));
      const long dx = static_cast<long>(rng.uniform_index(2 * pad + 1));
      auto crop = padded[i].narrow(1, dy, h).narrow(2, dx, w);
      if (rng.uniform() < 0.5) crop = crop.flip({2});
      batch[i].copy_(crop);
    }
  } else if (recipe == "gtsrb") {
    auto theta = torch::zeros({n, 2, 3});
    auto acc = theta.accessor<float, 3>();
    for (long i = 0; i < n; ++i) {
      const double a = (rng.uniform() * 30.0 - 15.0) * std::numbers::pi / 180.0;
      acc[i][0][0] = static_cast<float>(std::cos(a));
      acc[i][0][1] = static_cast<float>(-std::sin(a));
      acc[i][1][0] = static_cast<float>(std::sin(a));
      acc[i][1][1] = static_cast<float>(std::cos(a));
    }
    auto grid = torch::nn::functional::affine_grid(theta, batch.sizes().vec(), false);
    batch = torch::nn::functional::grid_sample(
        batch, grid, torch::nn::functional::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kZeros).align_corners(false));
  } else {
    throw ConfigError("unknown augmentation recipe '" + recipe + "'");
  }
}

torch::optim::SGD make_sgd(Network& model, const TrainConfig& config, double lr) {
  return torch::optim::SGD(model->parameters(),
                           torch::optim::SGDOptions(lr).momentum(config.momentum).weight_decay(config.weight_decay));
}

void set_lr(torch::optim::SGD& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
}

EpochStats train_epoch(Network& model, torch::optim::SGD& optimizer, const ImageSet& data, int batch_size,
                       const std::optional<std::string>& augmentation_recipe, Rng& rng, int epoch,
                       const LossFn& loss_fn) {
  if (data.empty()) throw InvalidInput("training set is empty");
  model->train();
  auto order = all_indices(data.size());
  rng.shuffle(order.begin(), order.end());
  double loss_sum = 0.0;
  std::size_t correct = 0, seen = 0;
  for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(batch_size));
    // Batch normalisation cannot train on a single sample.
    if (e - b < 2) break;
    std::span<const std::size_t> idx(order.data() + b, e - b);
    auto x = to_tensor(data, idx);
    if (augmentation_recipe) augment_batch(x, *augmentation_recipe, rng);
    const auto y = label_tensor(data, idx);
    const auto logits = model->forward(x);
    const auto loss = loss_fn ? loss_fn(logits, y) : torch::nn::functional::cross_entropy(logits, y);
    const double lv = loss.item<double>();
    if (!std::isfinite(lv)) throw TrainingError("loss diverged in epoch " + std::to_string(epoch), epoch);
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();
    loss_sum += lv * static_cast<double>(e - b);
    correct += static_cast<std::size_t>(logits.argmax(1).eq(y).sum().item<int64_t>());
    seen += e - b;
  }
  if (seen == 0) throw InvalidInput("training set needs at least two samples");
  return {loss_sum / static_cast<double>(seen), static_cast<double>(correct) / static_cast<double>(seen)};
}

ModelCheckpoint train(const ImageSet& data, int num_classes, const TrainConfig& config,
                      const std::string& dataset_digest) {
  config.validate();
  if (data.empty()) throw InvalidInput("training set is empty");
  seed_torch(config.seed);
  ModelCheckpoint ck;
  ck.config = config;
  ck.dataset_digest = dataset_digest;
  ck.model = make_network(config.architecture, num_classes, data.shape());
  auto opt = make_sgd(ck.model, config, config.lr);
  Rng rng(config.seed, "train-order");
  const std::optional<std::string> recipe = config.augmentation ? std::optional(config.recipe) : std::nullopt;
  EpochStats stats;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    set_lr(opt, config.lr_at(epoch));
    stats = train_epoch(ck.model, opt, data, config.batch_size, recipe, rng, epoch);
    log_info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) + " loss " +
             format_double(stats.loss) + " acc " + format_double(stats.accuracy));
  }
  ck.model->eval();
  ck.metrics["train_loss"] = stats.loss;
  ck.metrics["train_accuracy"] = stats.accuracy;
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& checkpoint) {
  Json h;
  h["architecture"] = std::string(to_string(checkpoint.model->architecture()));
  h["num_classes"] = checkpoint.model->num_classes();
  const auto& s = checkpoint.model->input_shape();
  h["input_shape"] = {s.height, s.width, s.channels};
  h["train_config"] = to_json(checkpoint.config);
  h["dataset_digest"] = checkpoint.dataset_digest;
  Json m = Json::object();
  for (const auto& [k, v] : checkpoint.metrics) m[k] = number_to_json(v);
  h["metrics"] = m;
  const std::string header = h.dump();
  std::string out;
  out += kCheckpointMagic;
  out += "\n" + std::to_string(header.size()) + "\n" + header;
  out += serialize_weights(checkpoint.model);
  write_file_atomic(path, out);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  const auto nl1 = raw.find('\n');
  if (nl1 == std::string::npos || raw.compare(0, nl1, kCheckpointMagic) != 0) {
    throw IntegrityError(path.string() + " is not a checkpoint");
  }
  const auto nl2 = raw.find('\n', nl1 + 1);
  if (nl2 == std::string::npos) throw IntegrityError(path.string() + ": truncated header");
  std::size_t len = 0;
  try {
    len = std::stoul(raw.substr(nl1 + 1, nl2 - nl1 - 1));
  } catch (const std::exception&) {
    throw IntegrityError(path.string() + ": bad header length");
  }
  if (nl2 + 1 + len > raw.size()) throw IntegrityError(path.string() + ": truncated header");
  Json h;
  try {
    h = Json::parse(raw.substr(nl2 + 1, len));
  } catch (const std::exception& e) {
    throw IntegrityError(path.string() + ": bad header: " + e.what());
  }
  ModelCheckpoint ck;
  ck.config = train_from_json(h.at("train_config"), TrainConfig{});
  ck.dataset_digest = h.at("dataset_digest").get<std::string>();
  for (const auto& [k, v] : h.at("metrics").items()) ck.metrics[k] = number_from_json(v);
  const auto& sh = h.at("input_shape");
  const ImageShape shape{sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>()};
  ck.model = make_network(architecture_from_string(h.at("architecture").get<std::string>()),
                          h.at("num_classes").get<int>(), shape);
  load_weights(ck.model, raw.substr(nl2 + 1 + len));
  ck.model->eval();
  return ck;
}

torch::Tensor predict_proba(Network& model, const torch::Tensor& inputs, int batch_size) {
  torch::NoGradGuard guard;
  model->eval();
  std::vector<torch::Tensor> parts;
  for (long b = 0; b < inputs.size(0); b += batch_size) {
    const long len = std::min<long>(batch_size, inputs.size(0) - b);
    parts.push_back(torch::softmax(model->forward(inputs.narrow(0, b, len)), 1));
  }
  if (parts.empty()) return torch::empty({0, model->num_classes()});
  return torch::cat(parts);
}

std::vector<int> predict(Network& model, const ImageSet& data, int batch_size) {
  torch::NoGradGuard guard;
  model->eval();
  std::vector<int> out;
  out.reserve(data.size());
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto idx = chunk(b, std::min(data.size(), b + static_cast<std::size_t>(batch_size)));
    const auto pred = model->forward(to_tensor(data, idx)).argmax(1);
    const auto* p = pred.data_ptr<int64_t>();
    for (long i = 0; i < pred.size(0); ++i) out.push_back(static_cast<int>(p[i]));
  }
  return out;
}

Matrix extract_latents(Network& model, const ImageSet& data, int batch_size) {
  torch::NoGradGuard guard;
  model->eval();
  Matrix out(static_cast<Eigen::Index>(data.size()), model->latent_dim());
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto idx = chunk(b, std::min(data.size(), b + static_cast<std::size_t>(batch_size)));
    const auto f = model->features(to_tensor(data, idx)).to(torch::kFloat64).contiguous();
    const double* p = f.data_ptr<double>();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (int d = 0; d < f.size(1); ++d) out(static_cast<Eigen::Index>(b + i), d) = p[i * f.size(1) + d];
    }
  }
  return out;
}

EvalMetrics evaluate(Network& model, const ImageSet& test, const TriggerComposite* trigger, int target) {
  if (test.empty()) throw InvalidInput("test set is empty");
  EvalMetrics m;
  const auto pred = predict(model, test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) correct += pred[i] == test.label(i);
  m.clean_accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  if (trigger && !trigger->empty()) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < test.size(); ++i)
      if (test.label(i) != target) idx.push_back(i);
    m.asr_samples = idx.size();
    if (!idx.empty()) {
      const auto triggered = trigger->apply_all(test.subset(idx));
      const auto tp = predict(model, triggered);
      m.asr = static_cast<double>(std::count(tp.begin(), tp.end(), target)) / static_cast<double>(idx.size());
    }
  }
  return m;
}

std::vector<SweepPoint> asr_opacity_sweep(Network& model, const ImageSet& test, const TriggerSpec& trigger,
                                          std::span<const double> opacities, int target) {
  std::vector<SweepPoint> curve;
  for (double a : opacities) {
    const auto fn = single_trigger_fn(trigger, a);
    curve.push_back({a, evaluate(model, test, &fn, target).asr.value_or(0.0)});
  }
  return curve;
}

}  // namespace latsep::nn
