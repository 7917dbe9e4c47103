#include "latsep/nn/aux_defenses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "latsep/defense_stats.hpp"
#include "latsep/errors.hpp"
#include "latsep/fsutil.hpp"
#include "latsep/log.hpp"
#include "latsep/metrics.hpp"

namespace latsep::nn {

namespace {

/// Freezes the model's parameters for the lifetime of the guard.
class FrozenParameters {
 public:
  explicit FrozenParameters(Network& model) : params_(model->parameters()) {
    for (auto& p : params_) {
      flags_.push_back(p.requires_grad());
      p.requires_grad_(false);
    }
  }
  ~FrozenParameters() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].requires_grad_(flags_[i]);
  }
  FrozenParameters(const FrozenParameters&) = delete;
  FrozenParameters& operator=(const FrozenParameters&) = delete;

 private:
  std::vector<torch::Tensor> params_;
  std::vector<bool> flags_;
};

torch::Tensor row_entropy(const torch::Tensor& probs) {
  return -(probs * torch::log(probs.clamp_min(1e-30))).sum(1);
}

torch::Tensor from_unit(const torch::Tensor& raw) { return (torch::tanh(raw) + 1.0) / 2.0; }

torch::Tensor to_raw(const torch::Tensor& unit) {
  return torch::atanh(((unit - 0.5) * 2.0).clamp(-1.0 + 1e-6, 1.0 - 1e-6));
}

/// Plain SGD over in-memory tensors, no augmentation.
void sgd_pass(Network& model, torch::optim::SGD& opt, const torch::Tensor& x, const torch::Tensor& y, int batch_size,
              Rng& rng, int epoch, bool ascend) {
  model->train();
  std::vector<std::size_t> order(static_cast<std::size_t>(x.size(0)));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(batch_size));
    if (e - b < 2) break;
    std::vector<int64_t> idx(order.begin() + static_cast<long>(b), order.begin() + static_cast<long>(e));
    const auto it = torch::tensor(idx, torch::kInt64);
    auto loss = torch::nn::functional::cross_entropy(model->forward(x.index_select(0, it)), y.index_select(0, it));
    if (ascend) loss = -loss;
    if (!std::isfinite(loss.item<double>())) {
      throw TrainingError("loss diverged in epoch " + std::to_string(epoch), epoch);
    }
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
}

}  // namespace

std::vector<double> strip_entropies(Network& model, const ImageSet& samples, const ImageSet& pool, int overlays,
                                    std::uint64_t seed) {
  if (pool.empty()) throw ConfigError("STRIP needs a non-empty overlay pool");
  if (overlays < 1) throw ConfigError("STRIP needs at least one overlay");
  if (samples.shape() != pool.shape()) throw InvalidInput("STRIP pool and samples differ in shape");
  torch::NoGradGuard guard;
  model->eval();
  Rng rng(seed, "strip-overlays");
  const std::size_t per_chunk = std::max<std::size_t>(1, 256 / static_cast<std::size_t>(overlays));
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t b = 0; b < samples.size(); b += per_chunk) {
    const std::size_t e = std::min(samples.size(), b + per_chunk);
    std::vector<std::size_t> sample_idx, pool_idx;
    for (std::size_t i = b; i < e; ++i) {
      for (int k = 0; k < overlays; ++k) {
        sample_idx.push_back(i);
        pool_idx.push_back(rng.uniform_index(pool.size()));
      }
    }
    const auto mixed = 0.5 * (to_tensor(samples, sample_idx) + to_tensor(pool, pool_idx));
    const auto h = row_entropy(torch::softmax(model->forward(mixed), 1)).view({-1, overlays}).mean(1);
    const auto hd = h.to(torch::kFloat64).contiguous();
    const double* p = hd.data_ptr<double>();
    out.insert(out.end(), p, p + hd.size(0));
  }
  return out;
}

CleanseResult strip_cleanser(Network& model, const ImageSet& train, const ImageSet& validation,
                             const StripOptions& options) {
  const auto val = strip_entropies(model, validation, validation, options.overlays,
                                   derive_seed(options.seed, "strip-validation"));
  const auto tr = strip_entropies(model, train, validation, options.overlays, derive_seed(options.seed, "strip-train"));
  auto res = strip_cleanse(tr, val, options.fpr);
  res.parameters["overlays"] = options.overlays;
  return res;
}

StripFilterResult strip_filter(Network& model, const ImageSet& calibration, const ImageSet& clean_inputs,
                               const ImageSet& poison_inputs, const StripOptions& options) {
  if (calibration.empty()) throw InvalidInput("STRIP filter needs a calibration set");
  const auto cal = strip_entropies(model, calibration, calibration, options.overlays,
                                   derive_seed(options.seed, "strip-calibration"));
  StripFilterResult r;
  r.threshold = strip_threshold(cal, options.fpr);
  auto reject = [&](const ImageSet& s, const char* stream, std::vector<bool>& flags) {
    const auto h = strip_entropies(model, s, calibration, options.overlays, derive_seed(options.seed, stream));
    std::size_t n = 0;
    for (double v : h) {
      flags.push_back(v < r.threshold);
      n += flags.back();
    }
    return h.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(h.size());
  };
  r.sacrifice_rate = reject(clean_inputs, "strip-clean", r.clean_rejected);
  r.elimination_rate = reject(poison_inputs, "strip-poison", r.poison_rejected);
  return r;
}

torch::Tensor apply_reversed(const torch::Tensor& x, const ReversedTrigger& trigger) {
  return (1.0 - trigger.mask) * x + trigger.mask * trigger.pattern;
}

NCResult neural_cleanse(Network& model, const ImageSet& validation, const NeuralCleanseOptions& options) {
  if (validation.empty()) throw InvalidInput("Neural Cleanse needs validation samples");
  model->eval();
  FrozenParameters frozen(model);
  const auto x_all = to_tensor(validation);
  const auto& shape = validation.shape();
  const int classes = model->num_classes();
  NCResult res;
  res.options = options;
  const double down = std::pow(options.cost_multiplier, 1.5);
  for (int k = 0; k < classes; ++k) {
    seed_torch(derive_seed(options.seed, "nc-init-" + std::to_string(k)));
    auto mask_raw = to_raw(torch::rand({1, shape.height, shape.width})).requires_grad_(true);
    auto pattern_raw = to_raw(torch::rand({shape.channels, shape.height, shape.width})).requires_grad_(true);
    torch::optim::Adam opt({mask_raw, pattern_raw},
                           torch::optim::AdamOptions(options.lr).betas({0.5, 0.9}));
    Rng rng(options.seed, "nc-order-" + std::to_string(k));
    double cost = options.init_cost;
    int up = 0, down_count = 0;
    ReversedTrigger best;
    best.norm = std::numeric_limits<double>::infinity();
    double last_success = 0.0;
    std::vector<int64_t> order(static_cast<std::size_t>(x_all.size(0)));
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order.begin(), order.end());
      double hits = 0.0, seen = 0.0, reg_sum = 0.0;
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(options.batch_size)) {
        const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(options.batch_size));
        const auto idx = torch::tensor(std::vector<int64_t>(order.begin() + static_cast<long>(b),
                                                            order.begin() + static_cast<long>(e)));
        const auto x = x_all.index_select(0, idx);
        const auto mask = from_unit(mask_raw);
        const auto pattern = from_unit(pattern_raw);
        const auto logits = model->forward((1.0 - mask) * x + mask * pattern);
        const auto target = torch::full({x.size(0)}, k, torch::kInt64);
        const auto reg = mask.sum();
        const auto loss = torch::nn::functional::cross_entropy(logits, target) + cost * reg;
        opt.zero_grad();
        loss.backward();
        opt.step();
        hits += static_cast<double>(logits.argmax(1).eq(target).sum().item<int64_t>());
        seen += static_cast<double>(x.size(0));
        reg_sum += reg.item<double>() * static_cast<double>(x.size(0));
      }
      const double success = hits / seen;
      last_success = success;
      if (success >= options.success_threshold) {
        torch::NoGradGuard g;
        const auto mask = from_unit(mask_raw);
        const double norm = mask.sum().item<double>();
        if (norm < best.norm) {
          best.mask = mask.clone();
          best.pattern = from_unit(pattern_raw).clone();
          best.norm = norm;
          best.attack_success = success;
        }
        ++up;
        down_count = 0;
      } else {
        up = 0;
        ++down_count;
      }
      if (up >= options.patience) {
        up = 0;
        cost *= options.cost_multiplier;
      } else if (down_count >= options.patience) {
        down_count = 0;
        cost /= down;
      }
      log_debug("nc class " + std::to_string(k) + " epoch " + std::to_string(epoch) + " success " +
                format_double(success) + " mask " + format_double(reg_sum / seen));
    }
    if (!best.mask.defined()) {
      torch::NoGradGuard g;
      best.mask = from_unit(mask_raw).clone();
      best.pattern = from_unit(pattern_raw).clone();
      best.attack_success = last_success;
      log_warn("neural cleanse: class " + std::to_string(k) + " never reached the success threshold");
    }
    res.mask_norms.push_back(best.norm);
    res.triggers.push_back(std::move(best));
  }
  res.anomaly_indices = mad_anomaly_indices(res.mask_norms);
  res.selected_target = select_nc_target(res.mask_norms, res.anomaly_indices, options.anomaly_threshold);
  return res;
}

Network nc_unlearn(const Network& model, const ReversedTrigger& trigger, const ImageSet& clean,
                   const TrainConfig& base, const UnlearnOptions& options) {
  if (clean.empty()) throw InvalidInput("unlearning needs clean samples");
  auto net = clone_network(model);
  seed_torch(options.seed);
  auto x = to_tensor(clean);
  const auto y = label_tensor(clean);
  std::vector<std::size_t> order(clean.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed, "nc-unlearn");
  rng.shuffle(order.begin(), order.end());
  order.resize(round_half_up(options.patched_fraction * static_cast<double>(clean.size())));
  if (!order.empty()) {
    std::vector<int64_t> idx(order.begin(), order.end());
    const auto it = torch::tensor(idx);
    torch::NoGradGuard g;
    x.index_copy_(0, it, apply_reversed(x.index_select(0, it), trigger));
  }
  auto opt = make_sgd(net, base, options.lr);
  for (int epoch = 0; epoch < options.epochs; ++epoch) sgd_pass(net, opt, x, y, options.batch_size, rng, epoch, false);
  net->eval();
  return net;
}

FinePruneResult fine_prune(const Network& model, const ImageSet& probe, double max_ca_drop) {
  if (probe.empty()) throw InvalidInput("fine-pruning needs a probe set");
  if (!(max_ca_drop >= 0.0 && max_ca_drop < 1.0)) throw ConfigError("max_ca_drop must lie in [0, 1)");
  FinePruneResult r;
  r.model = clone_network(model);
  auto& net = r.model;
  net->eval();
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> parts;
  for (std::size_t b = 0; b < probe.size(); b += 256) {
    std::vector<std::size_t> idx(std::min<std::size_t>(256, probe.size() - b));
    std::iota(idx.begin(), idx.end(), b);
    parts.push_back(net->features(to_tensor(probe, idx)));
  }
  const auto latent = torch::cat(parts);
  const auto labels = label_tensor(probe);
  auto accuracy = [&] {
    return net->classify(latent).argmax(1).eq(labels).to(torch::kFloat64).mean().item<double>();
  };
  const auto mean = latent.mean(0).to(torch::kFloat64).contiguous();
  std::vector<int> order(static_cast<std::size_t>(mean.size(0)));
  std::iota(order.begin(), order.end(), 0);
  const double* m = mean.data_ptr<double>();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return m[a] < m[b]; });
  r.probe_accuracy_before = accuracy();
  r.probe_accuracy_after = r.probe_accuracy_before;
  const double floor = (1.0 - max_ca_drop) * r.probe_accuracy_before;
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const int c = order[i];
    net->channel_mask[c].fill_(0.0);
    const double acc = accuracy();
    if (acc < floor) {
      net->channel_mask[c].fill_(1.0);
      break;
    }
    r.pruned_channels.push_back(c);
    r.probe_accuracy_after = acc;
  }
  return r;
}

AblResult abl(const ImageSet& data, int num_classes, const PoisonPlan* plan, const TrainConfig& base,
              const AblOptions& options) {
  if (options.isolate == 0 || options.isolate >= data.size()) {
    throw ConfigError("ABL isolation count must lie in [1, n)");
  }
  seed_torch(base.seed);
  AblResult r;
  r.model = make_network(base.architecture, num_classes, data.shape());
  Rng rng(base.seed, "abl");
  const std::optional<std::string> recipe = base.augmentation ? std::optional(base.recipe) : std::nullopt;
  std::string stage = "isolation";
  try {
    const double flood = options.flooding;
    LossFn flooded = [flood](const torch::Tensor& logits, const torch::Tensor& y) {
      return (torch::nn::functional::cross_entropy(logits, y) - flood).abs() + flood;
    };
    auto opt = make_sgd(r.model, base, options.isolation_lr);
    for (int epoch = 0; epoch < options.isolation_epochs; ++epoch) {
      const auto s = train_epoch(r.model, opt, data, base.batch_size, recipe, rng, epoch, flooded);
      log_info("abl isolation epoch " + std::to_string(epoch + 1) + " loss " + format_double(s.loss));
    }

    // Per-sample loss without augmentation; the lowest losses are isolated.
    std::vector<double> losses;
    {
      torch::NoGradGuard g;
      r.model->eval();
      for (std::size_t b = 0; b < data.size(); b += 256) {
        std::vector<std::size_t> idx(std::min<std::size_t>(256, data.size() - b));
        std::iota(idx.begin(), idx.end(), b);
        const auto l = torch::nn::functional::cross_entropy(
                           r.model->forward(to_tensor(data, idx)), label_tensor(data, idx),
                           torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kNone))
                           .to(torch::kFloat64)
                           .contiguous();
        losses.insert(losses.end(), l.data_ptr<double>(), l.data_ptr<double>() + l.size(0));
      }
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    r.isolated.assign(order.begin(), order.begin() + static_cast<long>(options.isolate));
    std::sort(r.isolated.begin(), r.isolated.end());
    if (plan) r.isolation_precision = isolation_precision(*plan, r.isolated);

    stage = "finetune";
    const auto rest = data.subset(complement(data.size(), r.isolated));
    TrainConfig ft = base;
    ft.epochs = options.finetune_epochs;
    ft.lr = options.finetune_lr;
    ft.decay_epochs = options.finetune_decay_epochs;
    auto ft_opt = make_sgd(r.model, ft, ft.lr);
    for (int epoch = 0; epoch < ft.epochs; ++epoch) {
      set_lr(ft_opt, ft.lr_at(epoch));
      const auto s = train_epoch(r.model, ft_opt, rest, base.batch_size, recipe, rng, epoch);
      log_info("abl finetune epoch " + std::to_string(epoch + 1) + " loss " + format_double(s.loss));
    }

    stage = "unlearn";
    const auto iso = data.subset(r.isolated);
    const auto x = to_tensor(iso);
    const auto y = label_tensor(iso);
    auto un_opt = make_sgd(r.model, base, options.unlearn_lr);
    for (int epoch = 0; epoch < options.unlearn_epochs; ++epoch) {
      sgd_pass(r.model, un_opt, x, y, base.batch_size, rng, epoch, true);
    }
  } catch (const TrainingError& e) {
    throw TrainingError("abl " + stage + ": " + e.what(), e.epoch());
  }
  r.model->eval();
  return r;
}

}  // namespace latsep::nn
