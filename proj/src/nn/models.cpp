#include "latsep/nn/models.hpp"

#include <sstream>

#include "latsep/errors.hpp"

namespace latsep::nn {

namespace {

namespace tnn = torch::nn;

tnn::Conv2d conv(int in, int out, int k, int stride, int groups = 1) {
  return tnn::Conv2d(tnn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).groups(groups).bias(false));
}

class BasicBlockImpl : public tnn::Module {
 public:
  BasicBlockImpl(int in, int out, int stride) {
    conv1_ = register_module("conv1", conv(in, out, 3, stride));
    bn1_ = register_module("bn1", tnn::BatchNorm2d(out));
    conv2_ = register_module("conv2", conv(out, out, 3, 1));
    bn2_ = register_module("bn2", tnn::BatchNorm2d(out));
    if (stride != 1 || in != out) {
      shortcut_ = register_module("shortcut", tnn::Sequential(conv(in, out, 1, stride), tnn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1_(conv1_(x)));
    y = bn2_(conv2_(y));
    return torch::relu(y + (shortcut_ ? shortcut_->forward(x) : x));
  }

 private:
  tnn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  tnn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  tnn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

class InvertedResidualImpl : public tnn::Module {
 public:
  InvertedResidualImpl(int in, int out, int expansion, int stride) : stride_(stride) {
    const int hidden = in * expansion;
    conv1_ = register_module("conv1", conv(in, hidden, 1, 1));
    bn1_ = register_module("bn1", tnn::BatchNorm2d(hidden));
    conv2_ = register_module("conv2", conv(hidden, hidden, 3, stride, hidden));
    bn2_ = register_module("bn2", tnn::BatchNorm2d(hidden));
    conv3_ = register_module("conv3", conv(hidden, out, 1, 1));
    bn3_ = register_module("bn3", tnn::BatchNorm2d(out));
    if (stride == 1 && in != out) {
      shortcut_ = register_module("shortcut", tnn::Sequential(conv(in, out, 1, 1), tnn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu6(bn1_(conv1_(x)));
    y = torch::relu6(bn2_(conv2_(y)));
    y = bn3_(conv3_(y));
    if (stride_ != 1) return y;
    return y + (shortcut_ ? shortcut_->forward(x) : x);
  }

 private:
  int stride_;
  tnn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  tnn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr};
  tnn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(InvertedResidual);

tnn::Sequential make_resnet20(int channels) {
  tnn::Sequential s(conv(channels, 16, 3, 1), tnn::BatchNorm2d(16), tnn::Functional(torch::relu));
  int in = 16;
  for (int stage = 0; stage < 3; ++stage) {
    const int out = 16 << stage;
    for (int b = 0; b < 3; ++b) {
      s->push_back(BasicBlock(in, out, (b == 0 && stage > 0) ? 2 : 1));
      in = out;
    }
  }
  return s;
}

tnn::Sequential make_vgg16(int channels, int size) {
  const int cfg[] = {64, 64, -1, 128, 128, -1, 256, 256, 256, -1, 512, 512, 512, -1, 512, 512, 512, -1};
  tnn::Sequential s;
  int in = channels;
  for (int c : cfg) {
    if (c < 0) {
      // Small inputs stop downsampling at 1×1.
      if (size >= 2) {
        s->push_back(tnn::MaxPool2d(tnn::MaxPool2dOptions(2).stride(2)));
        size /= 2;
      }
      continue;
    }
    s->push_back(tnn::Conv2d(tnn::Conv2dOptions(in, c, 3).padding(1)));
    s->push_back(tnn::BatchNorm2d(c));
    s->push_back(tnn::Functional(torch::relu));
    in = c;
  }
  return s;
}

tnn::Sequential make_mobilenetv2(int channels) {
  struct Stage {
    int expansion, out, blocks, stride;
  };
  const Stage cfg[] = {{1, 16, 1, 1}, {6, 24, 2, 1}, {6, 32, 3, 2}, {6, 64, 4, 2},
                       {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
  tnn::Sequential s(conv(channels, 32, 3, 1), tnn::BatchNorm2d(32), tnn::Functional(torch::relu6));
  int in = 32;
  for (const auto& st : cfg) {
    for (int b = 0; b < st.blocks; ++b) {
      s->push_back(InvertedResidual(in, st.out, st.expansion, b == 0 ? st.stride : 1));
      in = st.out;
    }
  }
  s->push_back(conv(320, 1280, 1, 1));
  s->push_back(tnn::BatchNorm2d(1280));
  s->push_back(tnn::Functional(torch::relu6));
  return s;
}

}  // namespace

NetworkImpl::NetworkImpl(Architecture architecture, int num_classes, ImageShape shape)
    : architecture_(architecture), num_classes_(num_classes), shape_(shape) {
  if (num_classes < 2) throw InvalidInput("a classifier needs at least two classes");
  if (shape.channels < 1 || shape.height < 8 || shape.width < 8) {
    throw InvalidInput("unsupported input shape " + shape.str());
  }
  std::vector<float> mean(shape.channels, 0.5f), stdev(shape.channels, 0.25f);
  if (shape.channels == 3) {
    mean = {0.4914f, 0.4822f, 0.4465f};
    stdev = {0.2470f, 0.2435f, 0.2616f};
  }
  mean_ = register_buffer("mean", torch::tensor(mean).view({1, shape.channels, 1, 1}));
  std_ = register_buffer("std", torch::tensor(stdev).view({1, shape.channels, 1, 1}));
  switch (architecture) {
    case Architecture::resnet20:
      body_ = make_resnet20(shape.channels);
      break;
    case Architecture::vgg16:
      body_ = make_vgg16(shape.channels, std::min(shape.height, shape.width));
      break;
    case Architecture::mobilenetv2:
      body_ = make_mobilenetv2(shape.channels);
      break;
  }
  register_module("body", body_);
  head_ = register_module("head", torch::nn::Linear(latent_dim(), num_classes));
  channel_mask = register_buffer("channel_mask", torch::ones({latent_dim()}));
}

int NetworkImpl::latent_dim() const { return ::latsep::latent_dim(architecture_); }

torch::Tensor NetworkImpl::features(const torch::Tensor& x) {
  auto y = body_->forward((x - mean_) / std_);
  return torch::adaptive_avg_pool2d(y, {1, 1}).flatten(1);
}

torch::Tensor NetworkImpl::classify(const torch::Tensor& latent) { return head_(latent * channel_mask); }

torch::Tensor NetworkImpl::forward(const torch::Tensor& x) { return classify(features(x)); }

Network make_network(Architecture architecture, int num_classes, const ImageShape& shape) {
  return Network(architecture, num_classes, shape);
}

std::string serialize_weights(const Network& net) {
  torch::serialize::OutputArchive archive;
  net->save(archive);
  std::ostringstream out;
  archive.save_to(out);
  return out.str();
}

void load_weights(Network& net, const std::string& blob) {
  torch::serialize::InputArchive archive;
  std::istringstream in(blob);
  try {
    archive.load_from(in);
    net->load(archive);
  } catch (const c10::Error& e) {
    throw IntegrityError(std::string("cannot load model weights: ") + e.what_without_backtrace());
  }
}

Network clone_network(const Network& net) {
  Network copy(net->architecture(), net->num_classes(), net->input_shape());
  load_weights(copy, serialize_weights(net));
  copy->train(net->is_training());
  return copy;
}

void seed_torch(std::uint64_t seed) {
  torch::set_num_threads(1);
  torch::manual_seed(seed);
}

}  // namespace latsep::nn
