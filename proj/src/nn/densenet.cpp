#include <cmath>
#include <cstring>
#include <random>

#include "longiseg/model.hpp"
#include "longiseg/nn/kernels.hpp"

namespace longiseg::model {

namespace k = nn::kernels;
using nlohmann::json;

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr k::ConvGeometry kConv3{3, 1, 1};
constexpr k::ConvGeometry kConv1{1, 1, 0};
constexpr k::ConvGeometry kUpConv{3, 2, 1};

template <typename Real>
Tensor<Real> pad_input(const Tensor<Real>& x, int multiple, int& top, int& left) {
  const int h = (x.h() + multiple - 1) / multiple * multiple;
  const int w = (x.w() + multiple - 1) / multiple * multiple;
  top = (h - x.h()) / 2;
  left = (w - x.w()) / 2;
  if (h == x.h() && w == x.w()) return x;
  Tensor<Real> out(x.n(), x.c(), h, w);
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        std::memcpy(&out.at(b, c, y + top, left), &x.at(b, c, y, 0), sizeof(Real) * x.w());
  return out;
}

template <typename Real>
Tensor<Real> crop_output(const Tensor<Real>& x, int top, int left, int h, int w) {
  if (x.h() == h && x.w() == w) return x;
  Tensor<Real> out(x.n(), x.c(), h, w);
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < h; ++y) std::memcpy(&out.at(b, c, y, 0), &x.at(b, c, y + top, left), sizeof(Real) * w);
  return out;
}

}  // namespace

BackboneConfig BackboneConfig::preset(const std::string& name) {
  BackboneConfig c;
  c.architecture = name;
  if (name == "fc-densenet56") return c;
  if (name == "fc-densenet-desk") {
    c.first_filters = 16;
    c.growth_rate = 8;
    c.down_layers = {2, 2, 2};
    c.bottleneck_layers = 2;
    c.up_layers = {2, 2, 2};
    return c;
  }
  if (name == "fc-densenet-tiny") {
    c.first_filters = 4;
    c.growth_rate = 3;
    c.down_layers = {};
    c.bottleneck_layers = 2;
    c.up_layers = {};
    return c;
  }
  throw std::invalid_argument("unknown backbone preset '" + name + "'");
}

void BackboneConfig::validate() const {
  if (in_channels != kInputChannels) throw std::invalid_argument("backbone: in_channels must be 8");
  if (out_classes != kNumClasses) throw std::invalid_argument("backbone: out_classes must be 3");
  if (first_filters < 1 || growth_rate < 1) throw std::invalid_argument("backbone: filters must be positive");
  if (bottleneck_layers < 1) throw std::invalid_argument("backbone: bottleneck needs at least one layer");
  if (up_layers.size() != down_layers.size()) {
    throw std::invalid_argument("backbone: up_layers and down_layers must have the same length");
  }
  for (int v : down_layers)
    if (v < 0) throw std::invalid_argument("backbone: negative layer count");
  for (int v : up_layers)
    if (v < 1) throw std::invalid_argument("backbone: up blocks need at least one layer");
}

void to_json(json& j, const BackboneConfig& c) {
  j = json{{"architecture", c.architecture}, {"in_channels", c.in_channels},   {"out_classes", c.out_classes},
           {"first_filters", c.first_filters}, {"growth_rate", c.growth_rate}, {"down_layers", c.down_layers},
           {"bottleneck_layers", c.bottleneck_layers}, {"up_layers", c.up_layers}, {"seed", c.seed},
           {"zero_init_head", c.zero_init_head}};
}

void from_json(const json& j, BackboneConfig& c) {
  const std::string arch = j.value("architecture", std::string("fc-densenet56"));
  try {
    c = BackboneConfig::preset(arch);
  } catch (const std::invalid_argument&) {
    c = BackboneConfig{};
  }
  c.architecture = j.value("architecture", c.architecture);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_classes = j.value("out_classes", c.out_classes);
  c.first_filters = j.value("first_filters", c.first_filters);
  c.growth_rate = j.value("growth_rate", c.growth_rate);
  c.down_layers = j.value("down_layers", c.down_layers);
  c.bottleneck_layers = j.value("bottleneck_layers", c.bottleneck_layers);
  c.up_layers = j.value("up_layers", c.up_layers);
  c.seed = j.value("seed", c.seed);
  c.zero_init_head = j.value("zero_init_head", c.zero_init_head);
}

template <typename Real>
std::size_t DenseNet<Real>::add_param(const std::string& name, std::vector<int> shape, bool trainable) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  Parameter<Real> p{name, std::move(shape), std::vector<Real>(n, Real{0}), std::vector<Real>(n, Real{0}), trainable};
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

template <typename Real>
typename DenseNet<Real>::BatchNormRef DenseNet<Real>::make_bn(const std::string& name, int channels) {
  BatchNormRef bn;
  bn.channels = channels;
  bn.gamma = add_param(name + ".gamma", {channels}, true);
  bn.beta = add_param(name + ".beta", {channels}, true);
  bn.mean = add_param(name + ".running_mean", {channels}, false);
  bn.var = add_param(name + ".running_var", {channels}, false);
  std::fill(params_[bn.gamma].value.begin(), params_[bn.gamma].value.end(), Real{1});
  std::fill(params_[bn.var].value.begin(), params_[bn.var].value.end(), Real{1});
  return bn;
}

template <typename Real>
typename DenseNet<Real>::ConvRef DenseNet<Real>::make_conv(const std::string& name, int in, int out, int kernel,
                                                            bool transposed) {
  ConvRef c{in, out, kernel, 0, 0};
  c.weight = transposed ? add_param(name + ".weight", {in, out, kernel, kernel}, true)
                        : add_param(name + ".weight", {out, in, kernel, kernel}, true);
  c.bias = add_param(name + ".bias", {out}, true);
  return c;
}

template <typename Real>
typename DenseNet<Real>::BlockRef DenseNet<Real>::make_block(const std::string& name, int in_channels, int layers) {
  BlockRef b;
  b.in_channels = in_channels;
  for (int l = 0; l < layers; ++l) {
    const int c = in_channels + l * config_.growth_rate;
    const std::string ln = name + ".layer" + std::to_string(l);
    b.layers.push_back({make_bn(ln + ".bn", c), make_conv(ln + ".conv", c, config_.growth_rate, 3, false)});
  }
  return b;
}

template <typename Real>
DenseNet<Real>::DenseNet(const BackboneConfig& config) : config_(config) {
  config_.validate();
  const int g = config_.growth_rate;
  const int depth = static_cast<int>(config_.down_layers.size());
  int m = config_.first_filters;
  first_conv_ = make_conv("first_conv", config_.in_channels, m, 3, false);
  std::vector<int> skip;
  for (int i = 0; i < depth; ++i) {
    const std::string name = "down" + std::to_string(i);
    down_.push_back(make_block(name, m, config_.down_layers[i]));
    m = down_.back().out_channels(g);
    skip.push_back(m);
    transition_down_.push_back({make_bn(name + ".transition.bn", m), make_conv(name + ".transition.conv", m, m, 1, false)});
  }
  bottleneck_ = make_block("bottleneck", m, config_.bottleneck_layers);
  int upsampled = config_.bottleneck_layers * g;
  int final_channels = bottleneck_.out_channels(g);
  for (int j = 0; j < depth; ++j) {
    const int i = depth - 1 - j;
    const std::string name = "up" + std::to_string(j);
    transition_up_.push_back(make_conv(name + ".transition", upsampled, upsampled, 3, true));
    up_.push_back(make_block(name, skip[i] + upsampled, config_.up_layers[j]));
    upsampled = config_.up_layers[j] * g;
    final_channels = up_.back().out_channels(g);
  }
  head_ = make_conv("head", final_channels, config_.out_classes, 1, false);

  std::mt19937_64 rng(config_.seed);
  for (auto& p : params_) {
    if (!p.trainable || p.shape.size() != 4) continue;
    const bool transposed = p.name.ends_with("transition.weight") && p.name.starts_with("up");
    const double fan_in = transposed ? p.shape[0] * p.shape[2] * p.shape[3] / 4.0
                                     : static_cast<double>(p.shape[1]) * p.shape[2] * p.shape[3];
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.value) v = static_cast<Real>(dist(rng));
  }
  if (config_.zero_init_head) {
    std::fill(params_[head_.weight].value.begin(), params_[head_.weight].value.end(), Real{0});
  }
}

template <typename Real>
void DenseNet<Real>::bn_forward(const BatchNormRef& bn, nn::View<const Real> x, bool training,
                                LayerCache& cache) const {
  cache.act = Tensor<Real>(x.n, x.c, x.h, x.w);
  if (training) {
    cache.xhat = Tensor<Real>(x.n, x.c, x.h, x.w);
    cache.mean.assign(x.c, Real{0});
    cache.var.assign(x.c, Real{0});
    k::batchnorm_forward_train<Real>(x, params_[bn.gamma].value.data(), params_[bn.beta].value.data(),
                                     static_cast<Real>(kBnEps), cache.xhat.view(), cache.act.view(),
                                     cache.mean.data(), cache.var.data());
  } else {
    k::batchnorm_forward_eval<Real>(x, params_[bn.gamma].value.data(), params_[bn.beta].value.data(),
                                    params_[bn.mean].value.data(), params_[bn.var].value.data(),
                                    static_cast<Real>(kBnEps), cache.act.view());
  }
  k::relu_inplace<Real>(cache.act.view());
}

template <typename Real>
void DenseNet<Real>::block_forward(const BlockRef& blk, BlockCache& cache, bool training, bool keep) const {
  const int g = config_.growth_rate;
  cache.layers.assign(keep ? blk.layers.size() : 0, LayerCache{});
  for (std::size_t l = 0; l < blk.layers.size(); ++l) {
    const auto& layer = blk.layers[l];
    const int c = layer.bn.channels;
    LayerCache local;
    LayerCache& lc = keep ? cache.layers[l] : local;
    bn_forward(layer.bn, cache.buffer.channels(0, c), training, lc);
    k::conv2d_forward<Real>(lc.act.view(), params_[layer.conv.weight].value.data(),
                            params_[layer.conv.bias].value.data(), kConv3, cache.buffer.channels(c, c + g));
  }
}

template <typename Real>
void DenseNet<Real>::block_backward(const BlockRef& blk, BlockCache& cache, Tensor<Real>& grad) {
  const int g = config_.growth_rate;
  for (std::size_t l = blk.layers.size(); l-- > 0;) {
    const auto& layer = blk.layers[l];
    const int c = layer.bn.channels;
    auto& lc = cache.layers[l];
    Tensor<Real> dact(grad.n(), c, grad.h(), grad.w());
    k::conv2d_backward<Real>(lc.act.view(), params_[layer.conv.weight].value.data(),
                             nn::View<const Real>(grad.channels(c, c + g)), kConv3, dact.view(),
                             params_[layer.conv.weight].grad.data(), params_[layer.conv.bias].grad.data());
    k::relu_backward_inplace<Real>(lc.act.view(), dact.view());
    k::batchnorm_backward<Real>(dact.view(), lc.xhat.view(), params_[layer.bn.gamma].value.data(), lc.var.data(),
                                static_cast<Real>(kBnEps), grad.channels(0, c), params_[layer.bn.gamma].grad.data(),
                                params_[layer.bn.beta].grad.data());
  }
}

template <typename Real>
void DenseNet<Real>::run(Tape& tape, bool training, bool keep) const {
  const int g = config_.growth_rate;
  const int depth = static_cast<int>(down_.size());
  const int n = tape.input.n();
  if (tape.input.c() != config_.in_channels) {
    throw std::invalid_argument("backbone expects " + std::to_string(config_.in_channels) + " input channels, got " +
                                std::to_string(tape.input.c()));
  }
  std::vector<int> hs(depth + 1), ws(depth + 1);
  hs[0] = tape.input.h();
  ws[0] = tape.input.w();
  for (int i = 1; i <= depth; ++i) {
    hs[i] = hs[i - 1] / 2;
    ws[i] = ws[i - 1] / 2;
  }

  tape.down.assign(depth, BlockCache{});
  tape.transition.assign(depth, DownCache{});
  tape.up.assign(depth, BlockCache{});
  for (int i = 0; i < depth; ++i) tape.down[i].buffer = Tensor<Real>(n, down_[i].out_channels(g), hs[i], ws[i]);
  tape.bottleneck = BlockCache{};
  tape.bottleneck.buffer = Tensor<Real>(n, bottleneck_.out_channels(g), hs[depth], ws[depth]);

  Tensor<Real>& first_target = depth > 0 ? tape.down[0].buffer : tape.bottleneck.buffer;
  k::conv2d_forward<Real>(tape.input.view(), params_[first_conv_.weight].value.data(),
                          params_[first_conv_.bias].value.data(), kConv3,
                          first_target.channels(0, config_.first_filters));

  for (int i = 0; i < depth; ++i) {
    block_forward(down_[i], tape.down[i], training, keep);
    const auto& td = transition_down_[i];
    const int m = td.bn.channels;
    DownCache local;
    DownCache& dc = keep ? tape.transition[i] : local;
    bn_forward(td.bn, tape.down[i].buffer.view(), training, dc.bn);
    dc.conv_out = Tensor<Real>(n, m, hs[i], ws[i]);
    k::conv2d_forward<Real>(dc.bn.act.view(), params_[td.conv.weight].value.data(), params_[td.conv.bias].value.data(),
                            kConv1, dc.conv_out.view());
    Tensor<Real>& next = i + 1 < depth ? tape.down[i + 1].buffer : tape.bottleneck.buffer;
    dc.argmax.assign(static_cast<std::size_t>(n) * m * hs[i + 1] * ws[i + 1], 0);
    k::maxpool2_forward<Real>(dc.conv_out.view(), next.channels(0, m), dc.argmax.data());
  }

  block_forward(bottleneck_, tape.bottleneck, training, keep);

  const Tensor<Real>* prev = &tape.bottleneck.buffer;
  int prev_lo = bottleneck_.in_channels, prev_hi = bottleneck_.out_channels(g);
  for (int j = 0; j < depth; ++j) {
    const int i = depth - 1 - j;
    auto& uc = tape.up[j];
    uc.buffer = Tensor<Real>(n, up_[j].out_channels(g), hs[i], ws[i]);
    const int skip_c = down_[i].out_channels(g);
    k::copy<Real>(tape.down[i].buffer.view(), uc.buffer.channels(0, skip_c));
    const auto& tu = transition_up_[j];
    k::conv_transpose2d_forward<Real>(prev->channels(prev_lo, prev_hi), params_[tu.weight].value.data(),
                                      params_[tu.bias].value.data(), kUpConv,
                                      uc.buffer.channels(skip_c, skip_c + tu.out));
    block_forward(up_[j], uc, training, keep);
    prev = &uc.buffer;
    prev_lo = up_[j].in_channels;
    prev_hi = up_[j].out_channels(g);
  }

  const Tensor<Real>& final_features = depth > 0 ? tape.up.back().buffer : tape.bottleneck.buffer;
  Tensor<Real> logits(n, config_.out_classes, hs[0], ws[0]);
  k::conv2d_forward<Real>(final_features.view(), params_[head_.weight].value.data(), params_[head_.bias].value.data(),
                          kConv1, logits.view());
  tape.probs = Tensor<Real>(n, config_.out_classes, hs[0], ws[0]);
  k::softmax_channels<Real>(logits.view(), tape.probs.view());
}

template <typename Real>
Tensor<Real> DenseNet<Real>::infer(const Tensor<Real>& input) const {
  Tape tape;
  tape.input = pad_input(input, config_.stride_multiple(), tape.pad_top, tape.pad_left);
  run(tape, false, false);
  return crop_output(tape.probs, tape.pad_top, tape.pad_left, input.h(), input.w());
}

template <typename Real>
void DenseNet<Real>::update_running(const BatchNormRef& bn, const LayerCache& cache, std::size_t count) {
  auto& rm = params_[bn.mean].value;
  auto& rv = params_[bn.var].value;
  const double unbias = count > 1 ? static_cast<double>(count) / (count - 1) : 1.0;
  for (int c = 0; c < bn.channels; ++c) {
    rm[c] = static_cast<Real>((1.0 - kBnMomentum) * rm[c] + kBnMomentum * cache.mean[c]);
    rv[c] = static_cast<Real>((1.0 - kBnMomentum) * rv[c] + kBnMomentum * cache.var[c] * unbias);
  }
}

template <typename Real>
Tensor<Real> DenseNet<Real>::forward_train(const Tensor<Real>& input) {
  tape_ = Tape{};
  tape_.input = pad_input(input, config_.stride_multiple(), tape_.pad_top, tape_.pad_left);
  tape_.out_h = input.h();
  tape_.out_w = input.w();
  run(tape_, true, true);
  tape_.valid = true;

  auto update_block = [&](const BlockRef& blk, const BlockCache& bc) {
    const std::size_t count = static_cast<std::size_t>(bc.buffer.n()) * bc.buffer.plane();
    for (std::size_t l = 0; l < blk.layers.size(); ++l) update_running(blk.layers[l].bn, bc.layers[l], count);
  };
  for (std::size_t i = 0; i < down_.size(); ++i) {
    update_block(down_[i], tape_.down[i]);
    const auto& dc = tape_.transition[i];
    update_running(transition_down_[i].bn, dc.bn, static_cast<std::size_t>(dc.conv_out.n()) * dc.conv_out.plane());
  }
  update_block(bottleneck_, tape_.bottleneck);
  for (std::size_t j = 0; j < up_.size(); ++j) update_block(up_[j], tape_.up[j]);

  return crop_output(tape_.probs, tape_.pad_top, tape_.pad_left, input.h(), input.w());
}

template <typename Real>
void DenseNet<Real>::backward(const Tensor<Real>& dprobs_cropped) {
  if (!tape_.valid) throw std::logic_error("backward() without a preceding forward_train()");
  const int g = config_.growth_rate;
  const int depth = static_cast<int>(down_.size());
  const auto& probs = tape_.probs;
  if (dprobs_cropped.n() != probs.n() || dprobs_cropped.c() != probs.c() || dprobs_cropped.h() != tape_.out_h ||
      dprobs_cropped.w() != tape_.out_w) {
    throw ShapeError("backward: gradient shape does not match the last forward");
  }
  Tensor<Real> dprobs(probs.n(), probs.c(), probs.h(), probs.w());
  for (int b = 0; b < probs.n(); ++b)
    for (int c = 0; c < probs.c(); ++c)
      for (int y = 0; y < tape_.out_h; ++y)
        std::memcpy(&dprobs.at(b, c, y + tape_.pad_top, tape_.pad_left), &dprobs_cropped.at(b, c, y, 0),
                    sizeof(Real) * tape_.out_w);

  Tensor<Real> dlogits(probs.n(), probs.c(), probs.h(), probs.w());
  k::softmax_backward<Real>(probs.view(), dprobs.view(), dlogits.view());

  const Tensor<Real>& final_features = depth > 0 ? tape_.up.back().buffer : tape_.bottleneck.buffer;
  Tensor<Real> grad_final(final_features.n(), final_features.c(), final_features.h(), final_features.w());
  k::conv2d_backward<Real>(final_features.view(), params_[head_.weight].value.data(), dlogits.view(), kConv1,
                           grad_final.view(), params_[head_.weight].grad.data(), params_[head_.bias].grad.data());

  std::vector<Tensor<Real>> grad_down(depth), grad_up(depth);
  for (int i = 0; i < depth; ++i) {
    const auto& buf = tape_.down[i].buffer;
    grad_down[i] = Tensor<Real>(buf.n(), buf.c(), buf.h(), buf.w());
  }
  const auto& bb = tape_.bottleneck.buffer;
  Tensor<Real> grad_bottleneck = depth > 0 ? Tensor<Real>(bb.n(), bb.c(), bb.h(), bb.w()) : std::move(grad_final);

  for (int j = depth - 1; j >= 0; --j) {
    const int i = depth - 1 - j;
    if (j == depth - 1) {
      grad_up[j] = std::move(grad_final);
    }
    block_backward(up_[j], tape_.up[j], grad_up[j]);
    const int skip_c = down_[i].out_channels(g);
    k::add<Real>(nn::View<const Real>(grad_up[j].channels(0, skip_c)), grad_down[i].view());

    const auto& tu = transition_up_[j];
    Tensor<Real>* prev_grad;
    const Tensor<Real>* prev_buf;
    int lo, hi;
    if (j > 0) {
      const auto& pb = tape_.up[j - 1].buffer;
      grad_up[j - 1] = Tensor<Real>(pb.n(), pb.c(), pb.h(), pb.w());
      prev_grad = &grad_up[j - 1];
      prev_buf = &pb;
      lo = up_[j - 1].in_channels;
      hi = up_[j - 1].out_channels(g);
    } else {
      prev_grad = &grad_bottleneck;
      prev_buf = &tape_.bottleneck.buffer;
      lo = bottleneck_.in_channels;
      hi = bottleneck_.out_channels(g);
    }
    k::conv_transpose2d_backward<Real>(prev_buf->channels(lo, hi), params_[tu.weight].value.data(),
                                       nn::View<const Real>(grad_up[j].channels(skip_c, skip_c + tu.out)), kUpConv,
                                       prev_grad->channels(lo, hi), params_[tu.weight].grad.data(),
                                       params_[tu.bias].grad.data());
  }

  block_backward(bottleneck_, tape_.bottleneck, grad_bottleneck);

  for (int i = depth - 1; i >= 0; --i) {
    const auto& td = transition_down_[i];
    auto& dc = tape_.transition[i];
    const int m = td.bn.channels;
    Tensor<Real>& next_grad = i + 1 < depth ? grad_down[i + 1] : grad_bottleneck;
    Tensor<Real> dconv(dc.conv_out.n(), m, dc.conv_out.h(), dc.conv_out.w());
    k::maxpool2_backward<Real>(nn::View<const Real>(next_grad.channels(0, m)), dc.argmax.data(), dconv.view());
    Tensor<Real> dact(dconv.n(), m, dconv.h(), dconv.w());
    k::conv2d_backward<Real>(dc.bn.act.view(), params_[td.conv.weight].value.data(), dconv.view(), kConv1,
                             dact.view(), params_[td.conv.weight].grad.data(), params_[td.conv.bias].grad.data());
    k::relu_backward_inplace<Real>(dc.bn.act.view(), dact.view());
    k::batchnorm_backward<Real>(dact.view(), dc.bn.xhat.view(), params_[td.bn.gamma].value.data(), dc.bn.var.data(),
                                static_cast<Real>(kBnEps), grad_down[i].view(), params_[td.bn.gamma].grad.data(),
                                params_[td.bn.beta].grad.data());
    block_backward(down_[i], tape_.down[i], grad_down[i]);
  }

  const Tensor<Real>& first_grad = depth > 0 ? grad_down[0] : grad_bottleneck;
  k::conv2d_backward<Real>(tape_.input.view(), params_[first_conv_.weight].value.data(),
                           first_grad.channels(0, config_.first_filters), kConv3, nn::View<Real>{},
                           params_[first_conv_.weight].grad.data(), params_[first_conv_.bias].grad.data());
}

template <typename Real>
void DenseNet<Real>::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), Real{0});
}

template <typename Real>
std::size_t DenseNet<Real>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

template <typename Real>
std::uint64_t DenseNet<Real>::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
    for (std::size_t i = 0; i < p.value.size() * sizeof(Real); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

template <typename Real>
double DenseNet<Real>::forward_macs(int height, int width) const {
  const int m = config_.stride_multiple();
  double h = (height + m - 1) / m * m, w = (width + m - 1) / m * m;
  const double top = h * w;
  double macs = top * config_.in_channels * config_.first_filters * 9;
  auto block = [&](const BlockRef& blk, double px) {
    for (const auto& l : blk.layers) macs += px * l.conv.in * l.conv.out * 9;
  };
  double px = top;
  for (std::size_t i = 0; i < down_.size(); ++i) {
    block(down_[i], px);
    macs += px * transition_down_[i].conv.in * transition_down_[i].conv.out;
    px /= 4;
  }
  block(bottleneck_, px);
  for (std::size_t j = 0; j < up_.size(); ++j) {
    macs += px * transition_up_[j].in * transition_up_[j].out * 9;
    px *= 4;
    block(up_[j], px);
  }
  macs += top * head_.in * head_.out;
  return macs;
}

template class DenseNet<float>;
template class DenseNet<double>;

}  // namespace longiseg::model
