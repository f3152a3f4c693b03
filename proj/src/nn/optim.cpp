#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "longiseg/model.hpp"

namespace longiseg::model {

using nlohmann::json;

template <typename Real>
Real mse_loss(const Tensor<Real>& probs, std::span<const LabelImage> gt, Tensor<Real>* dprobs) {
  if (static_cast<int>(gt.size()) != probs.n()) throw ShapeError("mse_loss: batch size mismatch");
  const std::size_t plane = probs.plane();
  const double count = static_cast<double>(probs.size());
  if (dprobs) *dprobs = Tensor<Real>(probs.n(), probs.c(), probs.h(), probs.w());
  double total = 0.0;
  for (int b = 0; b < probs.n(); ++b) {
    if (gt[b].extent(0) != probs.h() || gt[b].extent(1) != probs.w()) {
      throw ShapeError("mse_loss: ground truth " + extents_string(gt[b].extents()) + " does not match " +
                       std::to_string(probs.h()) + "x" + std::to_string(probs.w()));
    }
    auto labels = gt[b].values();
    for (int c = 0; c < probs.c(); ++c) {
      const Real* p = probs.data() + (static_cast<std::size_t>(b) * probs.c() + c) * plane;
      Real* d = dprobs ? dprobs->data() + (static_cast<std::size_t>(b) * probs.c() + c) * plane : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const double diff = static_cast<double>(p[i]) - (labels[i] == c ? 1.0 : 0.0);
        total += diff * diff;
        if (d) d[i] = static_cast<Real>(2.0 * diff / count);
      }
    }
  }
  return static_cast<Real>(total / count);
}

template <typename Real>
void Adam<Real>::step(std::vector<Parameter<Real>>& params) {
  if (m_.size() != params.size()) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
    vmax_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].value.size(), 0.0);
      v_[i].assign(params[i].value.size(), 0.0);
      vmax_[i].assign(params[i].value.size(), 0.0);
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double sqrt_bc2 = std::sqrt(1.0 - std::pow(b2, static_cast<double>(t_)));
  const double step = config_.learning_rate / bc1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    auto& vmax = vmax_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      double second = v[j];
      if (config_.amsgrad) {
        vmax[j] = std::max(vmax[j], v[j]);
        second = vmax[j];
      }
      const double denom = std::sqrt(second) / sqrt_bc2 + config_.eps;
      p.value[j] = static_cast<Real>(p.value[j] - step * m[j] / denom);
    }
  }
}

Tensor<float> stack_inputs(std::span<const InputStack> stacks) {
  if (stacks.empty()) throw ShapeError("stack_inputs: empty batch");
  const int rows = stacks[0].rows(), cols = stacks[0].cols();
  Tensor<float> out(static_cast<int>(stacks.size()), kInputChannels, rows, cols);
  const std::size_t item = static_cast<std::size_t>(kInputChannels) * rows * cols;
  for (std::size_t b = 0; b < stacks.size(); ++b) {
    if (stacks[b].rows() != rows || stacks[b].cols() != cols) {
      throw ShapeError("stack_inputs: item " + std::to_string(b) + " has a different slice size");
    }
    std::memcpy(out.data() + b * item, stacks[b].values().data(), item * sizeof(float));
  }
  return out;
}

std::vector<ProbMap<2>> unstack_probs(const Tensor<float>& probs) {
  std::vector<ProbMap<2>> out;
  out.reserve(probs.n());
  for (int b = 0; b < probs.n(); ++b) {
    ProbMap<2> m({probs.h(), probs.w()});
    for (int c = 0; c < kNumClasses; ++c) {
      std::memcpy(m.probs[c].data(), &probs.at(b, c, 0, 0), probs.plane() * sizeof(float));
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<ProbMap<2>> forward(const DenseNet<float>& net, std::span<const InputStack> stacks) {
  return unstack_probs(net.infer(stack_inputs(stacks)));
}

template <typename Real>
Real training_step(DenseNet<Real>& net, const Tensor<Real>& inputs, std::span<const LabelImage> gt,
                   Adam<Real>& optimizer, Tensor<Real>* probs_out) {
  net.zero_grad();
  Tensor<Real> probs = net.forward_train(inputs);
  Tensor<Real> dprobs;
  const Real loss = mse_loss(probs, gt, &dprobs);
  if (!std::isfinite(static_cast<double>(loss))) {
    throw NonFiniteLoss("non-finite training loss after " + std::to_string(optimizer.steps()) + " steps");
  }
  net.backward(dprobs);
  optimizer.step(net.parameters());
  if (probs_out) *probs_out = std::move(probs);
  return loss;
}

namespace {
constexpr char kMagic[8] = {'L', 'G', 'S', 'C', 'K', 'P', 'T', '\0'};
}

void save_checkpoint(const std::filesystem::path& path, const DenseNet<float>& net, const CheckpointInfo& info) {
  json header;
  header["config"] = net.config();
  header["epoch"] = info.epoch;
  header["validation_metric"] = info.validation_metric;
  header["extra"] = info.extra;
  json table = json::array();
  std::size_t offset = 0;
  for (const auto& p : net.parameters()) {
    table.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}, {"count", p.value.size()}});
    offset += p.value.size();
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t length = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : net.parameters()) {
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("short write on checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (length > (1u << 26)) throw std::runtime_error(path.string() + ": corrupt header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  const json header = json::parse(text);

  LoadedCheckpoint out{DenseNet<float>(header.at("config").get<BackboneConfig>()), {}};
  out.info.epoch = header.value("epoch", 0);
  out.info.validation_metric = header.value("validation_metric", 0.0);
  out.info.extra = header.value("extra", json::object());

  std::vector<float> payload;
  std::size_t total = 0;
  for (const auto& t : header.at("tensors")) total += t.at("count").get<std::size_t>();
  payload.resize(total);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total * sizeof(float)));
  if (!in) throw std::runtime_error(path.string() + ": truncated payload");

  std::unordered_map<std::string, json> by_name;
  for (const auto& t : header.at("tensors")) by_name[t.at("name").get<std::string>()] = t;
  for (auto& p : out.net.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw std::runtime_error(path.string() + ": missing tensor " + p.name);
    if (it->second.at("shape").get<std::vector<int>>() != p.shape) {
      throw std::runtime_error(path.string() + ": shape mismatch for " + p.name);
    }
    const auto offset = it->second.at("offset").get<std::size_t>();
    std::memcpy(p.value.data(), payload.data() + offset, p.value.size() * sizeof(float));
  }
  return out;
}

template float mse_loss<float>(const Tensor<float>&, std::span<const LabelImage>, Tensor<float>*);
template double mse_loss<double>(const Tensor<double>&, std::span<const LabelImage>, Tensor<double>*);
template class Adam<float>;
template class Adam<double>;
template float training_step<float>(DenseNet<float>&, const Tensor<float>&, std::span<const LabelImage>,
                                    Adam<float>&, Tensor<float>*);
template double training_step<double>(DenseNet<double>&, const Tensor<double>&, std::span<const LabelImage>,
                                      Adam<double>&, Tensor<double>*);

}  // namespace longiseg::model
