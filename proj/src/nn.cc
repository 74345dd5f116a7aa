// Copyright 2026 The FPEM Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fpem/nn.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "fpem/errors.h"

namespace fpem::nn {

Mlp::Mlp(const std::vector<int>& sizes, RngStream& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("mlp: need input and output sizes");
  for (int s : sizes) {
    if (s < 1) throw std::invalid_argument("mlp: layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / in);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { check_shapes(); }

void Mlp::check_shapes() const {
  if (layers_.empty()) throw std::invalid_argument("mlp: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows())
      throw std::invalid_argument("mlp: bias size mismatch at layer " + std::to_string(l));
    if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows())
      throw std::invalid_argument("mlp: adjacent layer dims disagree at layer " + std::to_string(l));
  }
}

int Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
int Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

std::vector<int> Mlp::sizes() const {
  std::vector<int> s;
  if (layers_.empty()) return s;
  s.push_back(input_dim());
  for (const DenseLayer& l : layers_) s.push_back(static_cast<int>(l.weight.rows()));
  return s;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Eigen::VectorXd Mlp::forward(std::span<const double> input) const {
  if (static_cast<int>(input.size()) != input_dim())
    throw std::invalid_argument("mlp: input has " + std::to_string(input.size()) +
                                " entries, expected " + std::to_string(input_dim()));
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].weight * a + layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_dim()) throw std::invalid_argument("mlp: batch input dim mismatch");
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

void Mlp::add_output_unit() {
  DenseLayer& head = layers_.back();
  head.weight.conservativeResize(head.weight.rows() + 1, Eigen::NoChange);
  head.weight.row(head.weight.rows() - 1).setZero();
  head.bias.conservativeResize(head.bias.size() + 1);
  head.bias(head.bias.size() - 1) = 0.0;
}

bool Mlp::all_finite() const {
  for (const DenseLayer& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Gradients zeros_like(const Mlp& net) {
  Gradients g;
  for (const DenseLayer& l : net.layers())
    g.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                 Eigen::VectorXd::Zero(l.bias.size())});
  return g;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

namespace {

Eigen::Index batch_size(const LossTarget& target) {
  return std::visit(
      [](const auto& t) -> Eigen::Index {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, CrossEntropyTarget>) return t.labels.size();
        else if constexpr (std::is_same_v<T, SelectedSquaredErrorTarget>) return t.actions.size();
        else return t.targets.cols();
      },
      target);
}

// Loss and dL/d(outputs) for the head.
double head_loss(const Eigen::MatrixXd& out, const LossTarget& target, Eigen::MatrixXd* grad) {
  const Eigen::Index n = out.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad != nullptr) grad->setZero(out.rows(), n);
  double loss = 0.0;
  if (const auto* ce = std::get_if<CrossEntropyTarget>(&target)) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = ce->labels[i];
      if (y < 0 || y >= out.rows()) throw std::invalid_argument("cross-entropy label out of range");
      const Eigen::VectorXd z = out.col(i);
      const double m = z.maxCoeff();
      const double lse = m + std::log((z.array() - m).exp().sum());
      loss += lse - z(y);
      if (grad != nullptr) {
        grad->col(i) = (z.array() - lse).exp().matrix() * inv_n;
        (*grad)(y, i) -= inv_n;
      }
    }
  } else if (const auto* se = std::get_if<SelectedSquaredErrorTarget>(&target)) {
    if (se->targets.size() != se->actions.size())
      throw std::invalid_argument("selected squared error: size mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = se->actions[i];
      if (a < 0 || a >= out.rows()) throw std::invalid_argument("selected action out of range");
      const double d = out(a, i) - se->targets[i];
      loss += 0.5 * d * d;
      if (grad != nullptr) (*grad)(a, i) = d * inv_n;
    }
  } else {
    const auto& sq = std::get<SquaredErrorTarget>(target);
    if (sq.targets.rows() != out.rows() || sq.targets.cols() != n)
      throw std::invalid_argument("squared error: target shape mismatch");
    const Eigen::MatrixXd d = out - sq.targets;
    loss = 0.5 * d.squaredNorm();
    if (grad != nullptr) *grad = d * inv_n;
  }
  loss *= inv_n;
  if (!std::isfinite(loss)) throw DivergenceError("non-finite loss");
  return loss;
}

}  // namespace

double loss_value(const Mlp& net, const Eigen::MatrixXd& inputs, const LossTarget& target) {
  if (batch_size(target) != inputs.cols()) throw std::invalid_argument("loss: batch size mismatch");
  return head_loss(net.forward_batch(inputs), target, nullptr);
}

LossAndGradient backward(const Mlp& net, const Eigen::MatrixXd& inputs, const LossTarget& target) {
  if (inputs.rows() != net.input_dim()) throw std::invalid_argument("backward: input dim mismatch");
  if (batch_size(target) != inputs.cols()) throw std::invalid_argument("backward: batch size mismatch");
  const auto& layers = net.layers();
  const std::size_t L = layers.size();
  // activations[l] is the input of layer l; activations[L] the output.
  std::vector<Eigen::MatrixXd> activations(L + 1);
  activations[0] = inputs;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = layers[l].weight * activations[l];
    z.colwise() += layers[l].bias;
    if (l + 1 < L) z = z.cwiseMax(0.0);
    activations[l + 1] = std::move(z);
  }
  LossAndGradient result;
  Eigen::MatrixXd delta;
  result.loss = head_loss(activations[L], target, &delta);
  result.gradients.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    result.gradients[l].weight = delta * activations[l].transpose();
    result.gradients[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream = layers[l].weight.transpose() * delta;
    // ReLU derivative from the post-activation value.
    delta = (activations[l].array() > 0.0).select(upstream, 0.0);
  }
  return result;
}

void apply_update(Mlp& net, const Gradients& grads, OptimizerState& state) {
  auto& layers = net.layers();
  if (grads.size() != layers.size()) throw std::invalid_argument("apply_update: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads[l].weight.rows() != layers[l].weight.rows() ||
        grads[l].weight.cols() != layers[l].weight.cols() ||
        grads[l].bias.size() != layers[l].bias.size())
      throw std::invalid_argument("apply_update: gradient shape mismatch at layer " + std::to_string(l));
    if (!grads[l].weight.allFinite() || !grads[l].bias.allFinite())
      throw DivergenceError("apply_update: non-finite gradient at layer " + std::to_string(l));
  }
  const OptimizerConfig& c = state.config;
  if (c.kind == OptimizerKind::kSgd) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight -= c.learning_rate * grads[l].weight;
      layers[l].bias -= c.learning_rate * grads[l].bias;
    }
    ++state.step;
    return;
  }
  if (state.first_moment.empty()) {
    state.first_moment = zeros_like(net);
    state.second_moment = zeros_like(net);
  } else if (state.first_moment.size() != layers.size() ||
             state.first_moment.back().bias.size() != layers.back().bias.size()) {
    throw std::invalid_argument("apply_update: optimizer moments do not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const double step_size = c.learning_rate * std::sqrt(correction2) / correction1;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    DenseLayer& m = state.first_moment[l];
    DenseLayer& v = state.second_moment[l];
    m.weight = c.beta1 * m.weight + (1.0 - c.beta1) * grads[l].weight;
    m.bias = c.beta1 * m.bias + (1.0 - c.beta1) * grads[l].bias;
    v.weight = c.beta2 * v.weight + (1.0 - c.beta2) * grads[l].weight.cwiseAbs2();
    v.bias = c.beta2 * v.bias + (1.0 - c.beta2) * grads[l].bias.cwiseAbs2();
    const double eps_hat = c.epsilon * std::sqrt(correction2);
    layers[l].weight.array() -= step_size * m.weight.array() / (v.weight.array().sqrt() + eps_hat);
    layers[l].bias.array() -= step_size * m.bias.array() / (v.bias.array().sqrt() + eps_hat);
  }
}

namespace {

constexpr char kMagic[8] = {'F', 'P', 'E', 'M', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t x) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof(bits));
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint truncated");
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return x;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double x;
  std::memcpy(&x, &bits, sizeof(x));
  return x;
}

}  // namespace

void write_mlp(std::ostream& out, const Mlp& net) {
  out.write(kMagic, sizeof(kMagic));
  out.put(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(net.num_layers()));
  for (const DenseLayer& l : net.layers()) {
    put_u32(out, static_cast<std::uint32_t>(l.weight.cols()));
    put_u32(out, static_cast<std::uint32_t>(l.weight.rows()));
  }
  for (const DenseLayer& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put_f64(out, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f64(out, l.bias(r));
  }
}

Mlp read_mlp(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw FormatError("checkpoint: bad magic");
  const int version = in.get();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t n = get_u32(in);
  if (n == 0 || n > 64) throw FormatError("checkpoint: implausible layer count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(n);
  for (auto& d : dims) {
    d.first = get_u32(in);
    d.second = get_u32(in);
    if (d.first == 0 || d.second == 0 || d.first > (1u << 20) || d.second > (1u << 20))
      throw FormatError("checkpoint: implausible layer dims");
  }
  std::vector<DenseLayer> layers;
  for (const auto& [cols, rows] : dims) {
    DenseLayer l{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) l.weight(r, c) = get_f64(in);
    for (std::uint32_t r = 0; r < rows; ++r) l.bias(r) = get_f64(in);
    layers.push_back(std::move(l));
  }
  try {
    return Mlp(std::move(layers));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

void save_mlp(const std::string& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_mlp(out, net);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_mlp(in);
}

}  // namespace fpem::nn
