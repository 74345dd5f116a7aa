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

#ifndef FPEM_NN_H_
#define FPEM_NN_H_

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fpem/rng.h"

// Dense multilayer perceptrons with ReLU hidden layers and a linear head,
// trained by hand-written backpropagation. Batches are column-major: each
// column of an input matrix is one sample.
namespace fpem::nn {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

class Mlp {
 public:
  Mlp() = default;
  // sizes = {input, hidden..., output}; He-uniform weights, zero biases.
  Mlp(const std::vector<int>& sizes, RngStream& rng);
  explicit Mlp(std::vector<DenseLayer> layers);

  int input_dim() const;
  int output_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  std::vector<int> sizes() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  // Throws std::invalid_argument on dimension mismatch.
  Eigen::VectorXd forward(std::span<const double> input) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

  // Appends an output unit with zero weights and bias (a zero logit).
  void add_output_unit();
  bool all_finite() const;

 private:
  void check_shapes() const;
  std::vector<DenseLayer> layers_;
};

using Gradients = std::vector<DenseLayer>;
Gradients zeros_like(const Mlp& net);

// Mean softmax cross-entropy of the outputs against class labels.
struct CrossEntropyTarget {
  std::vector<int> labels;
};
// Mean of 0.5 * (output[action] - target)^2; other outputs get no gradient.
struct SelectedSquaredErrorTarget {
  std::vector<int> actions;
  std::vector<double> targets;
};
// Mean over samples of 0.5 * ||output - target||^2.
struct SquaredErrorTarget {
  Eigen::MatrixXd targets;
};
using LossTarget = std::variant<CrossEntropyTarget, SelectedSquaredErrorTarget, SquaredErrorTarget>;

struct LossAndGradient {
  double loss = 0.0;
  Gradients gradients;
};

// Throws std::invalid_argument on shape mismatch and DivergenceError when the
// loss is not finite.
LossAndGradient backward(const Mlp& net, const Eigen::MatrixXd& inputs, const LossTarget& target);
double loss_value(const Mlp& net, const Eigen::MatrixXd& inputs, const LossTarget& target);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  std::int64_t step = 0;
  Gradients first_moment;
  Gradients second_moment;

  explicit OptimizerState(OptimizerConfig c = {}) : config(c) {}
};

// SGD: p <- p - lr * g. Adam: bias-corrected moment recursion. Rejects
// non-finite gradients with DivergenceError, leaving params untouched.
void apply_update(Mlp& net, const Gradients& grads, OptimizerState& state);

// Binary checkpoint: "FPEMCKPT", version byte, u32 layer count, per layer
// u32 (in, out), then per layer the row-major weights followed by the
// biases, all little-endian IEEE-754 doubles.
inline constexpr std::uint8_t kCheckpointVersion = 1;
void write_mlp(std::ostream& out, const Mlp& net);
// Throws FormatError on bad magic, version or truncation.
Mlp read_mlp(std::istream& in);
void save_mlp(const std::string& path, const Mlp& net);
Mlp load_mlp(const std::string& path);

}  // namespace fpem::nn

#endif  // FPEM_NN_H_
