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
#include <sstream>

#include "fpem/errors.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace fpem::nn {
namespace {

using testing::max_relative_error;
using testing::random_matrix;
using testing::random_mlp;
using testing::random_target;

TEST(MlpTest, IdentityLayerReturnsInput) {
  Mlp net({DenseLayer{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3)}});
  const std::vector<double> x = {0.5, -2.0, 7.25};
  const Eigen::VectorXd y = net.forward(x);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(y(i), x[i]);
}

TEST(MlpTest, ReluZeroesNegativePreActivations) {
  Mlp net({DenseLayer{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Constant(2, -5.0)},
           DenseLayer{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)}});
  const Eigen::VectorXd y = net.forward(std::vector<double>{1.0, 2.0});
  EXPECT_EQ(y(0), 0.0);
  EXPECT_EQ(y(1), 0.0);
}

TEST(MlpTest, MatchesHandComputedProduct) {
  // W1 = [[1,-2],[0.5,3]], b1 = [0.1,-4]; W2 = [[2,1]], b2 = [-1]; x = [1,0.5].
  // z1 = [1-1+0.1, 0.5+1.5-4] = [0.1, -2]; relu = [0.1, 0]; y = 0.2 - 1 = -0.8.
  Eigen::MatrixXd w1(2, 2);
  w1 << 1, -2, 0.5, 3;
  Eigen::VectorXd b1(2);
  b1 << 0.1, -4;
  Eigen::MatrixXd w2(1, 2);
  w2 << 2, 1;
  Mlp net({DenseLayer{w1, b1}, DenseLayer{w2, Eigen::VectorXd::Constant(1, -1.0)}});
  EXPECT_NEAR(net.forward(std::vector<double>{1.0, 0.5})(0), -0.8, 1e-15);
}

TEST(MlpTest, BatchForwardMatchesSingle) {
  RngStream rng(1, 0);
  Mlp net({5, 16, 16, 3}, rng);
  const Eigen::MatrixXd x = random_matrix(5, 7, rng);
  const Eigen::MatrixXd y = net.forward_batch(x);
  for (int i = 0; i < 7; ++i) {
    const Eigen::VectorXd xi = x.col(i);
    const Eigen::VectorXd yi = net.forward(std::span<const double>(xi.data(), 5));
    EXPECT_LT((yi - y.col(i)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MlpTest, DimensionMismatchThrows) {
  RngStream rng(2, 0);
  Mlp net({4, 8, 2}, rng);
  EXPECT_THROW(net.forward(std::vector<double>(3, 0.0)), std::invalid_argument);
  EXPECT_THROW(net.forward_batch(Eigen::MatrixXd::Zero(5, 2)), std::invalid_argument);
  EXPECT_THROW(Mlp({DenseLayer{Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3)},
                    DenseLayer{Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1)}}),
               std::invalid_argument);
}

TEST(MlpTest, DeterministicInitAndFiniteOutputs) {
  RngStream a(9, 0), b(9, 0);
  Mlp n1({11, 64, 2}, a), n2({11, 64, 2}, b);
  RngStream rng(3, 0);
  const Eigen::MatrixXd x = random_matrix(11, 20, rng) * 100.0;
  const Eigen::MatrixXd y1 = n1.forward_batch(x);
  EXPECT_TRUE(y1.allFinite());
  EXPECT_EQ(y1, n2.forward_batch(x));
}

TEST(MlpTest, AddOutputUnitAppendsZeroLogit) {
  RngStream rng(4, 0);
  Mlp net({3, 8, 2}, rng);
  const std::vector<double> x = {0.2, -0.4, 1.0};
  const Eigen::VectorXd before = net.forward(x);
  net.add_output_unit();
  const Eigen::VectorXd after = net.forward(x);
  ASSERT_EQ(after.size(), 3);
  EXPECT_EQ(after(0), before(0));
  EXPECT_EQ(after(1), before(1));
  EXPECT_EQ(after(2), 0.0);
}

TEST(LossTest, SoftmaxIsADistribution) {
  RngStream rng(5, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd z = random_matrix(6, 1, rng).col(0) * 50.0;
    const Eigen::VectorXd p = softmax(z);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
}

TEST(LossTest, ConfidentCorrectPredictionGivesZeroLossAndGradient) {
  // Head logits of +-1e3 saturate the softmax to a one-hot; the off-target
  // probabilities underflow to denormals at worst.
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 2);
  Eigen::VectorXd b(3);
  b << -1e3, 1e3, -1e3;
  Mlp net({DenseLayer{w, b}});
  const LossAndGradient r =
      backward(net, Eigen::MatrixXd::Ones(2, 1), CrossEntropyTarget{{1}});
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_LT(r.gradients[0].bias.cwiseAbs().maxCoeff(), 1e-300);
  EXPECT_LT(r.gradients[0].weight.cwiseAbs().maxCoeff(), 1e-300);
}

TEST(LossTest, UniformPredictionOverFourClassesGivesLn4) {
  Mlp net({DenseLayer{Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4)}});
  for (int label = 0; label < 4; ++label) {
    const double loss =
        loss_value(net, Eigen::MatrixXd::Ones(3, 1), CrossEntropyTarget{{label}});
    EXPECT_NEAR(loss, std::log(4.0), 1e-12);
  }
}

TEST(LossTest, ShapeErrorsThrow) {
  RngStream rng(6, 0);
  Mlp net({3, 4, 2}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 2);
  EXPECT_THROW(backward(net, x, CrossEntropyTarget{{0}}), std::invalid_argument);
  EXPECT_THROW(backward(net, x, CrossEntropyTarget{{0, 2}}), std::invalid_argument);
  EXPECT_THROW(backward(net, x, SquaredErrorTarget{Eigen::MatrixXd::Zero(3, 2)}), std::invalid_argument);
}

TEST(LossTest, NonFiniteLossThrows) {
  Mlp net({DenseLayer{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)}});
  Eigen::MatrixXd x(2, 1);
  x << std::nan(""), 1.0;
  EXPECT_THROW(backward(net, x, SquaredErrorTarget{Eigen::MatrixXd::Zero(2, 1)}), DivergenceError);
}

TEST(GradientTest, MatchesCentralDifferencesForEveryLossKind) {
  RngStream rng(7, 0);
  for (int trial = 0; trial < 60; ++trial) {
    const int depth = 1 + static_cast<int>(rng.uniform_int(3));
    std::vector<int> sizes;
    for (int l = 0; l <= depth; ++l) sizes.push_back(1 + static_cast<int>(rng.uniform_int(16)));
    const Mlp net = random_mlp(sizes, rng);
    const int batch = 1 + static_cast<int>(rng.uniform_int(5));
    const Eigen::MatrixXd x = random_matrix(sizes.front(), batch, rng);
    const int kind = trial % 3;
    const LossTarget target = random_target(kind, sizes.back(), batch, rng);
    EXPECT_LT(max_relative_error(net, x, target), 1e-4)
        << "trial " << trial << " kind " << kind << " depth " << depth;
  }
}

TEST(OptimizerTest, SgdStepIsExact) {
  Mlp net({DenseLayer{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1)}});
  Gradients g = zeros_like(net);
  g[0].weight(0, 0) = 2.0;
  OptimizerState state({OptimizerKind::kSgd, 0.1});
  apply_update(net, g, state);
  EXPECT_DOUBLE_EQ(net.layers()[0].weight(0, 0), 0.8);
  EXPECT_EQ(net.layers()[0].bias(0), 0.0);
}

TEST(OptimizerTest, ZeroGradientLeavesParamsUnchanged) {
  RngStream rng(8, 0);
  Mlp net({4, 8, 3}, rng);
  const Mlp before = net;
  OptimizerState state({OptimizerKind::kSgd, 0.5});
  apply_update(net, zeros_like(net), state);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    EXPECT_EQ(net.layers()[l].weight, before.layers()[l].weight);
    EXPECT_EQ(net.layers()[l].bias, before.layers()[l].bias);
  }
}

TEST(OptimizerTest, NonFiniteGradientIsRejected) {
  RngStream rng(10, 0);
  Mlp net({2, 3, 1}, rng);
  const Mlp before = net;
  Gradients g = zeros_like(net);
  g[1].bias(0) = std::numeric_limits<double>::infinity();
  OptimizerState state;
  EXPECT_THROW(apply_update(net, g, state), DivergenceError);
  EXPECT_EQ(net.layers()[0].weight, before.layers()[0].weight);
  EXPECT_EQ(state.step, 0);
}

// Fit a linear layer to the constant target 3: loss 0.5 (w*1 + b - 3)^2 has
// closed-form minimum 0 on the line w + b = 3.
void minimize_bowl(OptimizerConfig config, int max_steps) {
  Mlp net({DenseLayer{Eigen::MatrixXd::Constant(1, 1, -2.0), Eigen::VectorXd::Constant(1, 5.0)}});
  OptimizerState state(config);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 1);
  const SquaredErrorTarget target{Eigen::MatrixXd::Constant(1, 1, 3.0)};
  double loss = loss_value(net, x, target);
  int steps = 0;
  while (loss >= 1e-6 && steps < max_steps) {
    apply_update(net, backward(net, x, target).gradients, state);
    loss = loss_value(net, x, target);
    ++steps;
  }
  EXPECT_LT(loss, 1e-6) << "after " << steps << " steps";
}

TEST(OptimizerTest, SgdMinimizesQuadraticBowl) { minimize_bowl({OptimizerKind::kSgd, 0.1}, 200); }
TEST(OptimizerTest, AdamMinimizesQuadraticBowl) { minimize_bowl({OptimizerKind::kAdam, 0.05}, 5000); }

TEST(OptimizerTest, AdamFirstStepMovesByLearningRate) {
  // With bias correction the first Adam step is lr * sign(g) (up to epsilon).
  Mlp net({DenseLayer{Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1)}});
  Gradients g = zeros_like(net);
  g[0].weight(0, 0) = 37.0;
  OptimizerState state({OptimizerKind::kAdam, 0.01});
  apply_update(net, g, state);
  EXPECT_NEAR(net.layers()[0].weight(0, 0), 0.99, 1e-9);
  EXPECT_EQ(net.layers()[0].bias(0), 0.0);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  RngStream rng(11, 0);
  const Mlp net = random_mlp({11, 64, 2}, rng);
  std::stringstream buf;
  write_mlp(buf, net);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 8), "FPEMCKPT");
  EXPECT_EQ(static_cast<int>(bytes[8]), 1);
  EXPECT_EQ(bytes.size(), 8u + 1 + 4 + 2 * 8 + 8 * net.parameter_count());
  const Mlp back = read_mlp(buf);
  ASSERT_EQ(back.sizes(), net.sizes());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    EXPECT_EQ(back.layers()[l].weight, net.layers()[l].weight);
    EXPECT_EQ(back.layers()[l].bias, net.layers()[l].bias);
  }
}

TEST(CheckpointTest, LayoutIsLittleEndianRowMajor) {
  Eigen::MatrixXd w(2, 1);
  w << 1.0, 2.0;
  Mlp net({DenseLayer{w, Eigen::VectorXd::Constant(2, -1.0)}});
  std::stringstream buf;
  write_mlp(buf, net);
  const std::string b = buf.str();
  // layer count 1, dims (in=1, out=2)
  EXPECT_EQ(b.substr(9, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(b.substr(13, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(b.substr(17, 4), std::string("\x02\x00\x00\x00", 4));
  // 1.0 = 0x3FF0000000000000, stored low byte first.
  EXPECT_EQ(b.substr(21, 8), std::string("\x00\x00\x00\x00\x00\x00\xf0\x3f", 8));
  EXPECT_EQ(b.substr(29, 8), std::string("\x00\x00\x00\x00\x00\x00\x00\x40", 8));
  EXPECT_EQ(b.substr(37, 8), std::string("\x00\x00\x00\x00\x00\x00\xf0\xbf", 8));
}

TEST(CheckpointTest, BadInputIsRejected) {
  RngStream rng(12, 0);
  const Mlp net({3, 4, 2}, rng);
  std::stringstream good;
  write_mlp(good, net);
  const std::string bytes = good.str();

  std::stringstream bad_magic("FPEMXXXX" + bytes.substr(8));
  EXPECT_THROW(read_mlp(bad_magic), FormatError);
  std::string v2 = bytes;
  v2[8] = 2;
  std::stringstream bad_version(v2);
  EXPECT_THROW(read_mlp(bad_version), FormatError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_mlp(truncated), FormatError);
}

}  // namespace
}  // namespace fpem::nn
