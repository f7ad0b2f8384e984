#pragma once

#include <random>
#include <vector>

#include "nfer/matrix.hpp"
#include "nfer/nn.hpp"

namespace nfer::model {

struct DualBackboneConfig {
  std::size_t input_dim = 64;
  std::vector<std::size_t> hidden_dims{128};
  std::size_t feature_dim_u = 64;
  std::size_t feature_dim_v = 64;
  std::size_t proj_dim = 64;
  double momentum = 0.99;
  std::size_t num_classes = 5;
  std::size_t landmark_count = 5;

  void validate() const;
};

struct ExpressionOutput {
  Matrix u;       // n x D_u
  Matrix logits;  // n x C
  Matrix p;       // softmax(logits)
};

struct LandmarkOutput {
  Matrix v;              // n x D_v, penultimate landmark features
  Matrix landmark_pred;  // n x 2L
};

/// A projection pass kept around for backpropagation.
struct ProjectionPass {
  Matrix q;  // unit rows
  Matrix raw;
  std::vector<double> norms;
  nn::Mlp::Cache cache;
};

/// Two disjoint backbones (expression, landmark), the classifier and
/// landmark-regression heads, the two query projection heads, and momentum
/// copies of the key-side encoders (backbone + projection head per view).
class ModelState {
 public:
  ModelState() = default;
  ModelState(const DualBackboneConfig& config, std::mt19937_64& rng);

  const DualBackboneConfig& config() const noexcept { return config_; }

  ExpressionOutput forward_expression(const Matrix& x, nn::Mlp::Cache* cache = nullptr) const;
  LandmarkOutput forward_landmark(const Matrix& x, nn::Mlp::Cache* cache = nullptr) const;

  /// Unit-norm key projections from the momentum encoders.
  Matrix key_expression(const Matrix& x) const;
  Matrix key_landmark(const Matrix& x) const;

  /// theta_key <- m * theta_key + (1 - m) * theta_query for every key encoder.
  void momentum_update(double m);

  /// Parameters updated by the optimizer, in a fixed order.
  std::vector<nn::Parameter*> parameters();
  /// Momentum-encoder parameters, in a fixed order.
  std::vector<nn::Parameter*> key_parameters();
  std::vector<const nn::Parameter*> all_parameters() const;
  std::vector<nn::Parameter*> all_parameters();

  nn::Mlp expression_backbone;
  nn::Mlp landmark_backbone;
  nn::Linear classifier;
  nn::Linear landmark_head;
  nn::Mlp query_u;
  nn::Mlp query_v;
  nn::Mlp key_expression_backbone;
  nn::Mlp key_landmark_backbone;
  nn::Mlp key_u;
  nn::Mlp key_v;

 private:
  DualBackboneConfig config_;
};

/// Runs `head` on `features` and normalizes each output row to unit length.
Matrix project(const Matrix& features, const nn::Mlp& head);
ProjectionPass project_for_training(const Matrix& features, const nn::Mlp& head);
/// Backpropagates dL/dq through normalization and the head; returns dL/dfeatures.
Matrix project_backward(const ProjectionPass& pass, nn::Mlp& head, const Matrix& dq);

}  // namespace nfer::model
