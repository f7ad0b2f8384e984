#include "nfer/model.hpp"

#include "nfer/core.hpp"
#include "nfer/kernels.hpp"

namespace nfer::model {

void DualBackboneConfig::validate() const {
  if (input_dim == 0) throw RangeError("input_dim", "must be positive");
  if (hidden_dims.empty()) throw RangeError("hidden_dims", "need at least one hidden layer");
  if (feature_dim_u == 0 || feature_dim_v == 0) throw RangeError("feature_dim", "must be positive");
  if (proj_dim < 2) throw RangeError("proj_dim", "must be at least 2");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw RangeError("momentum", "must lie in [0,1)");
  if (num_classes < 2) throw RangeError("num_classes", "must be at least 2");
}

namespace {
std::vector<std::size_t> backbone_dims(const DualBackboneConfig& c, std::size_t out) {
  std::vector<std::size_t> dims{c.input_dim};
  dims.insert(dims.end(), c.hidden_dims.begin(), c.hidden_dims.end());
  dims.push_back(out);
  return dims;
}

void blend(nn::Mlp& key, const nn::Mlp& query, double m) {
  auto kp = key.parameters();
  auto qp = query.parameters();
  for (std::size_t i = 0; i < kp.size(); ++i) {
    auto k = kp[i]->value.values();
    auto q = qp[i]->value.values();
    for (std::size_t j = 0; j < k.size(); ++j) k[j] = m * k[j] + (1.0 - m) * q[j];
  }
}
}  // namespace

ModelState::ModelState(const DualBackboneConfig& config, std::mt19937_64& rng) : config_(config) {
  config_.validate();
  expression_backbone = nn::Mlp(backbone_dims(config_, config_.feature_dim_u), rng);
  landmark_backbone = nn::Mlp(backbone_dims(config_, config_.feature_dim_v), rng);
  classifier = nn::Linear(config_.feature_dim_u, config_.num_classes, rng);
  landmark_head = nn::Linear(config_.feature_dim_v, 2 * config_.landmark_count, rng);
  query_u = nn::Mlp({config_.feature_dim_u, config_.feature_dim_u, config_.proj_dim}, rng);
  query_v = nn::Mlp({config_.feature_dim_v, config_.feature_dim_v, config_.proj_dim}, rng);
  key_expression_backbone = expression_backbone;
  key_landmark_backbone = landmark_backbone;
  key_u = query_u;
  key_v = query_v;
}

ExpressionOutput ModelState::forward_expression(const Matrix& x, nn::Mlp::Cache* cache) const {
  if (x.cols() != config_.input_dim) throw ShapeError("expression backbone: input width mismatch");
  ExpressionOutput out;
  out.u = expression_backbone.forward(x, cache);
  out.logits = classifier.forward(out.u);
  out.p = kernels::softmax_rows(out.logits);
  return out;
}

LandmarkOutput ModelState::forward_landmark(const Matrix& x, nn::Mlp::Cache* cache) const {
  if (x.cols() != config_.input_dim) throw ShapeError("landmark backbone: input width mismatch");
  LandmarkOutput out;
  out.v = landmark_backbone.forward(x, cache);
  out.landmark_pred = landmark_head.forward(out.v);
  return out;
}

Matrix ModelState::key_expression(const Matrix& x) const {
  return project(key_expression_backbone.forward(x), key_u);
}

Matrix ModelState::key_landmark(const Matrix& x) const {
  return project(key_landmark_backbone.forward(x), key_v);
}

void ModelState::momentum_update(double m) {
  if (!(m >= 0.0 && m < 1.0)) throw RangeError("momentum", "must lie in [0,1)");
  blend(key_expression_backbone, expression_backbone, m);
  blend(key_landmark_backbone, landmark_backbone, m);
  blend(key_u, query_u, m);
  blend(key_v, query_v, m);
}

std::vector<nn::Parameter*> ModelState::parameters() {
  std::vector<nn::Parameter*> out;
  auto add = [&](std::vector<nn::Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  add(expression_backbone.parameters());
  add(landmark_backbone.parameters());
  add(classifier.parameters());
  add(landmark_head.parameters());
  add(query_u.parameters());
  add(query_v.parameters());
  return out;
}

std::vector<nn::Parameter*> ModelState::key_parameters() {
  std::vector<nn::Parameter*> out;
  auto add = [&](std::vector<nn::Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  add(key_expression_backbone.parameters());
  add(key_landmark_backbone.parameters());
  add(key_u.parameters());
  add(key_v.parameters());
  return out;
}

std::vector<nn::Parameter*> ModelState::all_parameters() {
  auto out = parameters();
  auto k = key_parameters();
  out.insert(out.end(), k.begin(), k.end());
  return out;
}

std::vector<const nn::Parameter*> ModelState::all_parameters() const {
  auto ps = const_cast<ModelState*>(this)->all_parameters();
  return {ps.begin(), ps.end()};
}

Matrix project(const Matrix& features, const nn::Mlp& head) {
  if (features.cols() != head.in_features()) throw ShapeError("projection head: feature width mismatch");
  return nn::l2_normalize_rows(head.forward(features));
}

ProjectionPass project_for_training(const Matrix& features, const nn::Mlp& head) {
  if (features.cols() != head.in_features()) throw ShapeError("projection head: feature width mismatch");
  ProjectionPass pass;
  pass.raw = head.forward(features, &pass.cache);
  pass.q = nn::l2_normalize_rows(pass.raw, &pass.norms);
  return pass;
}

Matrix project_backward(const ProjectionPass& pass, nn::Mlp& head, const Matrix& dq) {
  return head.backward(pass.cache, nn::l2_normalize_backward(pass.q, pass.norms, dq));
}

}  // namespace nfer::model
