#include "upcr/model/separation.hpp"

#include <cmath>
#include <stdexcept>

#include "upcr/autodiff/ops.hpp"
#include "upcr/geom/chamfer.hpp"

namespace upcr::model {
namespace {

geom::PointCloud cloud_from(const ad::Tensor& rows) { return geom::PointCloud::from_rows(rows.data()); }

ad::Tensor points_tensor(ad::Tape& tape, const geom::PointCloud& cloud) {
  return tape.constant(ad::Array({cloud.size(), 3}, cloud.to_rows()));
}

}  // namespace

Representation to_distribution(const Representation& rep) {
  ad::Tape tape;
  const auto p = to_distribution(tape.constant(ad::Array::vector(rep.values)));
  return {{p.data().begin(), p.data().end()}, RepresentationKind::distribution};
}

Representation pose_related_rep(const Representation& p, const Representation& q) {
  if (p.values.size() != q.values.size())
    throw ad::ShapeError("distribution widths differ: " + std::to_string(p.values.size()) + " vs " +
                         std::to_string(q.values.size()));
  ad::Tape tape;
  const auto mu =
      pose_related_rep(tape.constant(ad::Array::vector(p.values)), tape.constant(ad::Array::vector(q.values)));
  return {{mu.data().begin(), mu.data().end()}, RepresentationKind::pose_related};
}

ad::Tensor to_distribution(const ad::Tensor& rep) { return ad::softmax(ad::reshape(rep, {rep.size()})); }

ad::Tensor pose_related_rep(const ad::Tensor& p, const ad::Tensor& q) {
  if (p.shape() != q.shape())
    throw ad::ShapeError("distribution shapes differ: " + ad::to_string(p.shape()) + " vs " +
                         ad::to_string(q.shape()));
  return ad::mul(p, ad::log(ad::div(ad::add_scalar(p, kLogFloor), ad::add_scalar(q, kLogFloor))));
}

PoseTensors regress_pose(const ad::Tensor& gamma_mu, const BoundParams& params, geom::RotationMode mode,
                         double slope) {
  if (params.head_w.empty()) throw std::invalid_argument("pose head has no layers");
  if (gamma_mu.size() != params.head_w.front().rows())
    throw ad::ShapeError("head expects width " + std::to_string(params.head_w.front().rows()) + ", got " +
                         std::to_string(gamma_mu.size()));
  auto h = ad::reshape(gamma_mu, {1, gamma_mu.size()});
  for (std::size_t i = 0; i < params.head_w.size(); ++i) {
    h = ad::add_row(ad::matmul(h, params.head_w[i]), params.head_b[i]);
    if (i + 1 < params.head_w.size()) h = ad::leaky_relu(h, slope);
  }
  const std::size_t rd = geom::rotation_dim(mode);
  if (h.cols() != rd + 3)
    throw ad::ShapeError("head output width " + std::to_string(h.cols()) + " does not fit " +
                         std::string(geom::to_string(mode)) + " mode");
  auto& tape = *gamma_mu.tape();
  const auto offset = tape.constant(ad::Array::vector(geom::identity_parameter(mode)));
  PoseTensors out;
  out.parameters = ad::add(ad::reshape(ad::slice_cols(h, 0, rd), {rd}), offset);
  out.rotation = geom::decode_rotation(out.parameters, mode);
  out.translation = ad::reshape(ad::slice_cols(h, rd, 3), {3});
  return out;
}

PosePrediction to_prediction(const PoseTensors& pose, geom::RotationMode mode) {
  PosePrediction p;
  p.rotation_param = geom::RotationParam(mode, {pose.parameters.data().begin(), pose.parameters.data().end()});
  const auto r = pose.rotation.data();
  const auto t = pose.translation.data();
  p.translation = geom::Vec3(t[0], t[1], t[2]);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) p.decoded.rotation(i, j) = r[static_cast<std::size_t>(3 * i + j)];
  p.decoded.translation = p.translation;
  return p;
}

PreparedCloud prepare(const geom::PointCloud& cloud, const ModelConfig& config) {
  if (cloud.size() <= config.encoder.k)
    throw std::invalid_argument("cloud of " + std::to_string(cloud.size()) + " points is too small for k = " +
                                std::to_string(config.encoder.k));
  return {cloud, features::compute_edge_features(cloud, config.features, config.encoder.k)};
}

PoseTensors cloud_pose(ad::Tape& tape, const PreparedCloud& cloud, const ModelConfig& config,
                       const BoundParams& params) {
  const auto global = encode_global(tape, cloud.cloud, config.encoder, params, &cloud.edges.graph);
  const auto invariant = encode_invariant(tape, cloud.edges, config.encoder, params);
  auto mu = pose_related_rep(to_distribution(invariant), to_distribution(global));
  if (config.pose_input == PoseInput::width_scaled) mu = ad::scale(mu, static_cast<double>(config.encoder.m));
  return regress_pose(mu, params, config.rotation, config.encoder.slope);
}

PairTensors forward_pair(ad::Tape& tape, const PreparedCloud& source, const PreparedCloud& target,
                         const ModelConfig& config, const BoundParams& params) {
  PairTensors out;
  out.source = cloud_pose(tape, source, config, params);
  out.target = cloud_pose(tape, target, config, params);
  out.source_canonical =
      geom::canonicalize(points_tensor(tape, source.cloud), out.source.rotation, out.source.translation);
  out.target_canonical =
      geom::canonicalize(points_tensor(tape, target.cloud), out.target.rotation, out.target.translation);
  return out;
}

Registration register_pair(const PreparedCloud& source, const PreparedCloud& target, const ModelParams& params) {
  ad::Tape tape;
  const auto bound = bind(tape, params, false);
  const auto& config = params.config();
  const auto pair = forward_pair(tape, source, target, config, bound);
  Registration r;
  r.source_pose = to_prediction(pair.source, config.rotation).decoded;
  r.target_pose = to_prediction(pair.target, config.rotation).decoded;
  r.transform = geom::compose_relative(r.source_pose, r.target_pose);
  r.source_canonical = cloud_from(pair.source_canonical);
  r.target_canonical = cloud_from(pair.target_canonical);
  return r;
}

Registration register_pair(const geom::PointCloud& source, const geom::PointCloud& target,
                           const ModelParams& params) {
  return register_pair(prepare(source, params.config()), prepare(target, params.config()), params);
}

}  // namespace upcr::model
