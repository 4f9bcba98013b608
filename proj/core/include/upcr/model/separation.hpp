#pragma once

#include <span>
#include <vector>

#include "upcr/autodiff/tensor.hpp"
#include "upcr/features/invariant_features.hpp"
#include "upcr/geom/rotation.hpp"
#include "upcr/geom/types.hpp"
#include "upcr/model/encoder.hpp"

namespace upcr::model {

/// Floor added inside the log ratio so underflowed probabilities stay finite.
inline constexpr double kLogFloor = 1e-12;

enum class RepresentationKind { global, invariant, pose_related, distribution };

struct Representation {
  std::vector<double> values;
  RepresentationKind tag = RepresentationKind::global;
};

Representation to_distribution(const Representation& rep);
/// Entrywise p·log(p/q); sums to KL(p‖q).
Representation pose_related_rep(const Representation& p, const Representation& q);

ad::Tensor to_distribution(const ad::Tensor& rep);
ad::Tensor pose_related_rep(const ad::Tensor& p, const ad::Tensor& q);

struct PoseTensors {
  ad::Tensor parameters;   // raw rotation parameters (identity offset included)
  ad::Tensor rotation;     // [3×3]
  ad::Tensor translation;  // [3]
};

/// h_β on Γ_μ. The rotation mode's identity parameter is added to the
/// head output, so a zero output decodes to the identity pose.
PoseTensors regress_pose(const ad::Tensor& gamma_mu, const BoundParams& params, geom::RotationMode mode,
                         double slope);

struct PosePrediction {
  geom::RotationParam rotation_param;
  geom::Vec3 translation;
  geom::RigidTransform decoded;
};

PosePrediction to_prediction(const PoseTensors& pose, geom::RotationMode mode);

/// A cloud with its parameter-independent inputs precomputed (the spatial
/// graph and the per-edge invariant features).
struct PreparedCloud {
  geom::PointCloud cloud;
  features::EdgeFeatures edges;
};

PreparedCloud prepare(const geom::PointCloud& cloud, const ModelConfig& config);

/// Γ_G, Γ_ν → Γ_μ → pose for one cloud.
PoseTensors cloud_pose(ad::Tape& tape, const PreparedCloud& cloud, const ModelConfig& config,
                       const BoundParams& params);

struct PairTensors {
  PoseTensors source, target;
  ad::Tensor source_canonical, target_canonical;  // X_c, Y_c
};

PairTensors forward_pair(ad::Tape& tape, const PreparedCloud& source, const PreparedCloud& target,
                         const ModelConfig& config, const BoundParams& params);

struct Registration {
  geom::RigidTransform transform;  // source → target
  geom::RigidTransform source_pose, target_pose;
  geom::PointCloud source_canonical, target_canonical;
};

Registration register_pair(const geom::PointCloud& source, const geom::PointCloud& target,
                           const ModelParams& params);
Registration register_pair(const PreparedCloud& source, const PreparedCloud& target, const ModelParams& params);

}  // namespace upcr::model
