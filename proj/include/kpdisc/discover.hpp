#pragma once

#include "kpdisc/data.hpp"
#include "kpdisc/model.hpp"
#include "kpdisc/tracks.hpp"

#include <vector>

namespace kpdisc {

struct DiscoverOptions {
  int n_agents = 1;    // peaks per heatmap; >1 for visually identical agents
  int region = 0;      // suppression half-width in cells; 0 picks 4 sigma
  int batch_size = 16;
};

/// Runs the pose branch over every frame (evaluation mode) and returns one
/// record per (frame, keypoint). With several agents keypoint ids are
/// `agent * K + channel`, agents ordered by their v coordinate.
std::vector<KeypointRecord> discover_keypoints(const FrameStore& frames, ModelState& state,
                                               const DiscoverOptions& options = {});

/// Evaluation-mode bottleneck for a float `[B, 3, H, W]` batch, computed in chunks.
GeometryBottleneck predict_geometry(const torch::Tensor& images, ModelState& state, int batch_size = 16);

}  // namespace kpdisc
