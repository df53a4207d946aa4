#include "kpdisc/discover.hpp"

#include "kpdisc/error.hpp"
#include "kpdisc/heatfeat.hpp"

namespace kpdisc {

GeometryBottleneck predict_geometry(const torch::Tensor& images, ModelState& state, int batch_size) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  torch::NoGradGuard ng;
  state.net->eval();
  std::vector<torch::Tensor> raw, norm, kp, rend;
  for (std::int64_t s = 0; s < images.size(0); s += batch_size) {
    auto chunk = images.slice(0, s, std::min<std::int64_t>(images.size(0), s + batch_size));
    auto g = state.net->geometry(as_model_input(chunk, state.net));
    raw.push_back(g.raw);
    norm.push_back(g.normalized);
    kp.push_back(g.keypoints);
    rend.push_back(g.rendered);
  }
  if (raw.empty()) throw EmptyResult("no frames");
  return {torch::cat(raw), torch::cat(norm), torch::cat(kp), torch::cat(rend)};
}

std::vector<KeypointRecord> discover_keypoints(const FrameStore& frames, ModelState& state,
                                               const DiscoverOptions& options) {
  if (frames.size() == 0) throw EmptyResult("no frames");
  if (options.n_agents < 1) throw InvalidArgument("n_agents must be >= 1");
  const int k = state.config.k;
  const int region =
      options.region > 0 ? options.region : default_region(state.config.sigma, state.config.heatmap_size());
  std::vector<KeypointRecord> out;
  for (std::int64_t s = 0; s < frames.size(); s += options.batch_size) {
    std::vector<std::int64_t> idx;
    for (auto i = s; i < std::min<std::int64_t>(frames.size(), s + options.batch_size); ++i) idx.push_back(i);
    auto g = predict_geometry(frames.gather(idx), state, options.batch_size);
    if (options.n_agents == 1) {
      auto f = heatmap_features(g.normalized, g.keypoints);
      auto kp = g.keypoints.to(torch::kFloat64);
      for (std::size_t b = 0; b < idx.size(); ++b)
        for (int j = 0; j < k; ++j) {
          const auto bi = static_cast<std::int64_t>(b);
          out.push_back({idx[b], j, kp[bi][j][0].item<double>(), kp[bi][j][1].item<double>(),
                         f.confidence[bi][j].item<double>(), f.sigma2_x[bi][j].item<double>(),
                         f.sigma2_y[bi][j].item<double>(), f.sigma2_xy[bi][j].item<double>()});
        }
    } else {
      for (std::size_t b = 0; b < idx.size(); ++b) {
        std::vector<KeypointRecord> frame_records(static_cast<std::size_t>(k * options.n_agents));
        for (int j = 0; j < k; ++j) {
          auto peaks = extract_multi_peak(g.raw[static_cast<std::int64_t>(b)][j], options.n_agents, region);
          for (int a = 0; a < options.n_agents; ++a) {
            const auto& p = peaks[static_cast<std::size_t>(a)];
            frame_records[static_cast<std::size_t>(a * k + j)] = {
                idx[b], a * k + j, p.u, p.v, p.confidence, p.cov.sxx, p.cov.syy, p.cov.sxy};
          }
        }
        out.insert(out.end(), frame_records.begin(), frame_records.end());
      }
    }
  }
  return out;
}

}  // namespace kpdisc
