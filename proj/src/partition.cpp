#include "pamo/partition.hpp"

#include "pamo/error.hpp"
#include "pamo/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

namespace pamo {

ViewVisibility visible_set(const PartField& field, const CameraModel& camera, const ImageF& depth,
                           double theta_depth) {
  if (!depth.same_shape(camera.width(), camera.height())) {
    throw Error(ErrorKind::DimensionMismatch, "depth map does not match camera size");
  }
  ViewVisibility out;
  out.pixel_of.assign(field.size(), -1);
  for (std::size_t j = 0; j < field.size(); ++j) {
    const auto proj = camera.try_project(field.gaussians[j].center);
    if (!proj) continue;
    const double u = std::round(proj->pixel.x());
    const double v = std::round(proj->pixel.y());
    if (u < 0 || v < 0 || u >= depth.width || v >= depth.height) continue;
    const auto idx = depth.index(static_cast<int>(u), static_cast<int>(v));
    out.pixel_of[j] = static_cast<std::int64_t>(idx);
    const double d = depth.data[idx];
    if (std::isfinite(d) && std::abs(proj->depth - d) < theta_depth) out.visible.push_back(j);
  }
  return out;
}

PartGraph build_part_graph(std::span<const ViewVisibility> visibility, std::span<const ImageI> masks,
                           std::size_t node_count) {
  if (visibility.size() != masks.size()) {
    throw Error(ErrorKind::InconsistentInput, "one mask per view required");
  }
  const std::size_t views = visibility.size();
  const std::size_t words = (views + 63) / 64;

  // Per-view membership bits, used for the co-visibility denominators.
  std::vector<std::uint64_t> seen(node_count * words, 0);
  std::vector<std::vector<std::uint64_t>> pair_keys(views);
  for (std::size_t v = 0; v < views; ++v) {
    for (auto j : visibility[v].visible) {
      if (j >= node_count) throw Error(ErrorKind::InconsistentInput, fmt::format("primitive {} out of range", j));
      if (j >= visibility[v].pixel_of.size() || visibility[v].pixel_of[j] < 0) {
        throw Error(ErrorKind::InconsistentInput, fmt::format("visible primitive {} has no pixel in view {}", j, v));
      }
      seen[j * words + v / 64] |= std::uint64_t{1} << (v % 64);
    }
  }

  parallel_for(views, [&](std::size_t v) {
    std::map<std::int32_t, std::vector<std::uint32_t>> buckets;
    const auto& mask = masks[v];
    for (auto j : visibility[v].visible) {
      const auto px = static_cast<std::size_t>(visibility[v].pixel_of[j]);
      if (px >= mask.data.size()) throw Error(ErrorKind::InconsistentInput, "pixel outside mask");
      const auto label = mask.data[px];
      if (label >= 0) buckets[label].push_back(static_cast<std::uint32_t>(j));
    }
    auto& keys = pair_keys[v];
    for (auto& [label, members] : buckets) {
      std::sort(members.begin(), members.end());
      for (std::size_t a = 0; a < members.size(); ++a) {
        for (std::size_t b = a + 1; b < members.size(); ++b) {
          keys.push_back((static_cast<std::uint64_t>(members[a]) << 32) | members[b]);
        }
      }
    }
  });

  std::vector<std::uint64_t> all;
  std::size_t total = 0;
  for (const auto& k : pair_keys) total += k.size();
  all.reserve(total);
  for (auto& k : pair_keys) {
    all.insert(all.end(), k.begin(), k.end());
    std::vector<std::uint64_t>().swap(k);
  }
  std::sort(all.begin(), all.end());

  PartGraph graph;
  graph.node_count = node_count;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t e = i;
    while (e < all.size() && all[e] == all[i]) ++e;
    PartEdge edge;
    edge.j = static_cast<std::uint32_t>(all[i] >> 32);
    edge.k = static_cast<std::uint32_t>(all[i] & 0xffffffffu);
    edge.together = static_cast<std::uint32_t>(e - i);
    for (std::size_t w = 0; w < words; ++w) {
      edge.covisible += static_cast<std::uint32_t>(std::popcount(seen[edge.j * words + w] & seen[edge.k * words + w]));
    }
    graph.edges.push_back(edge);
    i = e;
  }
  return graph;
}

void assign_part_ids(PartField& field, std::span<const int> clustering) {
  if (clustering.size() != field.size()) {
    throw Error(ErrorKind::LengthMismatch, "clustering must cover every primitive");
  }
  // Unclustered primitives (negative labels) become singletons.
  std::map<long long, std::vector<std::size_t>> clusters;
  for (std::size_t j = 0; j < clustering.size(); ++j) {
    const long long key = clustering[j] >= 0 ? clustering[j] : -1 - static_cast<long long>(j);
    clusters[key].push_back(j);
  }
  std::vector<const std::vector<std::size_t>*> order;
  for (const auto& [key, members] : clusters) order.push_back(&members);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    if (a->size() != b->size()) return a->size() > b->size();
    return a->front() < b->front();
  });
  for (std::size_t id = 0; id < order.size(); ++id) {
    for (auto j : *order[id]) field.gaussians[j].part_id = static_cast<int>(id);
  }
  field.rebuild_parts();
}

PartitionResult discover_parts(PartField& field, std::span<const CameraModel> cameras,
                               std::span<const ImageF> depths, std::span<const ImageI> masks,
                               const PartitionConfig& cfg) {
  if (depths.size() != cameras.size() || masks.size() != cameras.size()) {
    throw Error(ErrorKind::InconsistentInput, "need one depth map and one mask per camera");
  }
  if (!(cfg.theta_depth > 0.0)) throw Error(ErrorKind::Validation, "theta_depth must be positive");
  std::vector<ViewVisibility> vis(cameras.size());
  parallel_for(cameras.size(), [&](std::size_t v) { vis[v] = visible_set(field, cameras[v], depths[v], cfg.theta_depth); });
  PartitionResult result;
  result.graph = build_part_graph(vis, masks, field.size());
  result.clustering = louvain_cluster(result.graph, cfg.resolution);
  assign_part_ids(field, result.clustering);
  return result;
}

}  // namespace pamo
