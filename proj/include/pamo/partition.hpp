#pragma once

#include "pamo/field.hpp"
#include "pamo/geom.hpp"
#include "pamo/image.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace pamo {

/// Primitives that pass the depth test in one view, with their representative pixel.
struct ViewVisibility {
  std::vector<std::size_t> visible;
  /// Linear pixel index of each primitive's projected center, or -1 when out of view.
  std::vector<std::int64_t> pixel_of;
};

/// Depth-guided correspondence: primitive j is visible when its center projects inside the
/// image and its camera depth is within theta_depth of the rendered depth at that pixel.
ViewVisibility visible_set(const PartField& field, const CameraModel& camera, const ImageF& depth,
                           double theta_depth);

struct PartEdge {
  std::uint32_t j = 0;
  std::uint32_t k = 0;  ///< j < k
  std::uint32_t together = 0;   ///< views where both fall in the same mask
  std::uint32_t covisible = 0;  ///< views where both are visible
  double weight() const { return static_cast<double>(together) / static_cast<double>(covisible); }
};

/// Co-occurrence graph over primitives. Only pairs sharing a mask in at least one view are
/// stored; every other pair has weight zero and cannot influence modularity.
struct PartGraph {
  std::size_t node_count = 0;
  std::vector<PartEdge> edges;  ///< sorted by (j, k)
};

/// Throws Error(InconsistentInput) if a visible primitive has no pixel.
PartGraph build_part_graph(std::span<const ViewVisibility> visibility, std::span<const ImageI> masks,
                           std::size_t node_count);

/// Deterministic weighted Louvain with a resolution parameter. Returns a community id per node
/// (ids are contiguous, ordered by first appearance).
std::vector<int> louvain_cluster(const PartGraph& graph, double resolution = 1.0);

/// Weighted modularity of a labeling with resolution gamma.
double modularity(const PartGraph& graph, std::span<const int> labels, double resolution = 1.0);

/// Assigns contiguous part ids by descending cluster size (ties: smaller first member first)
/// and rebuilds the part index.
void assign_part_ids(PartField& field, std::span<const int> clustering);

struct PartitionConfig {
  double theta_depth = 0.1;
  double resolution = 1.0;
};

struct PartitionResult {
  PartGraph graph;
  std::vector<int> clustering;
};

/// Full initial-timestamp pipeline: visibility, graph, Louvain, id assignment.
PartitionResult discover_parts(PartField& field, std::span<const CameraModel> cameras,
                               std::span<const ImageF> depths, std::span<const ImageI> masks,
                               const PartitionConfig& cfg);

}  // namespace pamo
