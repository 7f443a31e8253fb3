#pragma once

// Synthetic labelled scenes. Spec text format (key = value, `#` comments):
//
//   seed = 7
//   noise = 0.02
//   ground.density = 0.1     # points per square metre, 0 disables
//   ground.class = 9
//   ground.z = -1.7
//   ground.extent = 40       # half-width of the square ground patch
//   instance = 1 10.0 -4.0 -1.0 0.8 0.8 0.6 200 blob
//
// An instance line is: class cx cy cz ex ey ez points [blob|box]. Blob
// extents are per-axis standard deviations, box extents half-sizes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "scan/voxelizer.hpp"

namespace scan {

enum class InstanceShape { kBlob, kBox };

struct SynthInstance {
  std::uint16_t cls = 1;
  Vec3 center{};
  Vec3 extent{0.5, 0.5, 0.5};
  std::size_t points = 100;
  InstanceShape shape = InstanceShape::kBlob;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  double noise = 0.0;
  double ground_density = 0.0;
  std::uint16_t ground_class = 9;
  double ground_z = -1.7;
  double ground_extent = 40.0;
  Range3 range;
  std::vector<SynthInstance> instances;

  void validate() const;
};

struct Scene {
  PointCloud points;
  PointLabels labels;
};

SceneSpec parse_scene_spec(const std::string& text);
SceneSpec load_scene_spec(const std::filesystem::path& path);

// Instance k gets id k + 1; ground points instance 0. Every point lies in
// spec.range (samples outside are redrawn).
Scene synth_scene(const SceneSpec& spec);

// Random thing instances on a ground plane, centres pairwise more than
// `min_separation` metres apart in the xy plane.
SceneSpec random_scene_spec(std::uint64_t seed, std::size_t n_instances, double min_separation,
                            const std::vector<std::uint16_t>& thing_classes = {1, 2, 3, 4, 5, 6, 7, 8});

// Ground plane plus a few instances, `points` in total. Used for timing.
Scene synth_bench_scene(std::size_t points, std::uint64_t seed);

}  // namespace scan
