#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scan/voxelizer.hpp"

namespace scan {

enum class ClassKind { kIgnore, kThing, kStuff };

struct ClassSpec {
  std::vector<std::string> names;
  std::vector<ClassKind> kinds;  // kinds[0] == kIgnore

  std::size_t n_classes() const { return kinds.size(); }
  bool is_thing(std::uint16_t c) const { return c < kinds.size() && kinds[c] == ClassKind::kThing; }
  bool is_stuff(std::uint16_t c) const { return c < kinds.size() && kinds[c] == ClassKind::kStuff; }
  void validate() const;

  // SemanticKITTI 20-class split: 8 things (1..8), 11 stuff (9..19).
  static ClassSpec semantic_kitti();
  static ClassSpec from_things(std::size_t n_classes, const std::vector<std::uint16_t>& things);
};

// Lines of `<id> <name> <thing|stuff|ignore>`; ids 0..n-1, each once, 0 the
// only ignore class. `#` comments.
ClassSpec parse_class_file(const std::string& text);
ClassSpec load_class_file(const std::filesystem::path& path);

struct PanopticStats {
  std::size_t n_classes = 0;
  std::vector<double> iou_sum;
  std::vector<std::uint64_t> tp, fp, fn;
  std::vector<std::uint64_t> confusion;  // [gt][pred], row-major n x n

  explicit PanopticStats(std::size_t n = 0);
  std::uint64_t conf(std::size_t gt, std::size_t pred) const { return confusion[gt * n_classes + pred]; }
  void merge(const PanopticStats& other);
  bool operator==(const PanopticStats&) const = default;
};

// Ground-truth ignore points are dropped first. Thing segments are
// (class, instance > 0) groups, stuff classes form one segment each.
// Segments with fewer than `min_points` points are discarded on both sides.
PanopticStats accumulate_frame(const PointLabels& pred, const PointLabels& gt, const ClassSpec& spec,
                               std::size_t min_points = 0);

struct ClassMetrics {
  double pq = 0, sq = 0, rq = 0, iou = 0;
  bool present = false;      // any tp, fp or fn
  bool iou_present = false;  // non-empty union in the confusion matrix
};

struct PanopticReport {
  std::vector<ClassMetrics> classes;
  double pq = 0, pq_dagger = 0, sq = 0, rq = 0;
  double pq_th = 0, sq_th = 0, rq_th = 0;
  double pq_st = 0, sq_st = 0, rq_st = 0;
  double miou = 0;
};

PanopticReport finalize(const PanopticStats& stats, const ClassSpec& spec);

std::string format_report(const PanopticReport& r, const ClassSpec& spec);
// `class,metric,value` rows; aggregates under class "all".
std::string format_report_csv(const PanopticReport& r, const ClassSpec& spec);

}  // namespace scan
