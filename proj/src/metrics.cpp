#include "scan/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace scan {

void ClassSpec::validate() const {
  if (kinds.size() < 2) throw ConfigError("class spec needs at least two classes");
  if (names.size() != kinds.size()) throw ConfigError("class spec: names and kinds disagree in length");
  if (kinds[0] != ClassKind::kIgnore) throw ConfigError("class 0 must be the ignore class");
  for (std::size_t c = 1; c < kinds.size(); ++c) {
    if (kinds[c] == ClassKind::kIgnore) throw ConfigError("only class 0 may be ignored");
  }
  if (kinds.size() > 0x10000) throw ConfigError("too many classes");
}

ClassSpec ClassSpec::semantic_kitti() {
  ClassSpec s;
  s.names = {"unlabeled", "car",     "bicycle",      "motorcycle", "truck",    "other-vehicle", "person",
             "bicyclist", "motorcyclist", "road",    "parking",    "sidewalk", "other-ground",  "building",
             "fence",     "vegetation",   "trunk",   "terrain",    "pole",     "traffic-sign"};
  s.kinds.assign(20, ClassKind::kStuff);
  s.kinds[0] = ClassKind::kIgnore;
  for (int c = 1; c <= 8; ++c) s.kinds[c] = ClassKind::kThing;
  return s;
}

ClassSpec ClassSpec::from_things(std::size_t n_classes, const std::vector<std::uint16_t>& things) {
  ClassSpec s;
  s.kinds.assign(n_classes, ClassKind::kStuff);
  if (n_classes > 0) s.kinds[0] = ClassKind::kIgnore;
  for (auto t : things) {
    if (t == 0 || t >= n_classes) throw ConfigError("thing class out of range: " + std::to_string(t));
    s.kinds[t] = ClassKind::kThing;
  }
  for (std::size_t c = 0; c < n_classes; ++c) s.names.push_back("class" + std::to_string(c));
  s.validate();
  return s;
}

ClassSpec parse_class_file(const std::string& text) {
  std::map<unsigned long, std::pair<std::string, ClassKind>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string id_s, name, kind_s, extra;
    if (!(ls >> id_s)) continue;
    const std::string where = "class file line " + std::to_string(lineno);
    if (!(ls >> name >> kind_s) || (ls >> extra)) throw ConfigError(where + ": expected '<id> <name> <kind>'");
    std::size_t used = 0;
    unsigned long id = 0;
    try {
      id = std::stoul(id_s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != id_s.size()) throw ConfigError(where + ": bad class id '" + id_s + "'");
    ClassKind kind;
    if (kind_s == "thing") {
      kind = ClassKind::kThing;
    } else if (kind_s == "stuff") {
      kind = ClassKind::kStuff;
    } else if (kind_s == "ignore") {
      kind = ClassKind::kIgnore;
    } else {
      throw ConfigError(where + ": kind must be thing, stuff or ignore");
    }
    if (!rows.emplace(id, std::make_pair(name, kind)).second) {
      throw ConfigError(where + ": class id " + id_s + " repeated");
    }
  }
  ClassSpec s;
  for (const auto& [id, row] : rows) {
    if (id != s.kinds.size()) throw ConfigError("class ids must be contiguous from 0");
    s.names.push_back(row.first);
    s.kinds.push_back(row.second);
  }
  s.validate();
  return s;
}

ClassSpec load_class_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open class file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_class_file(ss.str());
}

PanopticStats::PanopticStats(std::size_t n)
    : n_classes(n), iou_sum(n, 0.0), tp(n, 0), fp(n, 0), fn(n, 0), confusion(n * n, 0) {}

void PanopticStats::merge(const PanopticStats& o) {
  if (o.n_classes != n_classes) throw ShapeError("merging stats with different class counts");
  for (std::size_t c = 0; c < n_classes; ++c) {
    iou_sum[c] += o.iou_sum[c];
    tp[c] += o.tp[c];
    fp[c] += o.fp[c];
    fn[c] += o.fn[c];
  }
  for (std::size_t i = 0; i < confusion.size(); ++i) confusion[i] += o.confusion[i];
}

namespace {

constexpr std::uint32_t kNoSegment = 0xFFFFFFFFu;

std::uint32_t segment_key(std::uint16_t cls, std::uint16_t inst, const ClassSpec& spec) {
  if (spec.is_stuff(cls)) return static_cast<std::uint32_t>(cls) << 16;
  if (spec.is_thing(cls) && inst != 0) return (static_cast<std::uint32_t>(cls) << 16) | inst;
  return kNoSegment;
}

}  // namespace

PanopticStats accumulate_frame(const PointLabels& pred, const PointLabels& gt, const ClassSpec& spec,
                               std::size_t min_points) {
  if (pred.size() != gt.size()) throw ShapeError("prediction and ground truth differ in point count");
  const std::size_t n = spec.n_classes();
  PanopticStats s(n);
  std::unordered_map<std::uint32_t, std::uint64_t> gt_area, pred_area;
  std::unordered_map<std::uint64_t, std::uint64_t> inter;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto gc = gt.semantic[i];
    const auto pc = pred.semantic[i];
    if (gc >= n) throw RangeError("ground-truth class " + std::to_string(gc) + " outside the class spec");
    if (pc >= n) throw RangeError("predicted class " + std::to_string(pc) + " outside the class spec");
    if (gc == 0) continue;
    ++s.confusion[gc * n + pc];
    const auto gk = segment_key(gc, gt.instance[i], spec);
    const auto pk = segment_key(pc, pred.instance[i], spec);
    if (gk != kNoSegment) ++gt_area[gk];
    if (pk != kNoSegment) ++pred_area[pk];
    if (gk != kNoSegment && pk != kNoSegment && (gk >> 16) == (pk >> 16)) {
      ++inter[(static_cast<std::uint64_t>(gk) << 32) | pk];
    }
  }
  auto big_enough = [&](std::uint64_t area) { return area >= min_points; };
  std::unordered_map<std::uint32_t, bool> gt_matched, pred_matched;
  for (const auto& [key, count] : inter) {
    const auto gk = static_cast<std::uint32_t>(key >> 32);
    const auto pk = static_cast<std::uint32_t>(key & 0xFFFFFFFFu);
    const auto ga = gt_area[gk];
    const auto pa = pred_area[pk];
    if (!big_enough(ga) || !big_enough(pa)) continue;
    const double iou = static_cast<double>(count) / static_cast<double>(ga + pa - count);
    if (iou > 0.5) {
      const auto cls = gk >> 16;
      ++s.tp[cls];
      s.iou_sum[cls] += iou;
      gt_matched[gk] = true;
      pred_matched[pk] = true;
    }
  }
  for (const auto& [gk, area] : gt_area) {
    if (big_enough(area) && !gt_matched.count(gk)) ++s.fn[gk >> 16];
  }
  for (const auto& [pk, area] : pred_area) {
    if (big_enough(area) && !pred_matched.count(pk)) ++s.fp[pk >> 16];
  }
  return s;
}

PanopticReport finalize(const PanopticStats& s, const ClassSpec& spec) {
  const std::size_t n = spec.n_classes();
  if (s.n_classes != n) throw ShapeError("stats and class spec disagree in class count");
  PanopticReport r;
  r.classes.resize(n);
  for (std::size_t c = 1; c < n; ++c) {
    auto& m = r.classes[c];
    const double tp = static_cast<double>(s.tp[c]);
    const double fp = static_cast<double>(s.fp[c]);
    const double fn = static_cast<double>(s.fn[c]);
    m.present = s.tp[c] + s.fp[c] + s.fn[c] > 0;
    m.sq = s.tp[c] > 0 ? s.iou_sum[c] / tp : 0.0;
    m.rq = m.present ? tp / (tp + 0.5 * fp + 0.5 * fn) : 0.0;
    m.pq = m.sq * m.rq;

    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row += s.conf(c, k);
      if (k != 0) col += s.conf(k, c);  // gt ignore rows are never filled
    }
    const std::uint64_t hit = s.conf(c, c);
    const std::uint64_t uni = row + col - hit;
    m.iou_present = uni > 0;
    m.iou = uni > 0 ? static_cast<double>(hit) / static_cast<double>(uni) : 0.0;
  }
  struct Mean {
    double sum = 0;
    std::size_t n = 0;
    void add(double v) {
      sum += v;
      ++n;
    }
    double get() const { return n ? sum / static_cast<double>(n) : 0.0; }
  };
  Mean pq, pqd, sq, rq, pq_th, sq_th, rq_th, pq_st, sq_st, rq_st, miou;
  for (std::size_t c = 1; c < n; ++c) {
    const auto& m = r.classes[c];
    const auto cls = static_cast<std::uint16_t>(c);
    if (m.iou_present) miou.add(m.iou);
    if (!m.present) continue;
    pq.add(m.pq);
    sq.add(m.sq);
    rq.add(m.rq);
    pqd.add(spec.is_stuff(cls) ? m.iou : m.pq);
    if (spec.is_thing(cls)) {
      pq_th.add(m.pq);
      sq_th.add(m.sq);
      rq_th.add(m.rq);
    } else {
      pq_st.add(m.pq);
      sq_st.add(m.sq);
      rq_st.add(m.rq);
    }
  }
  r.pq = pq.get();
  r.pq_dagger = pqd.get();
  r.sq = sq.get();
  r.rq = rq.get();
  r.pq_th = pq_th.get();
  r.sq_th = sq_th.get();
  r.rq_th = rq_th.get();
  r.pq_st = pq_st.get();
  r.sq_st = sq_st.get();
  r.rq_st = rq_st.get();
  r.miou = miou.get();
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_report(const PanopticReport& r, const ClassSpec& spec) {
  std::ostringstream os;
  os << "# PQ-dagger uses semantic IoU in place of PQ for stuff classes\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %-6s %9s %9s %9s %9s\n", "class", "kind", "PQ", "SQ", "RQ", "IoU");
  os << line;
  for (std::size_t c = 1; c < spec.n_classes(); ++c) {
    const auto& m = r.classes[c];
    if (!m.present && !m.iou_present) continue;
    std::snprintf(line, sizeof line, "%-16s %-6s %9.4f %9.4f %9.4f %9.4f\n", spec.names[c].c_str(),
                  spec.kinds[c] == ClassKind::kThing ? "thing" : "stuff", m.pq, m.sq, m.rq, m.iou);
    os << line;
  }
  std::snprintf(line, sizeof line, "\nPQ %.4f  PQ-dagger %.4f  SQ %.4f  RQ %.4f  mIoU %.4f\n", r.pq, r.pq_dagger,
                r.sq, r.rq, r.miou);
  os << line;
  std::snprintf(line, sizeof line, "things: PQ %.4f  SQ %.4f  RQ %.4f\n", r.pq_th, r.sq_th, r.rq_th);
  os << line;
  std::snprintf(line, sizeof line, "stuff:  PQ %.4f  SQ %.4f  RQ %.4f\n", r.pq_st, r.sq_st, r.rq_st);
  os << line;
  return os.str();
}

std::string format_report_csv(const PanopticReport& r, const ClassSpec& spec) {
  std::ostringstream os;
  os << "class,metric,value\n";
  for (std::size_t c = 1; c < spec.n_classes(); ++c) {
    const auto& m = r.classes[c];
    if (!m.present && !m.iou_present) continue;
    const auto& name = spec.names[c];
    os << name << ",pq," << fmt(m.pq) << "\n";
    os << name << ",sq," << fmt(m.sq) << "\n";
    os << name << ",rq," << fmt(m.rq) << "\n";
    os << name << ",iou," << fmt(m.iou) << "\n";
  }
  const std::pair<const char*, double> agg[] = {
      {"pq", r.pq},       {"pq_dagger", r.pq_dagger}, {"sq", r.sq},       {"rq", r.rq},
      {"pq_th", r.pq_th}, {"sq_th", r.sq_th},         {"rq_th", r.rq_th}, {"pq_st", r.pq_st},
      {"sq_st", r.sq_st}, {"rq_st", r.rq_st},         {"miou", r.miou}};
  for (const auto& [k, v] : agg) os << "all," << k << "," << fmt(v) << "\n";
  return os.str();
}

}  // namespace scan
