#include "dsc/labels.hpp"

#include <stdexcept>

namespace dsc {

namespace {

const std::vector<std::string> kClasses = {
    "LOCALIZER", "T2_AX",  "T2_COR",    "MRCP",    "DWI",
    "ADC",       "DIXON_IN", "DIXON_OPP", "T1_PRE",  "T1_ART",
    "T1_PORTAL", "T1_LATE",  "T1_HEPA",
};

const std::vector<std::string> kSequenceFlags = {
    "T1", "T2", "DWI", "ADC", "DIXON_IN", "DIXON_OPP",
};

const std::vector<std::string> kPlanes = {"AX", "COR", "SAG"};

const std::vector<std::string> kPhases = {"NONE",   "PRE",   "ART",
                                          "PORTAL", "TRANS", "HEPA"};

// Rows follow kClasses: sequence flag (-1 for none), MRCP, plane, phase,
// localizer. The delayed T1 class points at the transitional phase slot.
struct TargetRow {
  int seq, mrcp, plane, phase, loc;
};
constexpr TargetRow kTargets[kNumClasses] = {
    {-1, 0, 2, 0, 1},  // LOCALIZER
    {1, 0, 0, 0, 0},   // T2_AX
    {1, 0, 1, 0, 0},   // T2_COR
    {1, 1, 1, 0, 0},   // MRCP
    {2, 0, 0, 0, 0},   // DWI
    {3, 0, 0, 0, 0},   // ADC
    {4, 0, 0, 0, 0},   // DIXON_IN
    {5, 0, 0, 0, 0},   // DIXON_OPP
    {0, 0, 0, 1, 0},   // T1_PRE
    {0, 0, 0, 2, 0},   // T1_ART
    {0, 0, 0, 3, 0},   // T1_PORTAL
    {0, 0, 0, 4, 0},   // T1_LATE
    {0, 0, 0, 5, 0},   // T1_HEPA
};

}  // namespace

const std::vector<std::string>& class_names() { return kClasses; }
const std::vector<std::string>& sequence_flag_names() {
  return kSequenceFlags;
}
const std::vector<std::string>& plane_names() { return kPlanes; }
const std::vector<std::string>& phase_names() { return kPhases; }

int class_index(const std::string& name) {
  for (size_t i = 0; i < kClasses.size(); ++i)
    if (kClasses[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("unknown class '" + name + "'");
}

MultilabelTarget multilabel_target(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses)
    throw std::invalid_argument("class id out of range");
  const TargetRow& row = kTargets[class_id];
  MultilabelTarget t;
  if (row.seq >= 0) t.sequence[static_cast<size_t>(row.seq)] = 1;
  t.mrcp = row.mrcp;
  t.plane = row.plane;
  t.phase = row.phase;
  t.localizer = row.loc;
  return t;
}

const std::vector<std::string>& head_names() {
  static const std::vector<std::string> kHeads = [] {
    std::vector<std::string> v;
    for (const auto& s : kSequenceFlags) v.push_back("sequence_" + s);
    v.insert(v.end(), {"mrcp", "plane", "contrast_phase", "localizer"});
    return v;
  }();
  return kHeads;
}

int head_cardinality(int head) {
  if (head < 0 || head >= kNumHeads)
    throw std::invalid_argument("head index out of range");
  if (head == kNumSequenceFlags + 1) return kNumPlanes;
  if (head == kNumSequenceFlags + 2) return kNumPhases;
  return 2;
}

std::array<int, kNumHeads> head_targets(const MultilabelTarget& t) {
  std::array<int, kNumHeads> out{};
  for (int i = 0; i < kNumSequenceFlags; ++i)
    out[static_cast<size_t>(i)] = t.sequence[static_cast<size_t>(i)];
  out[kNumSequenceFlags] = t.mrcp;
  out[kNumSequenceFlags + 1] = t.plane;
  out[kNumSequenceFlags + 2] = t.phase;
  out[kNumSequenceFlags + 3] = t.localizer;
  return out;
}

}  // namespace dsc
