#pragma once

#include <array>
#include <string>
#include <vector>

namespace dsc {

// Joint series classes for abdominal MR protocols.
inline constexpr int kNumClasses = 13;

// Multi-label view of the same task: six one-vs-rest sequence-type flags,
// an MRCP flag, the acquisition plane, the contrast phase (NONE for series
// without a dynamic phase), and a localizer flag.
inline constexpr int kNumSequenceFlags = 6;
inline constexpr int kNumPlanes = 3;
inline constexpr int kNumPhases = 6;

struct MultilabelTarget {
  std::array<int, kNumSequenceFlags> sequence{};  // one-vs-rest 0/1 flags
  int mrcp = 0;
  int plane = 0;  // index into plane_names()
  int phase = 0;  // index into phase_names()
  int localizer = 0;
};

const std::vector<std::string>& class_names();
const std::vector<std::string>& sequence_flag_names();
const std::vector<std::string>& plane_names();
const std::vector<std::string>& phase_names();

// Index of `name` in class_names(); throws std::invalid_argument otherwise.
int class_index(const std::string& name);

// Target derived from the joint class. The delayed T1 phase maps onto the
// transitional slot, so the two share one phase target.
MultilabelTarget multilabel_target(int class_id);

// Flat head view used for per-head losses and reports: the six sequence
// flags, then mrcp, plane, phase, localizer.
inline constexpr int kNumHeads = kNumSequenceFlags + 4;

const std::vector<std::string>& head_names();
int head_cardinality(int head);  // 2 for binary heads, else option count
std::array<int, kNumHeads> head_targets(const MultilabelTarget& t);

}  // namespace dsc
