#include <set>
#include <stdexcept>

#include "doctest.h"
#include "dsc/labels.hpp"

using namespace dsc;

TEST_CASE("class vocabulary is complete and unique") {
  CHECK(class_names().size() == kNumClasses);
  std::set<std::string> uniq(class_names().begin(), class_names().end());
  CHECK(uniq.size() == kNumClasses);
  for (int c = 0; c < kNumClasses; ++c)
    CHECK(class_index(class_names()[static_cast<size_t>(c)]) == c);
  CHECK_THROWS_AS(class_index("NOT_A_CLASS"), std::invalid_argument);
}

TEST_CASE("multilabel targets follow the class semantics") {
  CHECK(sequence_flag_names().size() == kNumSequenceFlags);
  CHECK(plane_names().size() == kNumPlanes);
  CHECK(phase_names().size() == kNumPhases);

  int localizer = class_index("LOCALIZER");
  int mrcp = class_index("MRCP");
  for (int c = 0; c < kNumClasses; ++c) {
    MultilabelTarget t = multilabel_target(c);
    int flags = 0;
    for (int f : t.sequence) {
      CHECK((f == 0 || f == 1));
      flags += f;
    }
    // Every class asserts exactly one sequence type except the localizer.
    CHECK(flags == (c == localizer ? 0 : 1));
    CHECK(t.localizer == (c == localizer ? 1 : 0));
    CHECK(t.mrcp == (c == mrcp ? 1 : 0));
    CHECK(t.plane >= 0);
    CHECK(t.plane < kNumPlanes);
    CHECK(t.phase >= 0);
    CHECK(t.phase < kNumPhases);
  }
  CHECK_THROWS_AS(multilabel_target(-1), std::invalid_argument);
  CHECK_THROWS_AS(multilabel_target(kNumClasses), std::invalid_argument);
}

TEST_CASE("contrast phases are carried by the dynamic T1 classes only") {
  std::set<int> phases;
  for (int c = 0; c < kNumClasses; ++c) {
    MultilabelTarget t = multilabel_target(c);
    bool dynamic = class_names()[static_cast<size_t>(c)].rfind("T1_", 0) == 0;
    if (dynamic)
      CHECK(t.phase > 0);
    else
      CHECK(t.phase == 0);
    phases.insert(t.phase);
  }
  // NONE plus one slot per dynamic class; the delayed class occupies the
  // transitional slot.
  CHECK(phases.size() == kNumPhases);
  CHECK(multilabel_target(class_index("T1_PORTAL")).phase !=
        multilabel_target(class_index("T1_ART")).phase);
  CHECK(phase_names()[static_cast<size_t>(
            multilabel_target(class_index("T1_LATE")).phase)] == "TRANS");
}

TEST_CASE("flat head view matches the structured target") {
  CHECK(head_names().size() == kNumHeads);
  std::set<std::string> uniq(head_names().begin(), head_names().end());
  CHECK(uniq.size() == kNumHeads);

  for (int h = 0; h < kNumHeads; ++h) {
    int card = head_cardinality(h);
    CHECK(card >= 2);
  }
  CHECK(head_cardinality(kNumSequenceFlags + 1) == kNumPlanes);
  CHECK(head_cardinality(kNumSequenceFlags + 2) == kNumPhases);

  for (int c = 0; c < kNumClasses; ++c) {
    MultilabelTarget t = multilabel_target(c);
    std::array<int, kNumHeads> flat = head_targets(t);
    for (int f = 0; f < kNumSequenceFlags; ++f)
      CHECK(flat[static_cast<size_t>(f)] == t.sequence[static_cast<size_t>(f)]);
    CHECK(flat[kNumSequenceFlags] == t.mrcp);
    CHECK(flat[kNumSequenceFlags + 1] == t.plane);
    CHECK(flat[kNumSequenceFlags + 2] == t.phase);
    CHECK(flat[kNumSequenceFlags + 3] == t.localizer);
    for (int h = 0; h < kNumHeads; ++h) {
      CHECK(flat[static_cast<size_t>(h)] >= 0);
      CHECK(flat[static_cast<size_t>(h)] < head_cardinality(h));
    }
  }
}

TEST_CASE("distinct classes disagree on at least one head") {
  for (int a = 0; a < kNumClasses; ++a)
    for (int b = a + 1; b < kNumClasses; ++b) {
      auto fa = head_targets(multilabel_target(a));
      auto fb = head_targets(multilabel_target(b));
      CHECK(fa != fb);
    }
}
