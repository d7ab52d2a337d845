#include "dsc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dsc/labels.hpp"
#include "dsc/rng.hpp"
#include "json.hpp"

namespace dsc {

SignalMode signal_mode_from_string(const std::string& s) {
  if (s == "image_only") return SignalMode::image_only;
  if (s == "metadata_only") return SignalMode::metadata_only;
  if (s == "joint") return SignalMode::joint;
  if (s == "mid_slice_only") return SignalMode::mid_slice_only;
  throw std::invalid_argument("unknown signal mode '" + s + "'");
}

std::string to_string(SignalMode m) {
  switch (m) {
    case SignalMode::image_only: return "image_only";
    case SignalMode::metadata_only: return "metadata_only";
    case SignalMode::joint: return "joint";
    case SignalMode::mid_slice_only: return "mid_slice_only";
  }
  return "?";
}

void SynthSpec::validate() const {
  if (series_count < 1)
    throw std::invalid_argument("synth: series_count must be >= 1");
  if (slices_min < 1 || slices_min > slices_max)
    throw std::invalid_argument("synth: need 1 <= slices_min <= slices_max");
  if (size_min < 16 || size_min > size_max)
    throw std::invalid_argument("synth: need 16 <= size_min <= size_max");
  if (!(missing_rate >= 0.0 && missing_rate <= 1.0))
    throw std::invalid_argument("synth: missing_rate must lie in [0, 1]");
  if (!(mid_band > 0.0 && mid_band <= 1.0))
    throw std::invalid_argument("synth: mid_band must lie in (0, 1]");
  if (series_per_patient < 1)
    throw std::invalid_argument("synth: series_per_patient must be >= 1");
  if (mode == SignalMode::metadata_only && allow_class_tag_missing &&
      missing_rate > 0.0)
    throw std::invalid_argument(
        "synth: metadata_only with allow_class_tag_missing and a positive "
        "missing_rate leaves no reliable signal path");
}

namespace {

constexpr uint64_t kContentSalt = 0xC0DEDA7Aull;
constexpr uint64_t kMissSalt = 0x4D495353ull;
constexpr uint64_t kSliceSalt = 0x51ull;

std::string uid_from(uint64_t seed, uint64_t salt, uint64_t n) {
  return "2.25." + std::to_string(hash_mix(hash_mix(seed, salt), n));
}

std::string fixed(double v, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

// Per-class tag signature ranges. Scalars are realized per series.
struct ClassSig {
  const char* seq_name;
  const char* scanning;
  const char* variant;
  const char* acq;
  const char* phase_enc;
  const char* image_type;
  const char* scan_options;  // nullptr: tag absent
  bool contrast;
  bool variable_flip;
  double tr_lo, tr_hi;
  double te_lo, te_hi;
  double ti_lo, ti_hi;  // ti_lo < 0: tag absent
  double fa_lo, fa_hi;
  long etl_lo, etl_hi;
  double thick_lo, thick_hi;
  const char* plane;  // AX | COR | SAG
  long echo_numbers;
  long series_number_base;
};

// Indexed by class id; the final row is the uninformative signature used by
// the image-driven modes.
constexpr ClassSig kSig[kNumClasses + 1] = {
    {"LOC", "GR", "SP", "2D", "ROW", "ORIGINAL\\PRIMARY", nullptr, false,
     false, 3.5, 6.0, 1.5, 2.5, -1, -1, 50, 70, 1, 1, 6.0, 10.0, "SAG", 1, 1},
    {"HASTE", "SE", "SK", "2D", "ROW", "ORIGINAL\\PRIMARY", nullptr, false,
     false, 800, 1600, 85, 120, -1, -1, 120, 160, 80, 180, 4.0, 6.0, "AX", 1,
     3},
    {"HASTE", "SE", "SK", "2D", "ROW", "ORIGINAL\\PRIMARY", nullptr, false,
     false, 800, 1600, 85, 120, -1, -1, 120, 160, 80, 180, 4.0, 6.0, "COR", 1,
     4},
    {"MRCP3D", "SE", "SP", "3D", "ROW", "ORIGINAL\\PRIMARY", "FS", false,
     true, 2200, 4500, 550, 750, -1, -1, 90, 120, 100, 250, 1.0, 2.0, "COR",
     1, 8},
    {"EPI2D", "EP", "SK", "2D", "COL", "ORIGINAL\\PRIMARY", "FS", false,
     false, 3000, 8000, 55, 90, 150, 250, 90, 90, 50, 100, 5.0, 7.0, "AX", 1,
     9},
    {"EPIADC", "EP", "SK", "2D", "COL", "DERIVED\\SECONDARY\\ADC", "FS",
     false, false, 3000, 8000, 55, 90, 150, 250, 90, 90, 50, 100, 5.0, 7.0,
     "AX", 1, 10},
    {"VIBE_IN", "GR", "OSP", "3D", "ROW", "ORIGINAL\\PRIMARY", nullptr, false,
     false, 3.5, 7.0, 4.2, 4.8, -1, -1, 9, 12, 1, 1, 2.0, 4.0, "AX", 2, 5},
    {"VIBE_OPP", "GR", "OSP", "3D", "ROW", "ORIGINAL\\PRIMARY", nullptr,
     false, false, 3.5, 7.0, 1.9, 2.4, -1, -1, 9, 12, 1, 1, 2.0, 4.0, "AX", 1,
     6},
    {"VIBE_PRE", "GR", "SP", "3D", "ROW", "ORIGINAL\\PRIMARY", "FS", false,
     false, 3.0, 5.5, 1.3, 2.1, -1, -1, 9, 13, 1, 1, 2.0, 4.0, "AX", 1, 11},
    {"VIBE_ART", "GR", "SP", "3D", "ROW", "ORIGINAL\\PRIMARY", "FS", true,
     false, 3.0, 5.5, 1.3, 2.1, -1, -1, 9, 13, 1, 1, 2.0, 4.0, "AX", 1, 12},
    {"VIBE_PV", "GR", "SP", "3D", "ROW", "ORIGINAL\\PRIMARY", "FS", true,
     false, 3.0, 5.5, 1.3, 2.1, -1, -1, 9, 13, 1, 1, 2.0, 4.0, "AX", 1, 13},
    {"VIBE_DEL", "GR", "SP", "3D", "ROW", "ORIGINAL\\PRIMARY", "FS", true,
     false, 3.0, 5.5, 1.3, 2.1, -1, -1, 9, 13, 1, 1, 2.0, 4.0, "AX", 1, 14},
    {"VIBE_HB", "GR", "SP", "3D", "ROW", "ORIGINAL\\PRIMARY", "FS", true,
     false, 3.0, 5.5, 1.3, 2.1, -1, -1, 25, 35, 1, 1, 2.0, 4.0, "AX", 1, 15},
    {"TRUFI", "GR", "NONE", "2D", "ROW", "ORIGINAL\\PRIMARY", nullptr, false,
     false, 4.0, 6.0, 1.8, 2.6, -1, -1, 45, 65, 1, 1, 4.0, 6.0, "AX", 1, 7},
};

// Protocol family; image textures in joint mode separate members within a
// family while metadata separates the families.
constexpr int kFamily[kNumClasses] = {0, 1, 2, 3, 4, 4, 5, 5, 6, 6, 6, 6, 6};
constexpr int kWithin[kNumClasses] = {0, 0, 0, 0, 0, 1, 0, 1, 0, 1, 2, 3, 4};

// Joint mode hides the family in the (TE, TR, FA) combination. Codes differ
// pairwise on at least two axes and every level is shared by two or more
// families, so no single tag resolves the family; adjacent level ranges
// overlap, so boundary values are ambiguous even per axis.
constexpr int kFamilyCode[7][3] = {{0, 1, 1}, {0, 2, 2}, {1, 0, 1}, {1, 1, 2},
                                   {1, 2, 0}, {2, 0, 2}, {2, 1, 0}};
constexpr double kLevelLo[3] = {0.00, 0.30, 0.60};
constexpr double kLevelHi[3] = {0.40, 0.70, 1.00};

struct Blob {
  double cy, cx, r, amp;
};

struct Recipe {
  int class_id = 0;
  long n_slices = 0;
  long size = 0;
  std::string plane;
  // Realized tag values, constant across the series.
  std::map<Tag, std::string> series_tags;
  // Texture.
  double angle = 0, freq = 0, amp = 0, noise_sd = 0, phase0 = 0;
  std::vector<Blob> blobs;
  // Geometry.
  double origin[3] = {0, 0, 0};
  double spacing = 1.0;
  std::vector<long> file_order;
};

const char* pick(Rng& rng, std::initializer_list<const char*> options,
                 std::initializer_list<double> weights) {
  double u = rng.uniform();
  double acc = 0.0;
  auto w = weights.begin();
  for (const char* o : options) {
    acc += *w++;
    if (u < acc) return o;
  }
  return *(options.end() - 1);
}

Recipe build_recipe(const SynthSpec& spec, long index) {
  Recipe r;
  r.class_id = static_cast<int>(index % kNumClasses);
  Rng rng(hash_mix(hash_mix(spec.seed, kContentSalt),
                   static_cast<uint64_t>(index)));

  r.n_slices = rng.uniform_int(spec.slices_min, spec.slices_max);
  r.size = rng.uniform_int(spec.size_min, spec.size_max);

  auto& t = r.series_tags;

  // Nuisance values, identically distributed for every class.
  static const char* kMakers[] = {"SIEMENS",  "GE MEDICAL SYSTEMS",
                                  "PHILIPS",  "TOSHIBA",
                                  "HITACHI",  "CANON",
                                  "AGFA",     "FUJIFILM"};
  static const char* kModels[] = {"Aera",           "Skyra",
                                  "Avanto",         "Verio",
                                  "Prisma",         "SIGNA HDxt",
                                  "SIGNA Explorer", "Ingenia",
                                  "Achieva",        "Vantage Titan"};
  t[tags::manufacturer] = kMakers[rng.uniform_int(0, 7)];
  t[tags::model_name] = kModels[rng.uniform_int(0, 9)];
  t[tags::patient_position] =
      pick(rng, {"HFS", "FFS", "HFP", "FFP"}, {0.70, 0.20, 0.05, 0.05});
  t[tags::body_part] =
      pick(rng, {"ABDOMEN", "LIVER", "PELVIS"}, {0.60, 0.30, 0.10});
  t[tags::photometric] =
      pick(rng, {"MONOCHROME2", "MONOCHROME1"}, {0.90, 0.10});
  t[tags::field_strength] = rng.bernoulli(0.5) ? "1.5" : "3";
  t[tags::pixel_bandwidth] = fixed(rng.uniform(100, 500), 1);
  t[tags::percent_phase_fov] = fixed(rng.uniform(75, 100), 1);
  t[tags::sar] = fixed(rng.uniform(0.1, 3.5), 2);
  t[tags::number_of_averages] = std::to_string(rng.uniform_int(1, 3));
  t[tags::angio_flag] = rng.bernoulli(0.05) ? "Y" : "N";
  t[tags::pixel_spacing] = [&] {
    std::string s = fixed(rng.uniform(0.6, 1.8), 4);
    return s + "\\" + s;
  }();
  t[tags::modality] = "MR";

  if (spec.mode == SignalMode::joint) {
    int fam = kFamily[r.class_id];
    auto axis_value = [&](int axis) {
      int lv = kFamilyCode[fam][axis];
      return rng.uniform(kLevelLo[lv], kLevelHi[lv]);
    };
    t[tags::echo_time] = fixed(1.0 + 150.0 * axis_value(0), 2);
    t[tags::repetition_time] = fixed(3.0 + 4000.0 * axis_value(1), 2);
    t[tags::flip_angle] = fixed(5.0 + 150.0 * axis_value(2), 1);
    // Every other protocol tag is class-independent noise.
    r.plane = pick(rng, {"AX", "COR", "SAG"}, {0.60, 0.30, 0.10});
    static const char* kSeqNoise[] = {"TRUFI", "TSE2D", "SPC3D"};
    t[tags::sequence_name] = kSeqNoise[rng.uniform_int(0, 2)];
    t[tags::scanning_sequence] =
        pick(rng, {"SE", "GR", "EP"}, {0.40, 0.40, 0.20});
    t[tags::sequence_variant] =
        pick(rng, {"SK", "SP", "OSP"}, {0.40, 0.40, 0.20});
    t[tags::acquisition_type] = rng.bernoulli(0.5) ? "3D" : "2D";
    t[tags::phase_encoding_direction] = rng.bernoulli(0.7) ? "ROW" : "COL";
    t[tags::image_type] = "ORIGINAL\\PRIMARY";
    if (rng.bernoulli(0.4)) t[tags::scan_options] = "FS";
    if (rng.bernoulli(0.3)) t[tags::contrast_agent] = "GADOVIST 1.0";
    t[tags::variable_flip_flag] = rng.bernoulli(0.2) ? "Y" : "N";
    if (rng.bernoulli(0.3))
      t[tags::inversion_time] = fixed(rng.uniform(100, 300), 2);
    t[tags::echo_train_length] = std::to_string(rng.uniform_int(1, 200));
    double thickness = rng.uniform(2.0, 8.0);
    t[tags::slice_thickness] = fixed(thickness, 2);
    r.spacing = thickness * rng.uniform(1.0, 1.25);
    t[tags::spacing_between_slices] = fixed(r.spacing, 2);
    t[tags::echo_numbers] = std::to_string(rng.bernoulli(0.2) ? 2 : 1);
    t[tags::series_number] = std::to_string(rng.uniform_int(1, 12));
    t[tags::series_description] =
        t[tags::sequence_name] + " " + r.plane;
  } else {
    const ClassSig& sig =
        kSig[spec.mode == SignalMode::metadata_only ? r.class_id
                                                    : kNumClasses];
    r.plane = sig.plane;
    t[tags::sequence_name] = sig.seq_name;
    t[tags::scanning_sequence] = sig.scanning;
    t[tags::sequence_variant] = sig.variant;
    t[tags::acquisition_type] = sig.acq;
    t[tags::phase_encoding_direction] = sig.phase_enc;
    t[tags::image_type] = sig.image_type;
    if (sig.scan_options) t[tags::scan_options] = sig.scan_options;
    if (sig.contrast) t[tags::contrast_agent] = "GADOVIST 1.0";
    t[tags::variable_flip_flag] = sig.variable_flip ? "Y" : "N";
    t[tags::repetition_time] = fixed(rng.uniform(sig.tr_lo, sig.tr_hi), 2);
    t[tags::echo_time] = fixed(rng.uniform(sig.te_lo, sig.te_hi), 2);
    if (sig.ti_lo >= 0)
      t[tags::inversion_time] = fixed(rng.uniform(sig.ti_lo, sig.ti_hi), 2);
    t[tags::flip_angle] = fixed(rng.uniform(sig.fa_lo, sig.fa_hi), 1);
    t[tags::echo_train_length] =
        std::to_string(rng.uniform_int(sig.etl_lo, sig.etl_hi));
    double thickness = rng.uniform(sig.thick_lo, sig.thick_hi);
    t[tags::slice_thickness] = fixed(thickness, 2);
    r.spacing = thickness * rng.uniform(1.0, 1.25);
    t[tags::spacing_between_slices] = fixed(r.spacing, 2);
    t[tags::echo_numbers] = std::to_string(sig.echo_numbers);
    t[tags::series_number] =
        std::to_string(sig.series_number_base + rng.uniform_int(0, 1));
    t[tags::series_description] =
        std::string(sig.seq_name) + " " + sig.plane;
  }
  t[tags::study_date] = "20240601";

  static const char* kIop[3][2] = {
      {"1\\0\\0\\0\\1\\0", "AX"},
      {"1\\0\\0\\0\\0\\-1", "COR"},
      {"0\\1\\0\\0\\0\\-1", "SAG"},
  };
  for (const auto& row : kIop)
    if (r.plane == row[1]) t[tags::image_orientation] = row[0];

  for (double& o : r.origin) o = rng.uniform(-100, 100);

  // Texture parameters by mode.
  switch (spec.mode) {
    case SignalMode::image_only:
    case SignalMode::mid_slice_only: {
      int c = r.class_id;
      r.angle = 3.14159265358979323846 * c / kNumClasses +
                rng.uniform(-0.03, 0.03);
      r.freq = 0.020 + 0.0075 * c + rng.uniform(-0.0015, 0.0015);
      r.amp = rng.uniform(0.40, 0.55);
      r.noise_sd = rng.uniform(0.15, 0.25);
      long nb = rng.uniform_int(0, 3);
      for (long b = 0; b < nb; ++b)
        r.blobs.push_back({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                           rng.uniform(0.05, 0.10), 0.10});
      break;
    }
    case SignalMode::joint: {
      // Texture carries only the within-family index; blob count is
      // class-independent clutter.
      int within = kWithin[r.class_id];
      r.angle =
          3.14159265358979323846 * within / 5.0 + rng.uniform(-0.04, 0.04);
      r.freq = 0.030 + 0.020 * within + rng.uniform(-0.002, 0.002);
      r.amp = rng.uniform(0.30, 0.45);
      r.noise_sd = rng.uniform(0.25, 0.35);
      long nb = rng.uniform_int(0, 3);
      for (long b = 0; b < nb; ++b)
        r.blobs.push_back({rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85),
                           rng.uniform(0.05, 0.10), 0.12});
      break;
    }
    case SignalMode::metadata_only: {
      r.amp = 0.0;
      r.noise_sd = rng.uniform(0.20, 0.35);
      long nb = rng.uniform_int(0, 3);
      for (long b = 0; b < nb; ++b)
        r.blobs.push_back({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                           rng.uniform(0.05, 0.10), 0.10});
      break;
    }
  }
  r.phase0 = rng.uniform(0, 6.28318530717958647692);

  r.file_order.resize(static_cast<size_t>(r.n_slices));
  for (long i = 0; i < r.n_slices; ++i)
    r.file_order[static_cast<size_t>(i)] = i;
  rng.shuffle(r.file_order);
  return r;
}

std::map<Tag, std::string> slice_tags_for(const SynthSpec& spec,
                                          const Recipe& r, long index,
                                          long slice) {
  std::map<Tag, std::string> t = r.series_tags;
  long patient = index / spec.series_per_patient;
  char pid[32];
  std::snprintf(pid, sizeof(pid), "SYN%05ld", patient);
  t[tags::patient_id] = pid;
  t[tags::patient_name] = std::string("ANON^") + pid;
  t[tags::study_uid] =
      uid_from(spec.seed, 0x53545544, static_cast<uint64_t>(patient));
  t[tags::series_uid] =
      uid_from(spec.seed, 0x53455249, static_cast<uint64_t>(index));
  t[tags::sop_class_uid] = "1.2.840.10008.5.1.4.1.1.4";
  t[tags::sop_instance_uid] =
      uid_from(spec.seed, 0x534F5055,
               static_cast<uint64_t>(index) * 100000 +
                   static_cast<uint64_t>(slice));
  t[tags::instance_number] = std::to_string(slice + 1);
  t[tags::samples_per_pixel] = "1";
  t[tags::rows] = std::to_string(r.size);
  t[tags::columns] = std::to_string(r.size);
  t[tags::bits_allocated] = "16";
  t[tags::bits_stored] = "16";
  t[tags::high_bit] = "15";
  t[tags::pixel_representation] = "0";

  double pos[3] = {r.origin[0], r.origin[1], r.origin[2]};
  // Step along the slice normal cross(row, col): +z for AX, +y for COR,
  // -x for SAG, so instance order and position order agree.
  int axis = r.plane == "AX" ? 2 : (r.plane == "COR" ? 1 : 0);
  double dir = r.plane == "SAG" ? -1.0 : 1.0;
  pos[axis] += dir * static_cast<double>(slice) * r.spacing;
  t[tags::image_position] = fixed(pos[0], 2) + "\\" + fixed(pos[1], 2) +
                            "\\" + fixed(pos[2], 2);
  t[tags::slice_location] = fixed(pos[axis], 2);
  return t;
}

// Tags that missingness may remove, in ascending tag order. One uniform draw
// is consumed per entry whether or not the tag is present or exempt, so the
// dropped set at rate p1 < p2 is a subset of the one at p2.
constexpr Tag kDroppable[] = {
    tags::image_type,        tags::manufacturer,
    tags::series_description, tags::model_name,
    tags::contrast_agent,    tags::body_part,
    tags::scanning_sequence, tags::sequence_variant,
    tags::scan_options,      tags::acquisition_type,
    tags::sequence_name,     tags::angio_flag,
    tags::slice_thickness,   tags::repetition_time,
    tags::echo_time,         tags::inversion_time,
    tags::number_of_averages, tags::echo_numbers,
    tags::field_strength,    tags::spacing_between_slices,
    tags::echo_train_length, tags::percent_phase_fov,
    tags::pixel_bandwidth,   tags::phase_encoding_direction,
    tags::flip_angle,        tags::variable_flip_flag,
    tags::sar,               tags::patient_position,
    tags::image_position,    tags::image_orientation,
    tags::slice_location,    tags::pixel_spacing,
};

void apply_missingness(const SynthSpec& spec, long index, long slice,
                       std::map<Tag, std::string>& t) {
  Rng miss(hash_mix(hash_mix(hash_mix(spec.seed, kMissSalt),
                             static_cast<uint64_t>(index)),
                    static_cast<uint64_t>(slice)));
  for (Tag tag : kDroppable) {
    double u = miss.uniform();
    if (u >= spec.missing_rate) continue;
    if (tag == tags::sequence_name && spec.mode == SignalMode::metadata_only &&
        !spec.allow_class_tag_missing)
      continue;
    t.erase(tag);
  }
}

bool in_signal_band(const SynthSpec& spec, long slice, long n_slices) {
  if (spec.mode != SignalMode::mid_slice_only) return true;
  double lo = (n_slices - 1) * (0.5 - spec.mid_band / 2.0);
  double hi = (n_slices - 1) * (0.5 + spec.mid_band / 2.0);
  double s = static_cast<double>(slice);
  return s >= lo - 1e-9 && s <= hi + 1e-9;
}

Tensor render_slice(const SynthSpec& spec, const Recipe& r, uint64_t series_seed,
                    long slice) {
  Rng srng(hash_mix(hash_mix(series_seed, kSliceSalt),
                    static_cast<uint64_t>(slice)));
  long n = r.size;
  Tensor img = Tensor::zeros({1, n, n});
  double amp = in_signal_band(spec, slice, r.n_slices) ? r.amp : 0.0;
  double ca = std::cos(r.angle), sa = std::sin(r.angle);
  double phase = r.phase0 + 0.35 * static_cast<double>(slice);
  const double two_pi = 6.28318530717958647692;
  for (long y = 0; y < n; ++y) {
    for (long x = 0; x < n; ++x) {
      double v = 0.5;
      if (amp != 0.0)
        v += amp * std::sin(two_pi * r.freq *
                                (ca * static_cast<double>(x) +
                                 sa * static_cast<double>(y)) +
                            phase);
      for (const Blob& b : r.blobs) {
        double dy = static_cast<double>(y) - b.cy * static_cast<double>(n);
        double dx = static_cast<double>(x) - b.cx * static_cast<double>(n);
        double rr = b.r * static_cast<double>(n);
        v += b.amp * std::exp(-(dy * dy + dx * dx) / (2.0 * rr * rr));
      }
      v += r.noise_sd * srng.normal();
      img[y * n + x] = v;
    }
  }
  return img;
}

void quantize(SynthSlice& s) {
  double lo = s.image[0], hi = s.image[0];
  for (double v : s.image.vec()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double slope = hi > lo ? (hi - lo) / 65535.0 : 1.0;
  s.rescale_slope = slope;
  s.rescale_intercept = lo;
  s.tags[tags::rescale_slope] = format_ds(slope);
  s.tags[tags::rescale_intercept] = format_ds(lo);
}

}  // namespace

SynthSource::SynthSource(SynthSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

SynthSeries SynthSource::make_meta(long index) const {
  if (index < 0 || index >= spec_.series_count)
    throw std::out_of_range("synth series index out of range");
  Recipe r = build_recipe(spec_, index);
  SynthSeries out;
  out.class_id = r.class_id;
  out.file_order = r.file_order;
  out.slices.resize(static_cast<size_t>(r.n_slices));
  for (long s = 0; s < r.n_slices; ++s) {
    SynthSlice& sl = out.slices[static_cast<size_t>(s)];
    sl.tags = slice_tags_for(spec_, r, index, s);
    apply_missingness(spec_, index, s, sl.tags);
  }
  out.series_uid = out.slices[0].tags.at(tags::series_uid);
  out.study_uid = out.slices[0].tags.at(tags::study_uid);
  out.patient_id = out.slices[0].tags.at(tags::patient_id);
  return out;
}

void SynthSource::render_images(long index, SynthSeries& series,
                                const std::vector<long>& picked) const {
  Recipe r = build_recipe(spec_, index);
  uint64_t series_seed = hash_mix(hash_mix(spec_.seed, kContentSalt),
                                  static_cast<uint64_t>(index));
  for (long s : picked) {
    if (s < 0 || s >= r.n_slices)
      throw std::out_of_range("render_images: slice index out of range");
    SynthSlice& sl = series.slices[static_cast<size_t>(s)];
    sl.image = render_slice(spec_, r, series_seed, s);
    quantize(sl);
  }
}

SynthSeries SynthSource::make(long index) const {
  SynthSeries out = make_meta(index);
  std::vector<long> all(out.slices.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<long>(i);
  render_images(index, out, all);
  return out;
}

SynthWriteResult write_synth_dataset(const SynthSpec& spec,
                                     const std::filesystem::path& out) {
  spec.validate();
  SynthSource src(spec);
  std::filesystem::create_directories(out);

  nlohmann::json labels;
  labels["version"] = 1;
  labels["classes"] = class_names();
  labels["series"] = nlohmann::json::object();

  SynthWriteResult res;
  for (long i = 0; i < src.count(); ++i) {
    SynthSeries series = src.make(i);
    std::filesystem::path dir = out / series.patient_id / series.series_uid;
    std::filesystem::create_directories(dir);
    for (size_t s = 0; s < series.slices.size(); ++s) {
      const SynthSlice& sl = series.slices[s];
      DicomWriteSpec w;
      w.sop_instance_uid = sl.tags.at(tags::sop_instance_uid);
      w.elements = sl.tags;
      w.rows = sl.image.shape()[1];
      w.cols = sl.image.shape()[2];
      w.rescale_slope = sl.rescale_slope;
      w.rescale_intercept = sl.rescale_intercept;
      w.pixels.resize(sl.image.vec().size());
      for (size_t k = 0; k < sl.image.vec().size(); ++k) {
        double q = (sl.image.vec()[k] - sl.rescale_intercept) / sl.rescale_slope;
        long raw = std::llround(q);
        w.pixels[k] = static_cast<uint16_t>(std::clamp(raw, 0L, 65535L));
      }
      char name[32];
      std::snprintf(name, sizeof(name), "img_%03ld.dcm",
                    series.file_order[s]);
      write_dicom(dir / name, w);
      ++res.files_written;
    }
    labels["series"][series.series_uid] =
        class_names()[static_cast<size_t>(series.class_id)];
    ++res.series_written;
  }
  res.series_written = src.count();
  res.labels_file = out / "labels.json";
  std::ofstream lf(res.labels_file, std::ios::trunc);
  if (!lf) throw std::runtime_error("cannot write " + res.labels_file.string());
  lf << labels.dump(2) << "\n";
  return res;
}

std::map<std::string, int> read_labels(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("labels parse failure in " + file.string() +
                             ": " + e.what());
  }
  std::map<std::string, int> out;
  for (const auto& [uid, name] : doc.at("series").items())
    out[uid] = class_index(name.get<std::string>());
  return out;
}

}  // namespace dsc
