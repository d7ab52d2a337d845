#include "dsc/dicom.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace dsc {

namespace {

struct DictEntry {
  Tag tag;
  const char* vr;
};

// Sorted by tag.
constexpr std::array<DictEntry, 62> kDict{{
    {make_tag(0x0002, 0x0000), "UL"}, {make_tag(0x0002, 0x0001), "OB"},
    {make_tag(0x0002, 0x0002), "UI"}, {make_tag(0x0002, 0x0003), "UI"},
    {make_tag(0x0002, 0x0010), "UI"}, {make_tag(0x0002, 0x0012), "UI"},
    {make_tag(0x0002, 0x0013), "SH"}, {make_tag(0x0008, 0x0008), "CS"},
    {make_tag(0x0008, 0x0016), "UI"}, {make_tag(0x0008, 0x0018), "UI"},
    {make_tag(0x0008, 0x0020), "DA"}, {make_tag(0x0008, 0x0060), "CS"},
    {make_tag(0x0008, 0x0070), "LO"}, {make_tag(0x0008, 0x103E), "LO"},
    {make_tag(0x0008, 0x1090), "LO"}, {make_tag(0x0010, 0x0010), "PN"},
    {make_tag(0x0010, 0x0020), "LO"}, {make_tag(0x0018, 0x0010), "LO"},
    {make_tag(0x0018, 0x0015), "CS"}, {make_tag(0x0018, 0x0020), "CS"},
    {make_tag(0x0018, 0x0021), "CS"}, {make_tag(0x0018, 0x0022), "CS"},
    {make_tag(0x0018, 0x0023), "CS"}, {make_tag(0x0018, 0x0024), "SH"},
    {make_tag(0x0018, 0x0025), "CS"}, {make_tag(0x0018, 0x0050), "DS"},
    {make_tag(0x0018, 0x0080), "DS"}, {make_tag(0x0018, 0x0081), "DS"},
    {make_tag(0x0018, 0x0082), "DS"}, {make_tag(0x0018, 0x0083), "DS"},
    {make_tag(0x0018, 0x0086), "IS"}, {make_tag(0x0018, 0x0087), "DS"},
    {make_tag(0x0018, 0x0088), "DS"}, {make_tag(0x0018, 0x0091), "IS"},
    {make_tag(0x0018, 0x0094), "DS"}, {make_tag(0x0018, 0x0095), "DS"},
    {make_tag(0x0018, 0x1312), "CS"}, {make_tag(0x0018, 0x1314), "DS"},
    {make_tag(0x0018, 0x1315), "CS"}, {make_tag(0x0018, 0x1316), "DS"},
    {make_tag(0x0018, 0x5100), "CS"}, {make_tag(0x0020, 0x000D), "UI"},
    {make_tag(0x0020, 0x000E), "UI"}, {make_tag(0x0020, 0x0011), "IS"},
    {make_tag(0x0020, 0x0013), "IS"}, {make_tag(0x0020, 0x0032), "DS"},
    {make_tag(0x0020, 0x0037), "DS"}, {make_tag(0x0020, 0x1041), "DS"},
    {make_tag(0x0020, 0x4000), "LT"},
    {make_tag(0x0028, 0x0002), "US"}, {make_tag(0x0028, 0x0004), "CS"},
    {make_tag(0x0028, 0x0010), "US"}, {make_tag(0x0028, 0x0011), "US"},
    {make_tag(0x0028, 0x0030), "DS"}, {make_tag(0x0028, 0x0100), "US"},
    {make_tag(0x0028, 0x0101), "US"}, {make_tag(0x0028, 0x0102), "US"},
    {make_tag(0x0028, 0x0103), "US"}, {make_tag(0x0028, 0x1052), "DS"},
    {make_tag(0x0028, 0x1053), "DS"},
    {make_tag(0x7FE0, 0x0008), "OF"}, {make_tag(0x7FE0, 0x0010), "OW"},
}};

bool is_string_vr(const std::string& vr) {
  static const char* kStr[] = {"AE", "AS", "CS", "DA", "DS", "DT", "IS", "LO",
                               "LT", "PN", "SH", "ST", "TM", "UI", "UT"};
  for (const char* s : kStr)
    if (vr == s) return true;
  return false;
}

bool is_long_length_vr(const std::string& vr) {
  return vr == "OB" || vr == "OW" || vr == "OF" || vr == "SQ" || vr == "UT" ||
         vr == "UN";
}

std::string trim_value(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  size_t b = 0;
  while (b < s.size() && s[b] == ' ') ++b;
  return s.substr(b);
}

constexpr uint32_t kUndefinedLength = 0xFFFFFFFFu;

class ByteReader {
 public:
  ByteReader(const std::vector<uint8_t>& buf, std::string name)
      : buf_(buf), name_(std::move(name)) {}

  size_t pos() const { return pos_; }
  size_t remaining() const { return buf_.size() - pos_; }
  bool eof() const { return pos_ >= buf_.size(); }

  void need(size_t n) const {
    if (pos_ + n > buf_.size())
      throw DecodeError(name_ + ": truncated at byte " + std::to_string(pos_));
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = buf_[pos_] | (buf_[pos_ + 1] << 8) | (buf_[pos_ + 2] << 16) |
                 (static_cast<uint32_t>(buf_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }
  uint16_t peek_u16() const {
    need(2);
    return static_cast<uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
  }
  Tag peek_tag() const {
    need(4);
    uint16_t g = static_cast<uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
    uint16_t e = static_cast<uint16_t>(buf_[pos_ + 2] | (buf_[pos_ + 3] << 8));
    return make_tag(g, e);
  }
  const uint8_t* bytes(size_t n) {
    need(n);
    const uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  void skip(size_t n) {
    need(n);
    pos_ += n;
  }
  const std::string& name() const { return name_; }

 private:
  const std::vector<uint8_t>& buf_;
  std::string name_;
  size_t pos_ = 0;
};

struct RawElement {
  Tag tag = 0;
  std::string vr;
  uint32_t length = 0;
  const uint8_t* data = nullptr;  // null when skipped
};

// Reads one element header + value. With implicit VR the dictionary supplies
// the VR; unknown tags keep an empty VR and are skipped by the caller.
RawElement read_element(ByteReader& r, bool explicit_vr, bool fetch_value) {
  RawElement e;
  uint16_t group = r.u16();
  uint16_t element = r.u16();
  e.tag = make_tag(group, element);
  if (group == 0xFFFE)
    throw DecodeError(r.name() + ": unexpected delimitation item " +
                      tag_to_string(e.tag));
  if (explicit_vr) {
    const uint8_t* v = r.bytes(2);
    e.vr.assign(reinterpret_cast<const char*>(v), 2);
    if (is_long_length_vr(e.vr)) {
      r.skip(2);
      e.length = r.u32();
    } else {
      e.length = r.u16();
    }
  } else {
    e.length = r.u32();
    const char* vr = dict_vr(e.tag);
    e.vr = vr ? vr : "";
  }
  if (e.length == kUndefinedLength) return e;
  if (fetch_value)
    e.data = r.bytes(e.length);
  else
    r.skip(e.length);
  return e;
}

// Consumes the items of an undefined-length sequence, including nested
// undefined-length content, up to and past the sequence delimitation item.
void skip_undefined_sequence(ByteReader& r, bool explicit_vr) {
  for (;;) {
    uint16_t group = r.u16();
    uint16_t element = r.u16();
    uint32_t len = r.u32();
    Tag t = make_tag(group, element);
    if (t == make_tag(0xFFFE, 0xE0DD)) return;  // sequence delimiter
    if (t != make_tag(0xFFFE, 0xE000))
      throw DecodeError(r.name() + ": malformed sequence near byte " +
                        std::to_string(r.pos()));
    if (len != kUndefinedLength) {
      r.skip(len);
      continue;
    }
    // Undefined-length item: discard elements until the item delimiter.
    while (r.peek_u16() != 0xFFFE) {
      RawElement e = read_element(r, explicit_vr, false);
      if (e.length == kUndefinedLength) {
        if (e.vr == "SQ" || e.vr.empty())
          skip_undefined_sequence(r, explicit_vr);
        else
          throw DecodeError(r.name() + ": undefined length for VR " + e.vr);
      }
    }
    uint16_t g2 = r.u16(), e2 = r.u16();
    uint32_t l2 = r.u32();
    if (make_tag(g2, e2) != make_tag(0xFFFE, 0xE00D) || l2 != 0)
      throw DecodeError(r.name() + ": malformed item delimiter");
  }
}

std::string decode_text(const RawElement& e) {
  std::string s(reinterpret_cast<const char*>(e.data), e.length);
  return trim_value(std::move(s));
}

std::string decode_us(const RawElement& e) {
  std::string out;
  for (uint32_t i = 0; i + 2 <= e.length; i += 2) {
    if (!out.empty()) out += '\\';
    out += std::to_string(
        static_cast<uint16_t>(e.data[i] | (e.data[i + 1] << 8)));
  }
  return out;
}

std::string decode_ul(const RawElement& e) {
  std::string out;
  for (uint32_t i = 0; i + 4 <= e.length; i += 4) {
    if (!out.empty()) out += '\\';
    uint32_t v = e.data[i] | (e.data[i + 1] << 8) | (e.data[i + 2] << 16) |
                 (static_cast<uint32_t>(e.data[i + 3]) << 24);
    out += std::to_string(v);
  }
  return out;
}

long element_long(const DicomFile& f, Tag t, const std::string& name) {
  if (!f.has(t)) throw DecodeError("missing " + name + " " + tag_to_string(t));
  try {
    return std::stol(f.value(t));
  } catch (const std::exception&) {
    throw DecodeError("unparseable " + name + ": '" + f.value(t) + "'");
  }
}

double element_double_or(const DicomFile& f, Tag t, double fallback) {
  if (!f.has(t) || f.value(t).empty()) return fallback;
  try {
    return std::stod(f.value(t));
  } catch (const std::exception&) {
    return fallback;
  }
}

void decode_pixels(DicomFile& out, const RawElement& e,
                   const std::string& name) {
  long rows = element_long(out, tags::rows, "Rows");
  long cols = element_long(out, tags::columns, "Columns");
  if (rows <= 0 || cols <= 0)
    throw DecodeError(name + ": non-positive image dimensions");
  long samples = 1;
  if (out.has(tags::samples_per_pixel))
    samples = element_long(out, tags::samples_per_pixel, "SamplesPerPixel");
  if (samples != 1)
    throw DecodeError(name + ": only single-sample images are supported");
  double slope = element_double_or(out, tags::rescale_slope, 1.0);
  double intercept = element_double_or(out, tags::rescale_intercept, 0.0);
  size_t n = static_cast<size_t>(rows) * static_cast<size_t>(cols);
  out.pixels.present = true;
  out.pixels.rows = rows;
  out.pixels.cols = cols;
  out.pixels.values.resize(n);

  if (e.tag == tags::float_pixel_data) {
    if (e.length < n * 4) throw DecodeError(name + ": short float pixel data");
    for (size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, e.data + 4 * i, 4);
      out.pixels.values[i] = slope * static_cast<double>(v) + intercept;
    }
    return;
  }
  long bits = element_long(out, tags::bits_allocated, "BitsAllocated");
  long repr = 0;
  if (out.has(tags::pixel_representation))
    repr = element_long(out, tags::pixel_representation, "PixelRepresentation");
  if (bits == 8) {
    if (e.length < n) throw DecodeError(name + ": short pixel data");
    for (size_t i = 0; i < n; ++i) {
      double raw = repr ? static_cast<double>(static_cast<int8_t>(e.data[i]))
                        : static_cast<double>(e.data[i]);
      out.pixels.values[i] = slope * raw + intercept;
    }
  } else if (bits == 16) {
    if (e.length < n * 2) throw DecodeError(name + ": short pixel data");
    for (size_t i = 0; i < n; ++i) {
      uint16_t u =
          static_cast<uint16_t>(e.data[2 * i] | (e.data[2 * i + 1] << 8));
      double raw = repr ? static_cast<double>(static_cast<int16_t>(u))
                        : static_cast<double>(u);
      out.pixels.values[i] = slope * raw + intercept;
    }
  } else {
    throw DecodeError(name + ": unsupported BitsAllocated " +
                      std::to_string(bits));
  }
}

void store_element(DicomFile& out, const RawElement& e) {
  if (e.data == nullptr) return;
  if (is_string_vr(e.vr))
    out.elements[e.tag] = decode_text(e);
  else if (e.vr == "US" || e.vr == "SS")
    out.elements[e.tag] = decode_us(e);
  else if (e.vr == "UL")
    out.elements[e.tag] = decode_ul(e);
  // Other VRs (binary blobs, unknown private tags) are not retained.
}

}  // namespace

std::string tag_to_string(Tag t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "(%04X,%04X)", tag_group(t), tag_element(t));
  return buf;
}

Tag tag_from_string(const std::string& s) {
  std::string v = s;
  if (!v.empty() && v.front() == '(') v = v.substr(1);
  if (!v.empty() && v.back() == ')') v.pop_back();
  auto comma = v.find(',');
  if (comma == std::string::npos)
    throw std::invalid_argument("bad tag string: '" + s + "'");
  auto parse_hex = [&](const std::string& part) -> uint16_t {
    size_t used = 0;
    unsigned long x = std::stoul(part, &used, 16);
    if (used != part.size() || x > 0xFFFF)
      throw std::invalid_argument("bad tag string: '" + s + "'");
    return static_cast<uint16_t>(x);
  };
  return make_tag(parse_hex(v.substr(0, comma)), parse_hex(v.substr(comma + 1)));
}

const char* dict_vr(Tag t) {
  auto it = std::lower_bound(
      kDict.begin(), kDict.end(), t,
      [](const DictEntry& d, Tag tag) { return d.tag < tag; });
  if (it != kDict.end() && it->tag == t) return it->vr;
  return nullptr;
}

DicomFile read_dicom(const std::filesystem::path& path, bool read_pixels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  const std::string name = path.filename().string();
  if (buf.size() < 132 || std::memcmp(buf.data() + 128, "DICM", 4) != 0)
    throw DecodeError(name + ": missing DICM marker (not a Part-10 file)");

  ByteReader r(buf, name);
  r.skip(132);

  DicomFile out;
  // File meta group: always explicit VR little endian.
  while (!r.eof() && r.peek_u16() == 0x0002) {
    RawElement e = read_element(r, true, true);
    if (e.length == kUndefinedLength)
      throw DecodeError(name + ": undefined length in meta group");
    store_element(out, e);
  }
  out.transfer_syntax = out.value(make_tag(0x0002, 0x0010));

  bool explicit_vr;
  if (out.transfer_syntax == "1.2.840.10008.1.2.1" ||
      out.transfer_syntax.empty()) {
    explicit_vr = true;
  } else if (out.transfer_syntax == "1.2.840.10008.1.2") {
    explicit_vr = false;
  } else if (out.transfer_syntax == "1.2.840.10008.1.2.2") {
    throw DecodeError(name + ": big-endian transfer syntax is unsupported");
  } else if (out.transfer_syntax.rfind("1.2.840.10008.1.2.4", 0) == 0 ||
             out.transfer_syntax == "1.2.840.10008.1.2.5") {
    throw DecodeError(name + ": compressed transfer syntax " +
                      out.transfer_syntax + " is unsupported");
  } else {
    throw DecodeError(name + ": unknown transfer syntax '" +
                      out.transfer_syntax + "'");
  }

  while (!r.eof()) {
    Tag next = r.peek_tag();
    bool is_pixel_tag =
        (next == tags::pixel_data || next == tags::float_pixel_data);
    RawElement e = read_element(r, explicit_vr,
                                !is_pixel_tag || read_pixels);
    if (e.length == kUndefinedLength) {
      if (e.vr == "SQ" || e.vr.empty()) {
        skip_undefined_sequence(r, explicit_vr);
        continue;
      }
      throw DecodeError(name + ": undefined length for element " +
                        tag_to_string(e.tag));
    }
    if (e.vr == "SQ") continue;  // defined-length sequence: already skipped
    if (e.tag == tags::pixel_data || e.tag == tags::float_pixel_data) {
      if (read_pixels) decode_pixels(out, e, name);
      out.pixels.present = true;
      continue;
    }
    store_element(out, e);
  }
  return out;
}

std::string format_ds(double v) {
  for (int prec = 10; prec >= 1; --prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strlen(buf) <= 16) return buf;
  }
  return "0";  // unreachable for finite doubles
}

namespace {

class ByteWriter {
 public:
  void u16(uint16_t v) {
    buf_.push_back(static_cast<uint8_t>(v & 0xFF));
    buf_.push_back(static_cast<uint8_t>(v >> 8));
  }
  void u32(uint32_t v) {
    u16(static_cast<uint16_t>(v & 0xFFFF));
    u16(static_cast<uint16_t>(v >> 16));
  }
  void raw(const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void append(const ByteWriter& w) { raw(w.buf_.data(), w.buf_.size()); }
  size_t size() const { return buf_.size(); }
  const std::vector<uint8_t>& data() const { return buf_; }

 private:
  std::vector<uint8_t> buf_;
};

std::vector<uint8_t> encode_value(Tag tag, const std::string& vr,
                                  const std::string& value) {
  std::vector<uint8_t> out;
  auto split = [&](char sep) {
    std::vector<std::string> parts;
    size_t start = 0;
    for (size_t i = 0; i <= value.size(); ++i) {
      if (i == value.size() || value[i] == sep) {
        parts.push_back(value.substr(start, i - start));
        start = i + 1;
      }
    }
    return parts;
  };
  if (vr == "US") {
    for (const auto& p : split('\\')) {
      unsigned long v = std::stoul(p);
      if (v > 0xFFFF)
        throw std::invalid_argument("US value out of range for " +
                                    tag_to_string(tag));
      out.push_back(static_cast<uint8_t>(v & 0xFF));
      out.push_back(static_cast<uint8_t>(v >> 8));
    }
    return out;
  }
  if (vr == "UL") {
    for (const auto& p : split('\\')) {
      unsigned long v = std::stoul(p);
      for (int s = 0; s < 32; s += 8)
        out.push_back(static_cast<uint8_t>((v >> s) & 0xFF));
    }
    return out;
  }
  out.assign(value.begin(), value.end());
  if (out.size() % 2) out.push_back(vr == "UI" ? '\0' : ' ');
  return out;
}

void write_element(ByteWriter& w, Tag tag, const std::string& vr,
                   const std::vector<uint8_t>& bytes) {
  if (bytes.size() % 2)
    throw std::invalid_argument("odd element length for " + tag_to_string(tag));
  w.u16(tag_group(tag));
  w.u16(tag_element(tag));
  w.raw(vr.data(), 2);
  if (is_long_length_vr(vr)) {
    w.u16(0);
    w.u32(static_cast<uint32_t>(bytes.size()));
  } else {
    if (bytes.size() > 0xFFFF)
      throw std::invalid_argument("element too long for short VR " + vr);
    w.u16(static_cast<uint16_t>(bytes.size()));
  }
  w.raw(bytes.data(), bytes.size());
}

void write_string_element(ByteWriter& w, Tag tag, const std::string& value) {
  const char* vr = dict_vr(tag);
  if (!vr)
    throw std::invalid_argument("no VR known for tag " + tag_to_string(tag));
  write_element(w, tag, vr, encode_value(tag, vr, value));
}

}  // namespace

void write_dicom(const std::filesystem::path& path,
                 const DicomWriteSpec& spec) {
  if (spec.sop_instance_uid.empty())
    throw std::invalid_argument("write_dicom: sop_instance_uid is required");
  if (spec.rows <= 0 || spec.cols <= 0 ||
      spec.pixels.size() !=
          static_cast<size_t>(spec.rows) * static_cast<size_t>(spec.cols))
    throw std::invalid_argument("write_dicom: pixel buffer does not match "
                                "rows*cols");

  ByteWriter meta;
  write_element(meta, make_tag(0x0002, 0x0001), "OB", {0x00, 0x01});
  write_string_element(meta, make_tag(0x0002, 0x0002), spec.sop_class_uid);
  write_string_element(meta, make_tag(0x0002, 0x0003), spec.sop_instance_uid);
  write_string_element(meta, make_tag(0x0002, 0x0010), "1.2.840.10008.1.2.1");
  write_string_element(meta, make_tag(0x0002, 0x0012),
                       "2.25.84818538724967745039597059847766380783");
  write_string_element(meta, make_tag(0x0002, 0x0013), "DSC_10");

  std::map<Tag, std::string> body = spec.elements;
  body[tags::sop_class_uid] = spec.sop_class_uid;
  body[tags::sop_instance_uid] = spec.sop_instance_uid;
  body[tags::samples_per_pixel] = "1";
  if (!body.count(tags::photometric)) body[tags::photometric] = "MONOCHROME2";
  body[tags::rows] = std::to_string(spec.rows);
  body[tags::columns] = std::to_string(spec.cols);
  body[tags::bits_allocated] = "16";
  body[tags::bits_stored] = "16";
  body[tags::high_bit] = "15";
  body[tags::pixel_representation] = "0";
  body[tags::rescale_intercept] = format_ds(spec.rescale_intercept);
  body[tags::rescale_slope] = format_ds(spec.rescale_slope);

  ByteWriter w;
  static const uint8_t kPreamble[128] = {};
  w.raw(kPreamble, sizeof(kPreamble));
  w.raw("DICM", 4);
  write_element(w, make_tag(0x0002, 0x0000), "UL",
                encode_value(make_tag(0x0002, 0x0000), "UL",
                             std::to_string(meta.size())));
  w.append(meta);
  for (const auto& [tag, value] : body) write_string_element(w, tag, value);

  std::vector<uint8_t> px(spec.pixels.size() * 2);
  for (size_t i = 0; i < spec.pixels.size(); ++i) {
    px[2 * i] = static_cast<uint8_t>(spec.pixels[i] & 0xFF);
    px[2 * i + 1] = static_cast<uint8_t>(spec.pixels[i] >> 8);
  }
  write_element(w, tags::pixel_data, "OW", px);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.data().data()),
            static_cast<std::streamsize>(w.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace dsc
