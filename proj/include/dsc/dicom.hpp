#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsc {

// (group << 16) | element
using Tag = uint32_t;

constexpr Tag make_tag(uint16_t group, uint16_t element) {
  return (static_cast<Tag>(group) << 16) | element;
}
constexpr uint16_t tag_group(Tag t) { return static_cast<uint16_t>(t >> 16); }
constexpr uint16_t tag_element(Tag t) { return static_cast<uint16_t>(t & 0xFFFF); }

std::string tag_to_string(Tag t);        // "(0008,0060)"
Tag tag_from_string(const std::string&); // "0008,0060" or "(0008,0060)"

// VR for tags this toolkit reads or writes; nullptr when unknown.
const char* dict_vr(Tag t);

namespace tags {
constexpr Tag image_type = make_tag(0x0008, 0x0008);
constexpr Tag sop_class_uid = make_tag(0x0008, 0x0016);
constexpr Tag study_date = make_tag(0x0008, 0x0020);
constexpr Tag sop_instance_uid = make_tag(0x0008, 0x0018);
constexpr Tag modality = make_tag(0x0008, 0x0060);
constexpr Tag manufacturer = make_tag(0x0008, 0x0070);
constexpr Tag series_description = make_tag(0x0008, 0x103E);
constexpr Tag model_name = make_tag(0x0008, 0x1090);
constexpr Tag patient_name = make_tag(0x0010, 0x0010);
constexpr Tag patient_id = make_tag(0x0010, 0x0020);
constexpr Tag contrast_agent = make_tag(0x0018, 0x0010);
constexpr Tag body_part = make_tag(0x0018, 0x0015);
constexpr Tag scanning_sequence = make_tag(0x0018, 0x0020);
constexpr Tag sequence_variant = make_tag(0x0018, 0x0021);
constexpr Tag scan_options = make_tag(0x0018, 0x0022);
constexpr Tag acquisition_type = make_tag(0x0018, 0x0023);
constexpr Tag sequence_name = make_tag(0x0018, 0x0024);
constexpr Tag angio_flag = make_tag(0x0018, 0x0025);
constexpr Tag slice_thickness = make_tag(0x0018, 0x0050);
constexpr Tag repetition_time = make_tag(0x0018, 0x0080);
constexpr Tag echo_time = make_tag(0x0018, 0x0081);
constexpr Tag inversion_time = make_tag(0x0018, 0x0082);
constexpr Tag number_of_averages = make_tag(0x0018, 0x0083);
constexpr Tag echo_numbers = make_tag(0x0018, 0x0086);
constexpr Tag field_strength = make_tag(0x0018, 0x0087);
constexpr Tag spacing_between_slices = make_tag(0x0018, 0x0088);
constexpr Tag echo_train_length = make_tag(0x0018, 0x0091);
constexpr Tag percent_phase_fov = make_tag(0x0018, 0x0094);
constexpr Tag pixel_bandwidth = make_tag(0x0018, 0x0095);
constexpr Tag phase_encoding_direction = make_tag(0x0018, 0x1312);
constexpr Tag flip_angle = make_tag(0x0018, 0x1314);
constexpr Tag variable_flip_flag = make_tag(0x0018, 0x1315);
constexpr Tag sar = make_tag(0x0018, 0x1316);
constexpr Tag patient_position = make_tag(0x0018, 0x5100);
constexpr Tag study_uid = make_tag(0x0020, 0x000D);
constexpr Tag series_uid = make_tag(0x0020, 0x000E);
constexpr Tag series_number = make_tag(0x0020, 0x0011);
constexpr Tag instance_number = make_tag(0x0020, 0x0013);
constexpr Tag image_position = make_tag(0x0020, 0x0032);
constexpr Tag image_orientation = make_tag(0x0020, 0x0037);
constexpr Tag slice_location = make_tag(0x0020, 0x1041);
constexpr Tag samples_per_pixel = make_tag(0x0028, 0x0002);
constexpr Tag photometric = make_tag(0x0028, 0x0004);
constexpr Tag rows = make_tag(0x0028, 0x0010);
constexpr Tag columns = make_tag(0x0028, 0x0011);
constexpr Tag pixel_spacing = make_tag(0x0028, 0x0030);
constexpr Tag bits_allocated = make_tag(0x0028, 0x0100);
constexpr Tag bits_stored = make_tag(0x0028, 0x0101);
constexpr Tag high_bit = make_tag(0x0028, 0x0102);
constexpr Tag pixel_representation = make_tag(0x0028, 0x0103);
constexpr Tag rescale_intercept = make_tag(0x0028, 0x1052);
constexpr Tag rescale_slope = make_tag(0x0028, 0x1053);
constexpr Tag float_pixel_data = make_tag(0x7FE0, 0x0008);
constexpr Tag pixel_data = make_tag(0x7FE0, 0x0010);
}  // namespace tags

struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PixelData {
  bool present = false;
  long rows = 0, cols = 0;
  // Values after RescaleSlope/Intercept, row-major.
  std::vector<double> values;
};

struct DicomFile {
  std::map<Tag, std::string> elements;
  std::string transfer_syntax;
  PixelData pixels;

  bool has(Tag t) const { return elements.count(t) != 0; }
  std::string value(Tag t) const {
    auto it = elements.find(t);
    return it == elements.end() ? std::string() : it->second;
  }
};

// Parses a Part-10 file (preamble + "DICM"). Body may be explicit or
// implicit VR little endian; big-endian and compressed transfer syntaxes are
// rejected with a DecodeError naming the syntax. With read_pixels false the
// pixel element is skipped but still recorded as present.
DicomFile read_dicom(const std::filesystem::path& path, bool read_pixels);

struct DicomWriteSpec {
  std::string sop_class_uid = "1.2.840.10008.5.1.4.1.1.4";  // MR Image Storage
  std::string sop_instance_uid;
  // Body elements as strings; VR comes from the dictionary. Pixel-structure
  // elements are derived from the fields below and must not be supplied here.
  std::map<Tag, std::string> elements;
  long rows = 0, cols = 0;
  std::vector<uint16_t> pixels;  // unsigned 16-bit, row-major
  double rescale_slope = 1.0;
  double rescale_intercept = 0.0;
};

// Writes explicit-VR little-endian Part-10 with a standard meta group.
void write_dicom(const std::filesystem::path& path, const DicomWriteSpec& spec);

// Decimal string for a DS element, at most 16 characters.
std::string format_ds(double v);

}  // namespace dsc
