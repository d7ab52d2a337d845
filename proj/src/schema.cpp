#include "dsc/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace dsc {

namespace {

std::string fold(const std::string& s) {
  std::string out;
  size_t b = 0, e = s.size();
  while (b < e && s[b] == ' ') ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\0')) --e;
  out.reserve(e - b);
  for (size_t i = b; i < e; ++i)
    out.push_back(static_cast<char>(
        std::toupper(static_cast<unsigned char>(s[i]))));
  return out;
}

std::string first_component(const std::string& s) {
  auto cut = s.find('\\');
  return cut == std::string::npos ? s : s.substr(0, cut);
}

bool any_component_equals(const std::string& value, const std::string& token) {
  size_t start = 0;
  for (size_t i = 0; i <= value.size(); ++i) {
    if (i == value.size() || value[i] == '\\') {
      if (fold(value.substr(start, i - start)) == token) return true;
      start = i + 1;
    }
  }
  return false;
}

std::optional<double> parse_first_double(const std::string& s) {
  std::string part = first_component(s);
  try {
    size_t used = 0;
    double v = std::stod(part, &used);
    while (used < part.size() && part[used] == ' ') ++used;
    if (used != part.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

const char* kind_name(TagKind k) {
  switch (k) {
    case TagKind::categorical: return "categorical";
    case TagKind::continuous: return "continuous";
    case TagKind::flag: return "flag";
  }
  return "?";
}

TagKind kind_from_name(const std::string& s) {
  if (s == "categorical") return TagKind::categorical;
  if (s == "continuous") return TagKind::continuous;
  if (s == "flag") return TagKind::flag;
  throw SchemaError("unknown tag kind '" + s + "'");
}

std::string stat_repr(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TagSchema::TagSchema(std::vector<TagEntry> entries)
    : entries_(std::move(entries)) {
  value_offsets_.reserve(entries_.size());
  long col = 0;
  for (auto& e : entries_) {
    if (e.name.empty()) throw SchemaError("schema entry without a name");
    for (auto& v : e.vocab) v = fold(v);
    e.token = fold(e.token);
    if (e.kind == TagKind::categorical && e.vocab.empty())
      throw SchemaError("categorical entry '" + e.name + "' has no vocab");
    if (e.kind != TagKind::categorical && !e.vocab.empty())
      throw SchemaError("entry '" + e.name + "' is not categorical but has "
                        "a vocab");
    if (e.has_stats && !(e.stddev > 0.0))
      throw SchemaError("entry '" + e.name + "' has non-positive stddev");
    value_offsets_.push_back(col);
    col += e.kind == TagKind::categorical
               ? static_cast<long>(e.vocab.size())
               : 1;
  }
  value_columns_ = col;
  feature_count_ = col + static_cast<long>(entries_.size());
}

long TagSchema::value_column(size_t entry_index) const {
  return value_offsets_.at(entry_index);
}

long TagSchema::indicator_column(size_t entry_index) const {
  return value_columns_ + static_cast<long>(entry_index);
}

std::vector<std::string> TagSchema::column_names() const {
  std::vector<std::string> names(static_cast<size_t>(feature_count_));
  for (size_t i = 0; i < entries_.size(); ++i) {
    const TagEntry& e = entries_[i];
    long base = value_offsets_[i];
    if (e.kind == TagKind::categorical) {
      for (size_t j = 0; j < e.vocab.size(); ++j)
        names[static_cast<size_t>(base) + j] = e.name + "=" + e.vocab[j];
    } else {
      names[static_cast<size_t>(base)] = e.name;
    }
    names[static_cast<size_t>(indicator_column(i))] = e.name + ".present";
  }
  return names;
}

uint64_t TagSchema::fingerprint() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xFFu;  // field separator
    h *= 1099511628211ull;
  };
  mix("tag-schema-v1");
  mix(std::to_string(feature_count_));
  for (const auto& e : entries_) {
    mix(e.name);
    mix(tag_to_string(e.tag));
    mix(kind_name(e.kind));
    for (const auto& v : e.vocab) mix(v);
    mix(e.token);
    mix(e.has_stats ? "1" : "0");
    if (e.has_stats) {
      mix(stat_repr(e.mean));
      mix(stat_repr(e.stddev));
    }
  }
  return h;
}

std::string TagSchema::to_json() const {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["entries"] = nlohmann::json::array();
  for (const auto& e : entries_) {
    nlohmann::json j;
    j["name"] = e.name;
    j["tag"] = tag_to_string(e.tag).substr(1, 9);  // "GGGG,EEEE"
    j["kind"] = kind_name(e.kind);
    if (e.kind == TagKind::categorical) j["vocab"] = e.vocab;
    if (e.kind == TagKind::flag) j["token"] = e.token;
    if (e.has_stats) {
      j["normalization"]["mean"] = e.mean;
      j["normalization"]["stddev"] = e.stddev;
    }
    doc["entries"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

TagSchema TagSchema::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("schema JSON parse failure: ") + e.what());
  }
  try {
    if (doc.at("version").get<int>() != 1)
      throw SchemaError("unsupported schema version");
    std::vector<TagEntry> entries;
    for (const auto& j : doc.at("entries")) {
      TagEntry e;
      e.name = j.at("name").get<std::string>();
      e.tag = tag_from_string(j.at("tag").get<std::string>());
      e.kind = kind_from_name(j.at("kind").get<std::string>());
      if (j.count("vocab"))
        e.vocab = j.at("vocab").get<std::vector<std::string>>();
      if (j.count("token")) e.token = j.at("token").get<std::string>();
      if (j.count("normalization") && !j.at("normalization").is_null()) {
        e.has_stats = true;
        e.mean = j.at("normalization").at("mean").get<double>();
        e.stddev = j.at("normalization").at("stddev").get<double>();
      }
      entries.push_back(std::move(e));
    }
    return TagSchema(std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("schema JSON structure: ") + e.what());
  }
}

void TagSchema::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw SchemaError("cannot write " + path.string());
  out << to_json();
}

TagSchema TagSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

SparseRow FeatureTable::observed_pairs(long s) const {
  SparseRow row;
  for (long f = 0; f < features; ++f)
    if (seen(s, f)) row.add(f, at(s, f));
  return row;
}

std::optional<std::string> classify_orientation(const std::string& iop) {
  double v[6];
  size_t pos = 0;
  for (int i = 0; i < 6; ++i) {
    size_t next = iop.find('\\', pos);
    std::string part = iop.substr(
        pos, next == std::string::npos ? std::string::npos : next - pos);
    try {
      size_t used = 0;
      v[i] = std::stod(part, &used);
      if (used == 0) return std::nullopt;
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (i < 5) {
      if (next == std::string::npos) return std::nullopt;
      pos = next + 1;
    }
  }
  double nx = v[1] * v[5] - v[2] * v[4];
  double ny = v[2] * v[3] - v[0] * v[5];
  double nz = v[0] * v[4] - v[1] * v[3];
  double ax = std::fabs(nx), ay = std::fabs(ny), az = std::fabs(nz);
  if (az >= ax && az >= ay) return std::string("AX");
  if (ay >= ax) return std::string("COR");
  return std::string("SAG");
}

FeatureTable build_feature_table(
    const TagSchema& schema,
    const std::vector<std::map<Tag, std::string>>& slice_tags) {
  FeatureTable t;
  t.slices = static_cast<long>(slice_tags.size());
  t.features = schema.feature_count();
  t.values.assign(static_cast<size_t>(t.slices * t.features), 0.0);
  t.observed.assign(static_cast<size_t>(t.slices * t.features), 0);

  const auto& entries = schema.entries();
  for (long s = 0; s < t.slices; ++s) {
    const auto& tags_map = slice_tags[static_cast<size_t>(s)];
    auto set = [&](long f, double v, bool seen) {
      size_t at = static_cast<size_t>(s * t.features + f);
      t.values[at] = v;
      t.observed[at] = seen ? 1 : 0;
    };
    for (size_t i = 0; i < entries.size(); ++i) {
      const TagEntry& e = entries[i];
      auto it = tags_map.find(e.tag);
      bool present = it != tags_map.end() && !it->second.empty();
      set(schema.indicator_column(i), present ? 1.0 : 0.0, true);
      if (!present) continue;
      const std::string& raw = it->second;
      long base = schema.value_column(i);
      switch (e.kind) {
        case TagKind::categorical: {
          std::string token;
          if (e.tag == tags::image_orientation) {
            auto plane = classify_orientation(raw);
            token = plane ? *plane : fold(first_component(raw));
          } else {
            token = fold(first_component(raw));
          }
          for (size_t j = 0; j < e.vocab.size(); ++j)
            set(base + static_cast<long>(j), e.vocab[j] == token ? 1.0 : 0.0,
                true);
          break;
        }
        case TagKind::continuous: {
          auto v = parse_first_double(raw);
          if (!v) {
            set(schema.indicator_column(i), 0.0, true);
            break;
          }
          double x = *v;
          if (e.has_stats) x = (x - e.mean) / e.stddev;
          set(base, x, true);
          break;
        }
        case TagKind::flag: {
          bool on = e.token.empty() ? !fold(raw).empty()
                                    : any_component_equals(raw, e.token);
          set(base, on ? 1.0 : 0.0, true);
          break;
        }
      }
    }
  }
  return t;
}

void StatAccumulator::add(double v) {
  ++n_;
  double d = v - mean_;
  mean_ += d / static_cast<double>(n_);
  m2_ += d * (v - mean_);
}

double StatAccumulator::mean() const { return n_ ? mean_ : 0.0; }

double StatAccumulator::stddev() const {
  if (n_ == 0) return 1.0;
  double var = m2_ / static_cast<double>(n_);
  return std::max(std::sqrt(std::max(0.0, var)), 1e-6);
}

StatFreezer::StatFreezer(TagSchema schema)
    : schema_(std::move(schema)), accum_(schema_.entries().size()) {}

void StatFreezer::add(const std::map<Tag, std::string>& slice_tags) {
  const auto& entries = schema_.entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].kind != TagKind::continuous) continue;
    auto it = slice_tags.find(entries[i].tag);
    if (it == slice_tags.end() || it->second.empty()) continue;
    auto v = parse_first_double(it->second);
    if (v) accum_[i].add(*v);
  }
}

TagSchema StatFreezer::freeze() const {
  std::vector<TagEntry> entries = schema_.entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].kind != TagKind::continuous) continue;
    if (accum_[i].count() == 0) {
      entries[i].has_stats = false;
      entries[i].mean = 0.0;
      entries[i].stddev = 1.0;
      continue;
    }
    entries[i].has_stats = true;
    entries[i].mean = accum_[i].mean();
    entries[i].stddev = accum_[i].stddev();
  }
  return TagSchema(std::move(entries));
}

TagSchema freeze_statistics(
    const TagSchema& schema,
    const std::vector<std::map<Tag, std::string>>& slice_tags) {
  StatFreezer f(schema);
  for (const auto& tags_map : slice_tags) f.add(tags_map);
  return f.freeze();
}

}  // namespace dsc
