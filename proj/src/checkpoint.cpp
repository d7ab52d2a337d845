#include "dsc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace dsc {

namespace {

void put_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ofstream& out, uint32_t v) { put_bytes(out, &v, 4); }
void put_u64(std::ofstream& out, uint64_t v) { put_bytes(out, &v, 8); }

void put_string(std::ofstream& out, const std::string& s) {
  put_u64(out, s.size());
  put_bytes(out, s.data(), s.size());
}

void get_bytes(std::ifstream& in, void* p, size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw std::runtime_error(std::string("checkpoint: truncated reading ") +
                             what);
}

uint32_t get_u32(std::ifstream& in, const char* what) {
  uint32_t v = 0;
  get_bytes(in, &v, 4, what);
  return v;
}

uint64_t get_u64(std::ifstream& in, const char* what) {
  uint64_t v = 0;
  get_bytes(in, &v, 8, what);
  return v;
}

std::string get_string(std::ifstream& in, const char* what) {
  uint64_t n = get_u64(in, what);
  if (n > (1ull << 32))
    throw std::runtime_error(std::string("checkpoint: implausible size for ") +
                             what);
  std::string s(static_cast<size_t>(n), '\0');
  get_bytes(in, s.data(), s.size(), what);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Classifier& model,
                     const TagSchema& schema) {
  std::vector<const Param*> params;
  std::map<std::string, const Param*> by_name;
  model.visit_params([&](Param& p) {
    if (!by_name.emplace(p.name, &p).second)
      throw std::logic_error("checkpoint: duplicate parameter name " + p.name);
    params.push_back(&p);
  });

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("checkpoint: cannot write " + path.string());
  put_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u64(out, schema.fingerprint());
  put_string(out, model.config().to_json());
  put_string(out, schema.to_json());
  put_u64(out, params.size());
  for (const Param* p : params) {
    put_string(out, p->name);
    const auto& shape = p->value.shape();
    put_u32(out, static_cast<uint32_t>(shape.size()));
    for (long d : shape) put_u64(out, static_cast<uint64_t>(d));
    std::vector<float> buf(p->value.vec().size());
    for (size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<float>(p->value.vec()[i]);
    put_bytes(out, buf.data(), buf.size() * sizeof(float));
  }
  if (!out)
    throw std::runtime_error("checkpoint: write failure on " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  get_bytes(in, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  uint64_t fingerprint = get_u64(in, "fingerprint");

  LoadedCheckpoint loaded;
  loaded.config = ModelConfig::from_json(get_string(in, "config"));
  loaded.schema = TagSchema::from_json(get_string(in, "schema"));
  if (loaded.schema.fingerprint() != fingerprint)
    throw std::runtime_error(
        "checkpoint: schema does not match its recorded fingerprint");
  loaded.model = make_classifier(loaded.config, 0);

  std::map<std::string, Param*> by_name;
  loaded.model->visit_params([&](Param& p) {
    if (!by_name.emplace(p.name, &p).second)
      throw std::logic_error("checkpoint: duplicate parameter name " + p.name);
  });

  uint64_t count = get_u64(in, "tensor count");
  if (count != by_name.size())
    throw std::runtime_error("checkpoint: expected " +
                             std::to_string(by_name.size()) + " tensors, file has " +
                             std::to_string(count));
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(in, "tensor name");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: unknown tensor " + name);
    Param& p = *it->second;
    uint32_t ndim = get_u32(in, "tensor rank");
    std::vector<long> dims(ndim);
    for (auto& d : dims) d = static_cast<long>(get_u64(in, "tensor dim"));
    if (dims != p.value.shape())
      throw std::runtime_error("checkpoint: shape mismatch on " + name);
    std::vector<float> buf(p.value.vec().size());
    get_bytes(in, buf.data(), buf.size() * sizeof(float), "tensor data");
    for (size_t k = 0; k < buf.size(); ++k)
      p.value.vec()[k] = static_cast<double>(buf[k]);
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw std::runtime_error("checkpoint: missing tensor " +
                             by_name.begin()->first);
  return loaded;
}

void snap_params_to_f32(Classifier& model) {
  model.visit_params([](Param& p) {
    for (double& v : p.value.vec())
      v = static_cast<double>(static_cast<float>(v));
  });
}

}  // namespace dsc
