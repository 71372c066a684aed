#include "assl/train/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace assl::train {

namespace {
constexpr char kMagic[4] = {'A', 'S', 'S', 'L'};
constexpr uint8_t kVersion = 1;

int64_t dtype_size(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw std::runtime_error("checkpoint: unknown dtype '" + dtype + "'");
}
}  // namespace

void Checkpoint::add_array_f32(const std::string& name, const Tensor<float>& t) {
  Array a;
  a.name = name;
  a.dtype = "f32";
  a.shape = t.shape();
  a.bytes.resize(static_cast<size_t>(t.size()) * sizeof(float));
  std::memcpy(a.bytes.data(), t.data(), a.bytes.size());
  arrays.push_back(std::move(a));
}

Tensor<float> Checkpoint::get_f32(const std::string& name) const {
  const Array* a = find(name);
  if (!a) throw std::runtime_error("checkpoint: no array named '" + name + "'");
  if (a->dtype != "f32")
    throw std::runtime_error("checkpoint: array '" + name + "' is not f32");
  Tensor<float> t(a->shape);
  std::memcpy(t.data(), a->bytes.data(), a->bytes.size());
  return t;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  int64_t offset = 0;
  for (const auto& a : ckpt.arrays) {
    header[a.name] = {{"dtype", a.dtype},
                      {"shape", a.shape},
                      {"offset", offset},
                      {"nbytes", static_cast<int64_t>(a.bytes.size())}};
    offset += static_cast<int64_t>(a.bytes.size());
  }
  header["config"] = to_json(ckpt.config);
  header["epoch"] = ckpt.epoch;
  header["loss_history"] = ckpt.loss_history;

  std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  uint64_t hlen = header_str.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i)
    lenbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& a : ckpt.arrays)
    out.write(reinterpret_cast<const char*>(a.bytes.data()),
              static_cast<std::streamsize>(a.bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: '" + path + "' is missing the magic bytes");
  int vc = in.get();
  if (vc == EOF)
    throw std::runtime_error("checkpoint: truncated before the version byte");
  if (static_cast<uint8_t>(vc) != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(vc) + " (expected " +
                             std::to_string(kVersion) + ")");
  char lenbuf[8];
  if (!in.read(lenbuf, 8))
    throw std::runtime_error("checkpoint: truncated in the header length");
  uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i)
    hlen |= static_cast<uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
  std::string header_str(hlen, '\0');
  if (!in.read(header_str.data(), static_cast<std::streamsize>(hlen)))
    throw std::runtime_error("checkpoint: truncated in the JSON header");
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: corrupt header: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.version = kVersion;
  if (!header.contains("config"))
    throw std::runtime_error("checkpoint: header is missing the config section");
  ckpt.config = snapshot_from_json(header.at("config"));
  if (!header.contains("epoch"))
    throw std::runtime_error("checkpoint: header is missing the epoch section");
  ckpt.epoch = header.at("epoch").get<int64_t>();
  if (header.contains("loss_history"))
    ckpt.loss_history = header.at("loss_history").get<std::vector<double>>();

  // Everything else is an array descriptor; read in offset order.
  struct Desc {
    std::string name;
    std::string dtype;
    std::vector<int64_t> shape;
    int64_t offset, nbytes;
  };
  std::vector<Desc> descs;
  for (auto it = header.begin(); it != header.end(); ++it) {
    if (it.key() == "config" || it.key() == "epoch" || it.key() == "loss_history")
      continue;
    const json& d = it.value();
    descs.push_back({it.key(), d.at("dtype").get<std::string>(),
                     d.at("shape").get<std::vector<int64_t>>(),
                     d.at("offset").get<int64_t>(),
                     d.at("nbytes").get<int64_t>()});
  }
  std::sort(descs.begin(), descs.end(),
            [](const Desc& a, const Desc& b) { return a.offset < b.offset; });
  const std::streampos payload_start = in.tellg();
  for (const auto& d : descs) {
    Checkpoint::Array a;
    a.name = d.name;
    a.dtype = d.dtype;
    a.shape = d.shape;
    if (a.element_count() * dtype_size(d.dtype) != d.nbytes)
      throw std::runtime_error("checkpoint: array '" + d.name +
                               "' has inconsistent shape and byte count");
    a.bytes.resize(static_cast<size_t>(d.nbytes));
    in.seekg(payload_start + std::streampos(d.offset));
    if (!in.read(reinterpret_cast<char*>(a.bytes.data()), d.nbytes))
      throw std::runtime_error("checkpoint: truncated payload for array '" +
                               d.name + "'");
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

void pack_store(Checkpoint& ckpt, const std::string& prefix,
                const nn::ParamStore<float>& store) {
  for (const auto& p : store.params())
    ckpt.add_array_f32(prefix + "." + p.name, p.var->value);
  for (const auto& b : store.buffers())
    ckpt.add_array_f32(prefix + "." + b.name, b.tensor);
}

void unpack_store(const Checkpoint& ckpt, const std::string& prefix,
                  nn::ParamStore<float>& store,
                  std::set<std::string>* shared_claimed) {
  std::set<std::string> local;
  std::set<std::string>& claimed = shared_claimed ? *shared_claimed : local;
  auto restore = [&](const std::string& name, Tensor<float>& dst) {
    const std::string full = prefix + "." + name;
    const Checkpoint::Array* a = ckpt.find(full);
    if (!a)
      throw std::runtime_error("checkpoint: missing parameter '" + full + "'");
    if (a->dtype != "f32")
      throw std::runtime_error("checkpoint: parameter '" + full + "' is not f32");
    if (a->shape != dst.shape()) {
      Tensor<float> probe(a->shape);
      throw std::runtime_error("checkpoint: shape mismatch for '" + full +
                               "': file has " + probe.shape_str() +
                               ", model expects " + dst.shape_str());
    }
    std::memcpy(dst.data(), a->bytes.data(), a->bytes.size());
    claimed.insert(full);
  };
  for (auto& p : store.params()) restore(p.name, p.var->value);
  for (auto& b : store.buffers()) restore(b.name, b.tensor);
  if (!shared_claimed) check_unclaimed(ckpt, prefix, claimed);
}

void check_unclaimed(const Checkpoint& ckpt, const std::string& prefix,
                     const std::set<std::string>& claimed) {
  for (const auto& a : ckpt.arrays) {
    if (a.name.rfind(prefix + ".", 0) == 0 && !claimed.count(a.name))
      throw std::runtime_error("checkpoint: parameter '" + a.name +
                               "' is unclaimed by the model being restored");
  }
}

}  // namespace assl::train
