#include "stereovox/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "stereovox/io.hpp"

namespace svx {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'V', 'X', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const fs::path& path, const VoxelNet& net, const json& extra) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& p : net.params().all()) {
    const std::uint64_t nbytes = p.value.numel() * sizeof(float);
    tensors.push_back({{"name", p.name}, {"dtype", "f32"}, {"shape", p.value.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string header = json{{"network", to_json(net.config())}, {"tensors", tensors}, {"extra", extra}}.dump();

  std::string blob(kMagic, sizeof(kMagic));
  put_u64(blob, header.size());
  blob += header;
  for (const auto& p : net.params().all()) {
    for (float f : p.value.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open checkpoint for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError(path, "short write");
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError(path, "not a checkpoint (bad magic)");
  const std::uint64_t hlen = get_u64(bytes.data() + 8);
  if (16 + hlen > bytes.size()) throw IoError(path, "truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const json::exception& e) {
    throw IoError(path, std::string("malformed checkpoint header: ") + e.what());
  }
  const std::size_t data_start = 16 + hlen;

  LoadedCheckpoint ck;
  ck.net = std::make_unique<VoxelNet>(network_config_from_json(header.at("network")));
  ck.extra = header.value("extra", json::object());
  std::size_t matched = 0;
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    if (t.at("dtype").get<std::string>() != "f32") throw IoError(path, "tensor " + name + " is not f32");
    auto* p = ck.net->params().find(name);
    if (!p) throw IoError(path, "checkpoint tensor " + name + " does not exist in the network");
    if (t.at("shape").get<std::vector<int>>() != p->value.shape)
      throw IoError(path, "tensor " + name + " has shape " + t.at("shape").dump() + ", network expects " +
                              nn::shape_string(p->value.shape));
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto nbytes = t.at("nbytes").get<std::uint64_t>();
    if (nbytes != p->value.numel() * sizeof(float) || data_start + offset + nbytes > bytes.size())
      throw IoError(path, "tensor " + name + " data out of range");
    const std::uint8_t* src = bytes.data() + data_start + offset;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(src[4 * i + b]) << (8 * b);
      std::memcpy(&p->value.data[i], &bits, sizeof(float));
    }
    ++matched;
  }
  if (matched != ck.net->params().all().size()) throw IoError(path, "checkpoint is missing network tensors");
  return ck;
}

}  // namespace svx
