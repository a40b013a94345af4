// SPDX-License-Identifier: Apache-2.0
#include "skd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "skd/errors.hpp"

namespace fs = std::filesystem;

namespace skd {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'K', 'D', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.arrays) {
    header["arrays"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size()) * sizeof(float);
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, Checkpoint::kVersion);
    put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.arrays)
      os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!os) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFound("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";

  constexpr std::size_t fixed = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < fixed) throw IncompatibleCheckpoint(where + "truncated header");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw IncompatibleCheckpoint(where + "bad magic");
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
  std::memcpy(&hlen, bytes.data() + sizeof kMagic + sizeof version, sizeof hlen);
  if (version != Checkpoint::kVersion)
    throw IncompatibleCheckpoint(where + "format version " + std::to_string(version) + ", expected " +
                                 std::to_string(Checkpoint::kVersion));
  if (hlen > bytes.size() - fixed) throw IncompatibleCheckpoint(where + "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(fixed, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleCheckpoint(where + "unreadable header: " + e.what());
  }

  Checkpoint ckpt;
  const std::size_t payload = fixed + hlen;
  std::uint64_t expected = 0;
  try {
    ckpt.meta = header.at("meta");
    for (const auto& a : header.at("arrays")) {
      const auto shape = a.at("shape").get<Shape>();
      const auto offset = a.at("offset").get<std::uint64_t>();
      const auto count = static_cast<std::uint64_t>(numel(shape));
      if (offset != expected) throw IncompatibleCheckpoint(where + "array offsets are not contiguous");
      expected += count * sizeof(float);
      if (payload + expected > bytes.size()) throw IncompatibleCheckpoint(where + "truncated payload");
      std::vector<float> data(count);
      std::memcpy(data.data(), bytes.data() + payload + offset, count * sizeof(float));
      ckpt.arrays.emplace_back(a.at("name").get<std::string>(), Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleCheckpoint(where + "malformed header: " + e.what());
  }
  if (payload + expected != bytes.size()) throw IncompatibleCheckpoint(where + "unexpected trailing bytes");
  return ckpt;
}

}  // namespace skd
