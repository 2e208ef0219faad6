#include "gdformer/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace gdformer {

namespace {

constexpr char kMagic[8] = {'G', 'D', 'F', 'C', 'O', 'N', 'T', '1'};

void byteswap_doubles(std::vector<double>& v) {
  for (double& d : v) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    u = __builtin_bswap64(u);
    std::memcpy(&d, &u, 8);
  }
}

std::uint64_t to_le64(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

}  // namespace

void write_container(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t->shape;
    entry["dtype"] = "f64";
    entry["offset"] = offset;
    list.push_back(std::move(entry));
    offset += static_cast<std::uint64_t>(t->numel()) * 8;
  }
  manifest["tensors"] = std::move(list);
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContainerError("cannot open for writing: " + path);
  out.write(kMagic, 8);
  const std::uint64_t len = to_le64(text.size());
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : tensors) {
    if constexpr (std::endian::native == std::endian::big) {
      std::vector<double> copy = *t->values;
      byteswap_doubles(copy);
      out.write(reinterpret_cast<const char*>(copy.data()),
                static_cast<std::streamsize>(copy.size() * 8));
    } else {
      out.write(reinterpret_cast<const char*>(t->values->data()),
                static_cast<std::streamsize>(t->numel() * 8));
    }
  }
  if (!out) throw ContainerError("write failed: " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw CorruptManifestError("corrupt manifest: bad magic in " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  if (in.gcount() != 8) throw CorruptManifestError("corrupt manifest: missing length in " + path);
  len = to_le64(len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len)
    throw CorruptManifestError("corrupt manifest: truncated manifest in " + path);

  nlohmann::json manifest = nlohmann::json::parse(text, nullptr, false);
  if (manifest.is_discarded() || !manifest.contains("tensors") || !manifest["tensors"].is_array())
    throw CorruptManifestError("corrupt manifest: invalid JSON in " + path);

  Container c;
  c.meta = manifest.value("meta", nlohmann::json::object());
  const std::uint64_t payload_start = 16 + len;
  for (const auto& entry : manifest["tensors"]) {
    if (!entry.contains("name") || !entry.contains("shape") || !entry.contains("offset"))
      throw CorruptManifestError("corrupt manifest: incomplete tensor entry in " + path);
    const std::string name = entry["name"].get<std::string>();
    std::vector<std::size_t> shape = entry["shape"].get<std::vector<std::size_t>>();
    const std::uint64_t offset = entry["offset"].get<std::uint64_t>();
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> data(n);
    in.seekg(static_cast<std::streamoff>(payload_start + offset));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 8));
    if (static_cast<std::size_t>(in.gcount()) != n * 8)
      throw TruncatedPayloadError("truncated payload: tensor '" + name + "' in " + path);
    if constexpr (std::endian::native == std::endian::big) byteswap_doubles(data);
    c.order.push_back(name);
    c.tensors.emplace(name, Tensor::from(std::move(shape), std::move(data)));
  }
  return c;
}

}  // namespace gdformer
