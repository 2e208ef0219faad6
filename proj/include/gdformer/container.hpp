#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdformer/tensor.hpp"

namespace gdformer {

// Binary tensor container used by checkpoints and the optional dataset
// dump. Layout:
//
//   bytes 0..7    magic "GDFCONT1"
//   bytes 8..15   u64 little-endian manifest byte length M
//   bytes 16..    manifest, UTF-8 JSON
//   then          payload: raw little-endian f64 arrays back to back
//
// The manifest is {"meta": <caller JSON>, "tensors": [{"name", "shape",
// "dtype": "f64", "offset"}...]} with byte offsets into the payload.

struct ContainerError : std::runtime_error {
  explicit ContainerError(const std::string& what) : std::runtime_error(what) {}
};
struct CorruptManifestError : ContainerError {
  explicit CorruptManifestError(const std::string& what) : ContainerError(what) {}
};
struct TruncatedPayloadError : ContainerError {
  explicit TruncatedPayloadError(const std::string& what) : ContainerError(what) {}
};
struct ShapeMismatchError : ContainerError {
  explicit ShapeMismatchError(const std::string& what) : ContainerError(what) {}
};

struct Container {
  nlohmann::json meta;
  std::vector<std::string> order;  // tensor names in file order
  std::map<std::string, Tensor> tensors;
};

void write_container(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);
Container read_container(const std::string& path);

}  // namespace gdformer
