#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegfm/model.hpp"

namespace eegfm {

// On-disk checkpoint: manifest.json (schema, metadata, tensor table) next to
// weights.bin holding raw little-endian 32-bit floats, row-major, in
// manifest order. Manifest order for a model is its parameter visit order;
// extra tensors (e.g. task heads) may follow the model block.
struct NamedTensor {
  std::string name;
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<float> data;  // rows*cols, row-major
};

struct TensorArchive {
  nlohmann::json meta;  // config, seed, step, free-form
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

void save_archive(const std::filesystem::path& dir, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& dir);

// Reads just the manifest metadata (to construct a model before loading).
nlohmann::json read_archive_meta(const std::filesystem::path& dir);

// Uniform soup: elementwise mean across archives with identical tensor
// tables. Per element the addends are sorted before summing (in double), so
// the result is exactly invariant to the argument order and souping k
// identical archives reproduces them bitwise.
TensorArchive soup_archives(const std::vector<TensorArchive>& archives);

template <typename S>
TensorArchive archive_from_model(MaeModel<S>& model) {
  TensorArchive a;
  model.visit_params([&](Param<S>& p) {
    NamedTensor t;
    t.name = p.name;
    t.rows = p.w.rows();
    t.cols = p.w.cols();
    t.data.resize(static_cast<size_t>(p.w.size()));
    size_t k = 0;
    for (int64_t i = 0; i < p.w.rows(); ++i)
      for (int64_t j = 0; j < p.w.cols(); ++j) t.data[k++] = static_cast<float>(p.w(i, j));
    a.tensors.push_back(std::move(t));
  });
  return a;
}

// Copies the archive's leading tensors into the model, verifying name and
// shape tensor-by-tensor. With require_exact the archive must contain the
// model tensors and nothing else. Returns the number of tensors consumed.
template <typename S>
size_t model_from_archive(const TensorArchive& a, MaeModel<S>& model, bool require_exact = true) {
  size_t idx = 0;
  model.visit_params([&](Param<S>& p) {
    if (idx >= a.tensors.size())
      throw std::runtime_error("checkpoint: archive ends before tensor " + p.name);
    const NamedTensor& t = a.tensors[idx];
    if (t.name != p.name)
      throw std::runtime_error("checkpoint: tensor " + std::to_string(idx) + " is '" + t.name +
                               "', model expects '" + p.name + "'");
    if (t.rows != p.w.rows() || t.cols != p.w.cols())
      throw std::runtime_error("checkpoint: tensor " + t.name + " has shape " +
                               std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                               ", model expects " + std::to_string(p.w.rows()) + "x" +
                               std::to_string(p.w.cols()));
    size_t k = 0;
    for (int64_t i = 0; i < p.w.rows(); ++i)
      for (int64_t j = 0; j < p.w.cols(); ++j) p.w(i, j) = static_cast<S>(t.data[k++]);
    ++idx;
  });
  if (require_exact && idx != a.tensors.size())
    throw std::runtime_error("checkpoint: archive has " +
                             std::to_string(a.tensors.size() - idx) + " unexpected extra tensors");
  return idx;
}

}  // namespace eegfm
