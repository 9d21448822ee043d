#include "eegfm/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace eegfm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; a byte-swapping reader is not implemented");

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error("checkpoint: " + msg);
}

}  // namespace

void save_archive(const std::filesystem::path& dir, const TensorArchive& archive) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["format"] = "f32-le-row-major";
  manifest["meta"] = archive.meta.is_null() ? nlohmann::json::object() : archive.meta;
  nlohmann::json table = nlohmann::json::array();
  int64_t offset = 0;
  for (const NamedTensor& t : archive.tensors) {
    require(t.data.size() == static_cast<size_t>(t.rows * t.cols),
            "tensor " + t.name + " data size does not match its shape");
    table.push_back({{"name", t.name},
                     {"rows", t.rows},
                     {"cols", t.cols},
                     {"offset", offset}});
    offset += static_cast<int64_t>(t.data.size() * sizeof(float));
  }
  manifest["tensors"] = std::move(table);

  {
    std::ofstream out(dir / "manifest.json");
    require(out.good(), "cannot open " + (dir / "manifest.json").string() + " for writing");
    out << manifest.dump(2) << "\n";
    require(out.good(), "failed writing manifest.json");
  }
  {
    std::ofstream out(dir / "weights.bin", std::ios::binary);
    require(out.good(), "cannot open " + (dir / "weights.bin").string() + " for writing");
    for (const NamedTensor& t : archive.tensors)
      out.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    require(out.good(), "failed writing weights.bin");
  }
}

nlohmann::json read_archive_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  require(in.good(), "cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest = nlohmann::json::parse(in);
  require(manifest.value("schema_version", 0) == 1, "unsupported manifest schema version");
  return manifest.value("meta", nlohmann::json::object());
}

TensorArchive load_archive(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    require(in.good(), "cannot open " + (dir / "manifest.json").string());
    manifest = nlohmann::json::parse(in);
  }
  require(manifest.value("schema_version", 0) == 1, "unsupported manifest schema version");
  require(manifest.value("format", "") == "f32-le-row-major",
          "unsupported payload format '" + manifest.value("format", std::string()) + "'");

  std::ifstream bin(dir / "weights.bin", std::ios::binary | std::ios::ate);
  require(bin.good(), "cannot open " + (dir / "weights.bin").string());
  const int64_t file_size = static_cast<int64_t>(bin.tellg());

  TensorArchive a;
  a.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    t.rows = entry.at("rows").get<int64_t>();
    t.cols = entry.at("cols").get<int64_t>();
    const int64_t offset = entry.at("offset").get<int64_t>();
    require(t.rows >= 0 && t.cols >= 0, "tensor " + t.name + " has a negative shape");
    const int64_t bytes = t.rows * t.cols * static_cast<int64_t>(sizeof(float));
    require(offset >= 0 && offset + bytes <= file_size,
            "tensor " + t.name + " extends past the end of weights.bin");
    t.data.resize(static_cast<size_t>(t.rows * t.cols));
    bin.seekg(offset);
    bin.read(reinterpret_cast<char*>(t.data.data()), bytes);
    require(bin.good(), "failed reading tensor " + t.name);
    for (float v : t.data)
      require(std::isfinite(v), "tensor " + t.name + " contains a non-finite value");
    a.tensors.push_back(std::move(t));
  }
  return a;
}

TensorArchive soup_archives(const std::vector<TensorArchive>& archives) {
  require(!archives.empty(), "soup needs at least one archive");
  const TensorArchive& first = archives[0];
  for (size_t k = 1; k < archives.size(); ++k) {
    const TensorArchive& a = archives[k];
    require(a.tensors.size() == first.tensors.size(),
            "soup inputs disagree on tensor count");
    for (size_t i = 0; i < a.tensors.size(); ++i) {
      require(a.tensors[i].name == first.tensors[i].name,
              "soup inputs disagree at tensor " + std::to_string(i) + ": '" +
                  a.tensors[i].name + "' vs '" + first.tensors[i].name + "'");
      require(a.tensors[i].rows == first.tensors[i].rows &&
                  a.tensors[i].cols == first.tensors[i].cols,
              "soup inputs disagree on the shape of " + a.tensors[i].name);
    }
  }
  TensorArchive out;
  out.meta = first.meta;
  out.meta["souped_from"] = archives.size();
  const double count = static_cast<double>(archives.size());
  std::vector<double> vals(archives.size());
  for (size_t i = 0; i < first.tensors.size(); ++i) {
    NamedTensor t;
    t.name = first.tensors[i].name;
    t.rows = first.tensors[i].rows;
    t.cols = first.tensors[i].cols;
    t.data.resize(first.tensors[i].data.size());
    for (size_t e = 0; e < t.data.size(); ++e) {
      for (size_t k = 0; k < archives.size(); ++k)
        vals[k] = static_cast<double>(archives[k].tensors[i].data[e]);
      std::sort(vals.begin(), vals.end());
      double acc = 0.0;
      for (double v : vals) acc += v;
      // True division (not multiplication by a rounded reciprocal): when all
      // inputs are identical the quotient is representable and comes back
      // bit-exact, which is the idempotence contract.
      t.data[e] = static_cast<float>(acc / count);
    }
    out.tensors.push_back(std::move(t));
  }
  return out;
}

}  // namespace eegfm
