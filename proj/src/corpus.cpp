#include "eegfm/corpus.hpp"

#include <bit>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace eegfm {

static_assert(std::endian::native == std::endian::little,
              "corpus payloads are little-endian float32; big-endian hosts unsupported");

namespace fs = std::filesystem;
using nlohmann::json;

void save_corpus(const std::string& dir, const std::vector<EegRecording>& recs) {
  fs::create_directories(dir);
  std::ofstream bin(fs::path(dir) / "corpus.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("save_corpus: cannot write payload in " + dir);
  json meta;
  meta["schema_version"] = 1;
  meta["payload"] = "corpus.bin";
  meta["records"] = json::array();
  uint64_t offset = 0;
  for (const auto& rec : recs) {
    const int c = static_cast<int>(rec.data.rows());
    const int64_t t = rec.data.cols();
    if (static_cast<int>(rec.channels.size()) != c)
      throw std::invalid_argument("save_corpus: channel name/row mismatch in " + rec.id);
    if (rec.positions.rows() != c)
      throw std::invalid_argument("save_corpus: position/channel mismatch in " + rec.id);
    json positions = json::array();
    for (int i = 0; i < c; ++i)
      positions.push_back({rec.positions(i, 0), rec.positions(i, 1), rec.positions(i, 2)});
    json entry = {{"id", rec.id},
                  {"channels", rec.channels},
                  {"rate", rec.rate},
                  {"session_id", rec.session_id},
                  {"subject_id", rec.subject_id},
                  {"positions", positions},
                  {"offset", offset},
                  {"samples", t}};
    entry["label"] = rec.label ? json(*rec.label) : json(nullptr);
    meta["records"].push_back(std::move(entry));
    for (int ch = 0; ch < c; ++ch) {
      // row-major by channel
      std::vector<float> row(t);
      for (int64_t j = 0; j < t; ++j) row[j] = rec.data(ch, j);
      bin.write(reinterpret_cast<const char*>(row.data()), t * sizeof(float));
    }
    offset += static_cast<uint64_t>(c) * t * sizeof(float);
  }
  std::ofstream jf(fs::path(dir) / "corpus.json");
  jf << meta.dump(2) << "\n";
}

std::vector<EegRecording> load_corpus(const std::string& dir) {
  std::ifstream jf(fs::path(dir) / "corpus.json");
  if (!jf) throw std::runtime_error("load_corpus: missing corpus.json in " + dir);
  json meta = json::parse(jf);
  if (!meta.contains("records")) throw std::runtime_error("load_corpus: no records array");
  const std::string payload = meta.value("payload", "corpus.bin");
  std::ifstream bin(fs::path(dir) / payload, std::ios::binary);
  if (!bin) throw std::runtime_error("load_corpus: missing payload " + payload);
  bin.seekg(0, std::ios::end);
  const uint64_t bin_size = static_cast<uint64_t>(bin.tellg());
  std::vector<EegRecording> out;
  for (const auto& entry : meta["records"]) {
    EegRecording rec;
    rec.id = entry.at("id").get<std::string>();
    rec.channels = entry.at("channels").get<std::vector<std::string>>();
    rec.rate = entry.at("rate").get<double>();
    rec.session_id = entry.at("session_id").get<std::string>();
    rec.subject_id = entry.at("subject_id").get<std::string>();
    const auto& pos = entry.at("positions");
    const int c = static_cast<int>(rec.channels.size());
    if (static_cast<int>(pos.size()) != c)
      throw std::runtime_error("load_corpus: position/channel mismatch in " + rec.id);
    rec.positions.resize(c, 3);
    for (int i = 0; i < c; ++i)
      for (int k = 0; k < 3; ++k) rec.positions(i, k) = pos[i][k].get<double>();
    if (!entry.at("label").is_null()) rec.label = entry.at("label").get<int>();
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    const int64_t t = entry.at("samples").get<int64_t>();
    const uint64_t bytes = static_cast<uint64_t>(c) * t * sizeof(float);
    if (offset + bytes > bin_size)
      throw std::runtime_error("load_corpus: payload truncated for record " + rec.id);
    rec.data.resize(c, t);
    bin.seekg(static_cast<std::streamoff>(offset));
    std::vector<float> row(t);
    for (int ch = 0; ch < c; ++ch) {
      bin.read(reinterpret_cast<char*>(row.data()), t * sizeof(float));
      for (int64_t j = 0; j < t; ++j) rec.data(ch, j) = row[j];
    }
    out.push_back(std::move(rec));
  }
  return out;
}

static std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

EegRecording select_channels(const EegRecording& rec, const std::vector<std::string>& keep) {
  if (keep.empty()) throw std::invalid_argument("select_channels: empty channel list");
  std::set<std::string> wanted;
  for (const auto& name : keep) wanted.insert(lower(name));

  std::vector<int> rows;
  std::set<std::string> found;
  for (int i = 0; i < static_cast<int>(rec.channels.size()); ++i) {
    const std::string key = lower(rec.channels[i]);
    if (wanted.count(key)) {
      rows.push_back(i);
      found.insert(key);
    }
  }
  std::string missing;
  for (const auto& name : keep)
    if (!found.count(lower(name))) missing += (missing.empty() ? "" : ", ") + name;
  if (!missing.empty())
    throw std::invalid_argument("select_channels: recording " + rec.id +
                                " has no channel(s): " + missing);

  EegRecording out;
  out.id = rec.id;
  out.rate = rec.rate;
  out.session_id = rec.session_id;
  out.subject_id = rec.subject_id;
  out.label = rec.label;
  out.channels.reserve(rows.size());
  out.positions.resize(static_cast<int64_t>(rows.size()), 3);
  out.data.resize(static_cast<int64_t>(rows.size()), rec.data.cols());
  for (size_t k = 0; k < rows.size(); ++k) {
    out.channels.push_back(rec.channels[rows[k]]);
    out.positions.row(static_cast<int64_t>(k)) = rec.positions.row(rows[k]);
    out.data.row(static_cast<int64_t>(k)) = rec.data.row(rows[k]);
  }
  return out;
}

}  // namespace eegfm
