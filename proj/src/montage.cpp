#include "eegfm/montage.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace eegfm {

namespace {

constexpr double kRadiusCm = 9.0;

std::string upper(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

// Legacy 10-20 names for the modern combinatorial ones.
const std::map<std::string, std::string> kAliases = {
    {"T3", "T7"}, {"T4", "T8"}, {"T5", "P7"}, {"T6", "P8"}};

using Eigen::Vector3d;

// Midline arc from nasion (front, +y) over the vertex to inion; pct in [0,1].
Vector3d midline(double pct) {
  const double a = pct * M_PI;
  return {0.0, kRadiusCm * std::cos(a), kRadiusCm * std::sin(a)};
}

// Coronal arc from the left ear over the vertex to the right ear.
Vector3d coronal(double pct) {
  const double a = pct * M_PI;
  return {-kRadiusCm * std::cos(a), 0.0, kRadiusCm * std::sin(a)};
}

// Circumferential ring through Fpz/T7/Oz/T8 (10% above the ear line);
// azimuth in degrees counterclockwise from +x.
Vector3d ring(double azimuth_deg) {
  const double incl = 72.0 * M_PI / 180.0;  // from the vertex
  const double az = azimuth_deg * M_PI / 180.0;
  return {kRadiusCm * std::sin(incl) * std::cos(az), kRadiusCm * std::sin(incl) * std::sin(az),
          kRadiusCm * std::cos(incl)};
}

// Point at fraction t of the arc a -> b along the circle through a, m, b
// (the small circle cut by their common plane). t=0 gives a, t=0.5 gives m
// by construction symmetry, t=1 gives b. This realizes the textbook rule of
// spacing row electrodes along the measured contour through the midline.
Vector3d arc_point(const Vector3d& a, const Vector3d& m, const Vector3d& b, double t) {
  const Vector3d n = (a - m).cross(b - m).normalized();
  const double d = a.dot(n);
  const Vector3d c = d * n;
  const Vector3d u = (a - c).normalized();
  Vector3d w = n.cross(u);
  const double rho = (a - c).norm();
  auto angle = [&](const Vector3d& p) { return std::atan2((p - c).dot(w), (p - c).dot(u)); };
  if (angle(m) < 0.0) w = -w;
  const double tb = angle(b) < 0.0 ? -angle(b) : angle(b);
  const double th = t * tb;
  return c + rho * (std::cos(th) * u + std::sin(th) * w);
}

ElectrodeLayout build_builtin() {
  ElectrodeLayout lay;
  const std::vector<std::pair<std::string, double>> mid = {
      {"Fpz", 0.10}, {"AFz", 0.20}, {"Fz", 0.30},  {"FCz", 0.40}, {"Cz", 0.50},
      {"CPz", 0.60}, {"Pz", 0.70},  {"POz", 0.80}, {"Oz", 0.90}};
  for (const auto& [name, pct] : mid) lay.set(name, midline(pct));

  const std::vector<std::pair<std::string, double>> cor = {
      {"T7", 0.10}, {"C5", 0.20}, {"C3", 0.30}, {"C1", 0.40},
      {"C2", 0.60}, {"C4", 0.70}, {"C6", 0.80}, {"T8", 0.90}};
  for (const auto& [name, pct] : cor) lay.set(name, coronal(pct));

  const std::vector<std::pair<std::string, double>> circ = {
      {"Fp1", 108.0}, {"AF7", 126.0}, {"F7", 144.0},  {"FT7", 162.0}, {"TP7", 198.0},
      {"P7", 216.0},  {"PO7", 234.0}, {"O1", 252.0},  {"O2", 288.0},  {"PO8", 306.0},
      {"P8", 324.0},  {"TP8", 342.0}, {"FT8", 18.0},  {"F8", 36.0},   {"AF8", 54.0},
      {"Fp2", 72.0}};
  for (const auto& [name, az] : circ) lay.set(name, ring(az));

  struct Row {
    std::string left, mid, right;
    std::vector<std::pair<std::string, double>> inner;  // name, fraction left->right
  };
  const std::vector<Row> rows = {
      {"AF7", "AFz", "AF8", {{"AF3", 0.25}, {"AF4", 0.75}}},
      {"F7",
       "Fz",
       "F8",
       {{"F5", 0.125}, {"F3", 0.25}, {"F1", 0.375}, {"F2", 0.625}, {"F4", 0.75}, {"F6", 0.875}}},
      {"FT7",
       "FCz",
       "FT8",
       {{"FC5", 0.125},
        {"FC3", 0.25},
        {"FC1", 0.375},
        {"FC2", 0.625},
        {"FC4", 0.75},
        {"FC6", 0.875}}},
      {"TP7",
       "CPz",
       "TP8",
       {{"CP5", 0.125},
        {"CP3", 0.25},
        {"CP1", 0.375},
        {"CP2", 0.625},
        {"CP4", 0.75},
        {"CP6", 0.875}}},
      {"P7",
       "Pz",
       "P8",
       {{"P5", 0.125}, {"P3", 0.25}, {"P1", 0.375}, {"P2", 0.625}, {"P4", 0.75}, {"P6", 0.875}}},
      {"PO7", "POz", "PO8", {{"PO3", 0.25}, {"PO4", 0.75}}},
  };
  for (const auto& row : rows) {
    const Points3 ends = lay.resolve({row.left, row.mid, row.right});
    for (const auto& [name, frac] : row.inner)
      lay.set(name, arc_point(ends.row(0), ends.row(1), ends.row(2), frac));
  }
  return lay;
}

}  // namespace

const ElectrodeLayout& ElectrodeLayout::builtin_1010() {
  static const ElectrodeLayout lay = build_builtin();
  return lay;
}

void ElectrodeLayout::set(const std::string& name, const Eigen::Vector3d& p) {
  table_[name] = p;
  index(name);
}

void ElectrodeLayout::index(const std::string& name) { lookup_[upper(name)] = name; }

bool ElectrodeLayout::has(const std::string& name) const {
  const std::string u = upper(name);
  if (lookup_.count(u)) return true;
  const auto alias = kAliases.find(u);
  return alias != kAliases.end() && lookup_.count(upper(alias->second)) > 0;
}

Points3 ElectrodeLayout::resolve(const std::vector<std::string>& names) const {
  Points3 out(static_cast<int>(names.size()), 3);
  std::string unknown;
  for (size_t i = 0; i < names.size(); ++i) {
    std::string u = upper(names[i]);
    const auto alias = kAliases.find(u);
    if (alias != kAliases.end()) u = upper(alias->second);
    const auto hit = lookup_.find(u);
    if (hit == lookup_.end()) {
      unknown += unknown.empty() ? names[i] : ", " + names[i];
      continue;
    }
    out.row(static_cast<int>(i)) = table_.at(hit->second).transpose();
  }
  if (!unknown.empty())
    throw std::invalid_argument("ElectrodeLayout: unknown electrode names: " + unknown);
  return out;
}

std::vector<std::string> ElectrodeLayout::names() const {
  std::vector<std::string> out;
  out.reserve(table_.size());
  for (const auto& [name, _] : table_) out.push_back(name);
  return out;
}

ElectrodeLayout ElectrodeLayout::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("layout: top level must be an object");
  ElectrodeLayout lay;
  for (const auto& [name, val] : j.items()) {
    if (!val.is_array() || val.size() != 3)
      throw std::invalid_argument("layout: '" + name + "' must map to [x, y, z]");
    lay.set(name, Eigen::Vector3d(val[0].get<double>(), val[1].get<double>(),
                                  val[2].get<double>()));
  }
  return lay;
}

ElectrodeLayout ElectrodeLayout::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("layout: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string ElectrodeLayout::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, p] : table_) j[name] = {p.x(), p.y(), p.z()};
  return j.dump(2);
}

Points3 jitter_positions(const Points3& positions, double sigma_cm, Rng& rng) {
  Points3 out = positions;
  if (sigma_cm == 0.0) return out;
  if (sigma_cm < 0.0) throw std::invalid_argument("jitter_positions: sigma must be >= 0");
  for (int i = 0; i < out.rows(); ++i)
    for (int k = 0; k < 3; ++k) out(i, k) += rng.normal(0.0, sigma_cm);
  return out;
}

}  // namespace eegfm
