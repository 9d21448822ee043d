#pragma once

#include <map>
#include <string>
#include <vector>

#include "eegfm/rng.hpp"
#include "eegfm/types.hpp"

namespace eegfm {

// Electrode name -> 3D position, cm. Frame: +x right ear, +y nasion, +z up;
// origin at the head-sphere center, Cz on the +z axis.
class ElectrodeLayout {
 public:
  // Idealized spherical 10-20/10-10 table, radius 9 cm. Same geometry is
  // shipped as data/montage_1010.json; a test keeps the two in sync.
  static const ElectrodeLayout& builtin_1010();

  static ElectrodeLayout from_json(const std::string& text);
  static ElectrodeLayout from_json_file(const std::string& path);
  std::string to_json() const;

  // Positions for the given channel names, in order. Lookup is
  // case-insensitive and accepts the legacy aliases T3/T4/T5/T6 for
  // T7/T8/P7/P8. Unknown names raise one error listing all of them.
  Points3 resolve(const std::vector<std::string>& names) const;

  bool has(const std::string& name) const;
  std::vector<std::string> names() const;
  void set(const std::string& name, const Eigen::Vector3d& p);
  size_t size() const { return table_.size(); }

 private:
  std::map<std::string, Eigen::Vector3d> table_;          // canonical names
  std::map<std::string, std::string> lookup_;             // UPPER -> canonical
  void index(const std::string& name);
};

// Gaussian position noise, iid per coordinate, std in cm. Training-time
// augmentation of the encoding inputs; mask sampling keeps true positions.
Points3 jitter_positions(const Points3& positions, double sigma_cm, Rng& rng);

}  // namespace eegfm
