#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace eegfm {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;  // cm

struct EegRecording {
  std::string id;
  std::vector<std::string> channels;  // row order of `data`
  double rate = 0.0;                  // Hz
  std::string session_id;
  std::string subject_id;
  Points3 positions;  // one row per channel, cm
  std::optional<int> label;
  MatF data;  // C x T
};

}  // namespace eegfm
