#pragma once

#include <Eigen/Dense>

namespace hjh {

// Small vectors and matrices for dimension n <= 2. Fixed max size keeps them
// off the heap in per-node loops.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2>;

inline Vec zero_vec(int n) { return Vec::Zero(n); }
inline Mat zero_mat(int n) { return Mat::Zero(n, n); }

inline Vec unit_vec(int n, int k) {
    Vec e = Vec::Zero(n);
    e(k) = 1.0;
    return e;
}

}  // namespace hjh
