#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "iwf/error.hpp"

namespace iwf {

namespace detail {
inline void require_positive(const Eigen::VectorXd& w, const char* what) {
  if (!(w.array() > 0).all() || !w.allFinite()) throw ParameterError(std::string(what) + ": weights must be positive");
}
}  // namespace detail

// max_q ||row_q||_2 / w_q
inline double block_max_norm(const Eigen::MatrixXd& rows, const Eigen::VectorXd& w) {
  detail::require_positive(w, "block_max_norm");
  if (w.size() != rows.rows()) throw ParameterError("block_max_norm: weight size mismatch");
  double out = 0;
  for (Eigen::Index q = 0; q < rows.rows(); ++q) out = std::max(out, rows.row(q).norm() / w(q));
  return out;
}

// Matrix norm induced by the w-weighted maximum norm:
// max_q (1 / w_q) sum_r |a_qr| w_r.
inline double weighted_matrix_norm(const Eigen::MatrixXd& a, const Eigen::VectorXd& w) {
  detail::require_positive(w, "weighted_matrix_norm");
  if (a.rows() != a.cols() || w.size() != a.rows()) throw ParameterError("weighted_matrix_norm: shape mismatch");
  double out = 0;
  for (Eigen::Index q = 0; q < a.rows(); ++q) out = std::max(out, (a.row(q).cwiseAbs() * w).value() / w(q));
  return out;
}

}  // namespace iwf
