#include "lingsim/embed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <fmt/core.h>

#include "lingsim/common.hpp"

namespace lingsim {

SymmetricEigen symmetric_eigen(std::span<const double> a, std::size_t m) {
  if (a.size() != m * m) throw Error(ErrorKind::shape, "eigen: matrix is not m x m");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> in(a.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(in);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::invalid, "eigen: decomposition did not converge");
  SymmetricEigen out;
  out.values.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + m);
  out.vectors.resize(m * m);
  Eigen::Map<RowMajor>(out.vectors.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)) =
      solver.eigenvectors();
  return out;
}

EmbedCoords classical_mds(std::span<const double> d, std::size_t m, std::vector<std::string> labels,
                          std::size_t dims) {
  if (m < 3) throw Error(ErrorKind::invalid, fmt::format("mds: need at least 3 points, got {}", m));
  if (d.size() != m * m) throw Error(ErrorKind::shape, "mds: distance matrix is not m x m");
  if (labels.size() != m) throw Error(ErrorKind::shape, "mds: label count differs from m");
  if (dims == 0 || dims >= m) throw Error(ErrorKind::invalid, "mds: dims must be in [1, m)");
  double dmax = 0.0;
  for (double x : d) {
    if (!std::isfinite(x) || x < 0.0) throw Error(ErrorKind::invalid, "mds: distances must be finite and >= 0");
    dmax = std::max(dmax, x);
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (std::fabs(d[i * m + i]) > 1e-9)
      throw Error(ErrorKind::invalid, fmt::format("mds: nonzero diagonal at {}", i));
    for (std::size_t j = i + 1; j < m; ++j)
      if (std::fabs(d[i * m + j] - d[j * m + i]) > 1e-9 * std::max(1.0, dmax))
        throw Error(ErrorKind::invalid, fmt::format("mds: asymmetric at ({}, {})", i, j));
  }

  // B = -1/2 J D^2 J
  std::vector<double> sq(m * m), row_mean(m, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      // Symmetrize so B is exactly symmetric.
      const double dij = 0.5 * (d[i * m + j] + d[j * m + i]);
      sq[i * m + j] = i == j ? 0.0 : dij * dij;
      row_mean[i] += sq[i * m + j];
    }
  for (auto& r : row_mean) {
    grand += r;
    r /= static_cast<double>(m);
  }
  grand /= static_cast<double>(m * m);
  std::vector<double> b(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      b[i * m + j] = -0.5 * (sq[i * m + j] - row_mean[i] - row_mean[j] + grand);

  const auto eig = symmetric_eigen(b, m);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return eig.values[x] > eig.values[y]; });

  double scale = 0.0;
  for (double x : eig.values) scale = std::max(scale, std::fabs(x));
  const double neg_tol = 1e-9 * std::max(scale, 1e-300);

  EmbedCoords out;
  out.labels = std::move(labels);
  out.dims = dims;
  out.coords.assign(m * dims, 0.0);
  for (double x : eig.values)
    if (x < -neg_tol) {
      ++out.negative_eigenvalues;
      out.negative_mass += -x;
    }
  for (std::size_t k = 0; k < dims; ++k) {
    const std::size_t col = order[k];
    const double lambda = eig.values[col];
    out.eigenvalues.push_back(lambda);
    const double root = std::sqrt(std::max(lambda, 0.0));
    double vmax = 0.0;
    for (std::size_t i = 0; i < m; ++i) vmax = std::max(vmax, std::fabs(eig.vectors[i * m + col]));
    double sign = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double x = eig.vectors[i * m + col];
      if (std::fabs(x) > 1e-8 * vmax) {
        sign = x < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    for (std::size_t i = 0; i < m; ++i) out.coords[i * dims + k] = sign * root * eig.vectors[i * m + col];
  }
  // Centre exactly; the eigenvectors of B are orthogonal to 1 only up to rounding.
  for (std::size_t k = 0; k < dims; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += out.coords[i * dims + k];
    mean /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) out.coords[i * dims + k] -= mean;
  }

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double e = 0.0;
      for (std::size_t k = 0; k < dims; ++k) {
        const double diff = out.coords[i * dims + k] - out.coords[j * dims + k];
        e += diff * diff;
      }
      const double r = d[i * m + j] - std::sqrt(e);
      num += r * r;
      den += d[i * m + j] * d[i * m + j];
    }
  out.stress = den == 0.0 ? 0.0 : std::sqrt(num / den);
  return out;
}

double procrustes_error(std::span<const double> x, std::span<const double> y, std::size_t m) {
  if (x.size() != y.size() || x.size() != m * 2) throw Error(ErrorKind::shape, "procrustes: shapes differ");
  if (m < 2) throw Error(ErrorKind::invalid, "procrustes: need at least 2 points");
  double cx[2] = {0, 0}, cy[2] = {0, 0};
  for (std::size_t i = 0; i < m; ++i)
    for (int k = 0; k < 2; ++k) {
      cx[k] += x[i * 2 + k];
      cy[k] += y[i * 2 + k];
    }
  for (int k = 0; k < 2; ++k) {
    cx[k] /= static_cast<double>(m);
    cy[k] /= static_cast<double>(m);
  }
  // H = Xc^T Yc. Over 2x2 orthogonal maps the best rotation and the best
  // reflection each have a closed-form angle; the residual is summed directly
  // rather than as sx + sy - 2 tr(QH), which cancels badly near zero.
  double h[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < m; ++i) {
    const double a0 = x[i * 2] - cx[0], a1 = x[i * 2 + 1] - cx[1];
    const double b0 = y[i * 2] - cy[0], b1 = y[i * 2 + 1] - cy[1];
    h[0][0] += a0 * b0;
    h[0][1] += a0 * b1;
    h[1][0] += a1 * b0;
    h[1][1] += a1 * b1;
  }
  auto residual = [&](double q00, double q01, double q10, double q11) {
    double r = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double b0 = y[i * 2] - cy[0], b1 = y[i * 2 + 1] - cy[1];
      const double e0 = x[i * 2] - cx[0] - (q00 * b0 + q01 * b1);
      const double e1 = x[i * 2 + 1] - cx[1] - (q10 * b0 + q11 * b1);
      r += e0 * e0 + e1 * e1;
    }
    return r;
  };
  const double t = std::atan2(h[1][0] - h[0][1], h[0][0] + h[1][1]);
  const double u = std::atan2(h[0][1] + h[1][0], h[0][0] - h[1][1]);
  const double best = std::min(residual(std::cos(t), -std::sin(t), std::sin(t), std::cos(t)),
                               residual(std::cos(u), std::sin(u), std::sin(u), -std::cos(u)));
  return std::sqrt(best / static_cast<double>(m));
}

}  // namespace lingsim
