#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lingsim {

/// Eigen-decomposition of a dense symmetric matrix.
struct SymmetricEigen {
  std::vector<double> values;   // ascending
  std::vector<double> vectors;  // m x m row-major; column k pairs with values[k]
};

SymmetricEigen symmetric_eigen(std::span<const double> a, std::size_t m);

struct EmbedCoords {
  std::vector<std::string> labels;
  std::size_t dims = 2;
  std::vector<double> coords;        // m x dims, row-major, column means 0
  std::vector<double> eigenvalues;   // top `dims`, before clamping
  std::size_t negative_eigenvalues = 0;  // count below -tolerance over the full spectrum
  double negative_mass = 0.0;            // sum of |lambda| over those
  double stress = 0.0;                   // ||D - D_hat||_F / ||D||_F

  double at(std::size_t i, std::size_t k) const { return coords[i * dims + k]; }
};

/// Torgerson scaling of a symmetric, zero-diagonal distance matrix (m >= 3).
/// Each axis is oriented so its first non-negligible entry is positive.
EmbedCoords classical_mds(std::span<const double> distances, std::size_t m, std::vector<std::string> labels,
                          std::size_t dims = 2);

/// Root-mean-square residual after the best rotation/reflection and
/// translation aligning y onto x. Both are m x 2 row-major.
double procrustes_error(std::span<const double> x, std::span<const double> y, std::size_t m);

}  // namespace lingsim
