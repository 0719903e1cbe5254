#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cavortho/error.hpp"

namespace cavortho {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using LabelData = Eigen::MatrixXi;

// ---------------------------------------------------------------------------
// Geometry on raw Eigen expressions
// ---------------------------------------------------------------------------

/// Cosine similarity u.v / (|u| |v|), clamped to [-1, 1].
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar cosine(const Eigen::MatrixBase<DerivedU>& u,
                                 const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  if (u.size() != v.size()) {
    throw Error(ErrorCode::InvalidMatrix, "cosine: vectors differ in length (" +
                                              std::to_string(u.size()) + " vs " +
                                              std::to_string(v.size()) + ")");
  }
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (!(nu > Scalar(0)) || !(nv > Scalar(0))) {
    throw Error(ErrorCode::DegenerateVector, "cosine: zero-norm vector");
  }
  const Scalar c = u.reshaped().dot(v.reshaped()) / (nu * nv);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

/// Copy of `m` with every row scaled to unit Euclidean norm. Throws
/// DegenerateVector naming the first zero row.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
normalized_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = m;
  for (Index i = 0; i < out.rows(); ++i) {
    const Scalar nrm = out.row(i).norm();
    if (!(nrm > Scalar(0))) {
      throw Error(ErrorCode::DegenerateVector,
                  "row " + std::to_string(i) + " has zero norm");
    }
    out.row(i) /= nrm;
  }
  return out;
}

/// Pairwise cosine matrix of the rows of `m`: symmetric, unit diagonal,
/// entries clamped to [-1, 1].
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
row_cosines(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const auto unit = normalized_rows(m);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> g = unit * unit.transpose();
  for (Index i = 0; i < g.rows(); ++i) {
    g(i, i) = Scalar(1);
    for (Index j = i + 1; j < g.cols(); ++j) {
      const Scalar v = std::clamp(Scalar(0.5) * (g(i, j) + g(j, i)), Scalar(-1), Scalar(1));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Validated containers
// ---------------------------------------------------------------------------

/// k x m latent activations, one sample per row.
class ActivationMatrix {
 public:
  explicit ActivationMatrix(Matrix data);

  const Matrix& data() const noexcept { return data_; }
  Index samples() const noexcept { return data_.rows(); }
  Index dim() const noexcept { return data_.cols(); }
  auto row(Index i) const { return data_.row(i); }

 private:
  Matrix data_;
};

/// k x n binary concept labels in {-1, +1} with one name per column.
class LabelMatrix {
 public:
  LabelMatrix(LabelData data, std::vector<std::string> concept_names);

  const LabelData& data() const noexcept { return data_; }
  const std::vector<std::string>& concept_names() const noexcept { return names_; }
  Index samples() const noexcept { return data_.rows(); }
  Index concepts() const noexcept { return data_.cols(); }

  /// Label column c as reals.
  Vector column(Index c) const { return data_.col(c).cast<double>(); }
  Matrix as_real() const { return data_.cast<double>(); }

  /// Column index of a concept name; throws InvalidConfig listing the
  /// available names when absent.
  Index index_of(const std::string& name) const;

 private:
  LabelData data_;
  std::vector<std::string> names_;
};

/// n x m concept activation vectors (one per row) with a scalar bias each.
class CavSet {
 public:
  CavSet(Matrix vectors, Vector biases, std::vector<std::string> concept_names);

  const Matrix& vectors() const noexcept { return vectors_; }
  const Vector& biases() const noexcept { return biases_; }
  const std::vector<std::string>& concept_names() const noexcept { return names_; }
  Index concepts() const noexcept { return vectors_.rows(); }
  Index dim() const noexcept { return vectors_.cols(); }
  auto vector(Index c) const { return vectors_.row(c); }

  Index index_of(const std::string& name) const;

 private:
  Matrix vectors_;
  Vector biases_;
  std::vector<std::string> names_;
};

/// Pairwise cosine similarities between CAVs.
class CosineMatrix {
 public:
  explicit CosineMatrix(Matrix data);

  const Matrix& data() const noexcept { return data_; }
  Index size() const noexcept { return data_.rows(); }
  double operator()(Index i, Index j) const { return data_(i, j); }

 private:
  Matrix data_;
};

CosineMatrix cosine_matrix(const CavSet& cavs);

/// Same set with unit-norm rows; biases and names carried over.
CavSet row_normalize(const CavSet& cavs);

// Shape checks shared by the other modules; all throw InvalidMatrix.
void require_same_samples(const ActivationMatrix& z, const LabelMatrix& t);
void require_compatible(const CavSet& cavs, const ActivationMatrix& z);
void require_compatible(const CavSet& cavs, const LabelMatrix& t);

}  // namespace cavortho
