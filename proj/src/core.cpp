#include "cavortho/core.hpp"

#include <set>

namespace cavortho {
namespace {

std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void require_unique_names(const std::vector<std::string>& names, Index expected,
                          const char* what) {
  if (static_cast<Index>(names.size()) != expected) {
    throw Error(ErrorCode::InvalidMatrix,
                std::string(what) + ": expected " + std::to_string(expected) +
                    " concept names, got " + std::to_string(names.size()));
  }
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) {
      throw Error(ErrorCode::InvalidMatrix, std::string(what) + ": empty concept name");
    }
    if (!seen.insert(n).second) {
      throw Error(ErrorCode::InvalidMatrix,
                  std::string(what) + ": duplicate concept name '" + n + "'");
    }
  }
}

Index find_name(const std::vector<std::string>& names, const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<Index>(i);
  }
  std::string avail;
  for (const auto& n : names) {
    if (!avail.empty()) avail += ", ";
    avail += n;
  }
  throw Error(ErrorCode::InvalidConfig,
              "unknown concept '" + name + "'; available: " + avail);
}

}  // namespace

ActivationMatrix::ActivationMatrix(Matrix data) : data_(std::move(data)) {
  if (data_.rows() < 2 || data_.cols() < 1) {
    throw Error(ErrorCode::InvalidMatrix,
                "activation matrix needs at least 2 samples and 1 dimension, got " +
                    shape_str(data_.rows(), data_.cols()));
  }
  if (!data_.allFinite()) {
    throw Error(ErrorCode::InvalidMatrix, "activation matrix contains NaN or Inf");
  }
}

LabelMatrix::LabelMatrix(LabelData data, std::vector<std::string> concept_names)
    : data_(std::move(data)), names_(std::move(concept_names)) {
  if (data_.cols() < 1 || data_.rows() < 1) {
    throw Error(ErrorCode::InvalidMatrix, "label matrix is empty");
  }
  require_unique_names(names_, data_.cols(), "labels");
  for (Index c = 0; c < data_.cols(); ++c) {
    Index pos = 0;
    for (Index i = 0; i < data_.rows(); ++i) {
      const int v = data_(i, c);
      if (v != 1 && v != -1) {
        throw Error(ErrorCode::InvalidMatrix, "label (" + std::to_string(i) + ", " +
                                                  std::to_string(c) + ") = " +
                                                  std::to_string(v) + " is not -1 or +1");
      }
      pos += v == 1;
    }
    if (pos == 0 || pos == data_.rows()) {
      throw Error(ErrorCode::SingleClassConcept,
                  "concept '" + names_[c] + "' has only one label value");
    }
  }
}

Index LabelMatrix::index_of(const std::string& name) const { return find_name(names_, name); }

CavSet::CavSet(Matrix vectors, Vector biases, std::vector<std::string> concept_names)
    : vectors_(std::move(vectors)), biases_(std::move(biases)), names_(std::move(concept_names)) {
  if (vectors_.rows() < 1 || vectors_.cols() < 1) {
    throw Error(ErrorCode::InvalidMatrix, "CAV set is empty");
  }
  if (biases_.size() != vectors_.rows()) {
    throw Error(ErrorCode::InvalidMatrix,
                "CAV set has " + std::to_string(vectors_.rows()) + " vectors but " +
                    std::to_string(biases_.size()) + " biases");
  }
  require_unique_names(names_, vectors_.rows(), "CAV set");
  if (!vectors_.allFinite() || !biases_.allFinite()) {
    throw Error(ErrorCode::InvalidMatrix, "CAV set contains NaN or Inf");
  }
  for (Index c = 0; c < vectors_.rows(); ++c) {
    if (!(vectors_.row(c).squaredNorm() > 0.0)) {
      throw Error(ErrorCode::DegenerateVector, "CAV for concept '" + names_[c] + "' is zero");
    }
  }
}

Index CavSet::index_of(const std::string& name) const { return find_name(names_, name); }

CosineMatrix::CosineMatrix(Matrix data) : data_(std::move(data)) {
  constexpr double tol = 1e-12;
  if (data_.rows() != data_.cols() || data_.rows() < 1) {
    throw Error(ErrorCode::InvalidMatrix, "cosine matrix must be square and nonempty");
  }
  for (Index i = 0; i < data_.rows(); ++i) {
    if (std::abs(data_(i, i) - 1.0) > tol) {
      throw Error(ErrorCode::InvalidMatrix, "cosine matrix diagonal entry is not 1");
    }
    for (Index j = 0; j < data_.cols(); ++j) {
      const double v = data_(i, j);
      if (!std::isfinite(v) || v < -1.0 - tol || v > 1.0 + tol ||
          std::abs(v - data_(j, i)) > tol) {
        throw Error(ErrorCode::InvalidMatrix,
                    "cosine matrix entry (" + std::to_string(i) + ", " + std::to_string(j) +
                        ") violates symmetry or range");
      }
    }
  }
}

CosineMatrix cosine_matrix(const CavSet& cavs) {
  // CavSet already rejects zero rows; row_cosines re-checks for raw input.
  return CosineMatrix(row_cosines(cavs.vectors()));
}

CavSet row_normalize(const CavSet& cavs) {
  return CavSet(normalized_rows(cavs.vectors()), cavs.biases(), cavs.concept_names());
}

void require_same_samples(const ActivationMatrix& z, const LabelMatrix& t) {
  if (z.samples() != t.samples()) {
    throw Error(ErrorCode::InvalidMatrix,
                "activations have " + std::to_string(z.samples()) + " samples but labels have " +
                    std::to_string(t.samples()));
  }
}

void require_compatible(const CavSet& cavs, const ActivationMatrix& z) {
  if (cavs.dim() != z.dim()) {
    throw Error(ErrorCode::InvalidMatrix,
                "CAV dimension " + std::to_string(cavs.dim()) +
                    " does not match activation dimension " + std::to_string(z.dim()));
  }
}

void require_compatible(const CavSet& cavs, const LabelMatrix& t) {
  if (cavs.concepts() != t.concepts()) {
    throw Error(ErrorCode::InvalidMatrix,
                "CAV set has " + std::to_string(cavs.concepts()) + " concepts but labels have " +
                    std::to_string(t.concepts()));
  }
}

}  // namespace cavortho
