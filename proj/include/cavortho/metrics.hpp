#pragma once

#include <vector>

#include "cavortho/core.hpp"

namespace cavortho {

struct MetricsSnapshot {
  int epoch = 0;
  Vector per_concept_auroc;
  Vector per_concept_orthogonality;
  double macro_auroc = 0.0;
  double avg_orthogonality = 0.0;
};

/// Snapshots ordered by strictly increasing epoch.
class MetricsHistory {
 public:
  void append(MetricsSnapshot snapshot);

  const std::vector<MetricsSnapshot>& snapshots() const noexcept { return snapshots_; }
  bool empty() const noexcept { return snapshots_.empty(); }
  std::size_t size() const noexcept { return snapshots_.size(); }
  const MetricsSnapshot& front() const { return snapshots_.front(); }
  const MetricsSnapshot& back() const { return snapshots_.back(); }

 private:
  std::vector<MetricsSnapshot> snapshots_;
};

/// O_i = 1 - mean_{j != i} |cos(c_i, c_j)|. Needs at least two concepts.
double orthogonality(const CosineMatrix& cos, Index i);

/// All O_i at once.
Vector orthogonality(const CosineMatrix& cos);

/// Dot product of every activation row with `cav` (bias excluded).
Vector concept_scores(const ActivationMatrix& z, const Eigen::Ref<const Vector>& cav);

/// Exact ROC-AUC via the Mann-Whitney rank sum with midranks for ties.
/// `labels` holds -1 / +1.
double auroc(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Vector>& labels);

MetricsSnapshot evaluate(const CavSet& cavs, const ActivationMatrix& z, const LabelMatrix& t,
                         int epoch);

}  // namespace cavortho
