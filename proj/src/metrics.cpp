#include "cavortho/metrics.hpp"

#include <numeric>

namespace cavortho {

void MetricsHistory::append(MetricsSnapshot snapshot) {
  if (!snapshots_.empty() && snapshot.epoch <= snapshots_.back().epoch) {
    throw Error(ErrorCode::InvalidConfig, "history epochs must be strictly increasing");
  }
  snapshots_.push_back(std::move(snapshot));
}

double orthogonality(const CosineMatrix& cos, Index i) {
  const Index n = cos.size();
  if (n < 2) {
    throw Error(ErrorCode::UndefinedMetric, "orthogonality needs at least two concepts");
  }
  if (i < 0 || i >= n) {
    throw Error(ErrorCode::InvalidConfig, "concept index " + std::to_string(i) + " out of range");
  }
  double sum = 0.0;
  for (Index j = 0; j < n; ++j) {
    if (j != i) sum += std::abs(cos(i, j));
  }
  return std::clamp(1.0 - sum / static_cast<double>(n - 1), 0.0, 1.0);
}

Vector orthogonality(const CosineMatrix& cos) {
  Vector out(cos.size());
  for (Index i = 0; i < cos.size(); ++i) out[i] = orthogonality(cos, i);
  return out;
}

Vector concept_scores(const ActivationMatrix& z, const Eigen::Ref<const Vector>& cav) {
  if (cav.size() != z.dim()) {
    throw Error(ErrorCode::InvalidMatrix,
                "CAV length " + std::to_string(cav.size()) + " does not match activation dimension " +
                    std::to_string(z.dim()));
  }
  return z.data() * cav;
}

double auroc(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Vector>& labels) {
  const Index k = scores.size();
  if (labels.size() != k) {
    throw Error(ErrorCode::InvalidMatrix, "scores and labels differ in length");
  }
  if (!scores.allFinite()) {
    throw Error(ErrorCode::InvalidMatrix, "scores contain NaN or Inf");
  }
  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores[a] < scores[b]; });

  double n_pos = 0.0;
  double rank_sum = 0.0;
  for (Index lo = 0; lo < k;) {
    Index hi = lo + 1;
    while (hi < k && scores[order[hi]] == scores[order[lo]]) ++hi;
    // 1-based ranks lo+1 .. hi share their mean.
    const double midrank = 0.5 * static_cast<double>(lo + 1 + hi);
    for (Index r = lo; r < hi; ++r) {
      const double y = labels[order[r]];
      if (y == 1.0) {
        rank_sum += midrank;
        n_pos += 1.0;
      } else if (y != -1.0) {
        throw Error(ErrorCode::InvalidMatrix, "labels must be -1 or +1");
      }
    }
    lo = hi;
  }
  const double n_neg = static_cast<double>(k) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) {
    throw Error(ErrorCode::SingleClassConcept, "AUROC needs both classes");
  }
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

MetricsSnapshot evaluate(const CavSet& cavs, const ActivationMatrix& z, const LabelMatrix& t,
                         int epoch) {
  require_same_samples(z, t);
  require_compatible(cavs, z);
  require_compatible(cavs, t);

  MetricsSnapshot snap;
  snap.epoch = epoch;
  const Index n = cavs.concepts();
  snap.per_concept_auroc.resize(n);
  const Matrix scores = z.data() * cavs.vectors().transpose();
  for (Index c = 0; c < n; ++c) {
    snap.per_concept_auroc[c] = auroc(scores.col(c), t.column(c));
  }
  snap.per_concept_orthogonality = orthogonality(cosine_matrix(cavs));
  snap.macro_auroc = snap.per_concept_auroc.mean();
  snap.avg_orthogonality = snap.per_concept_orthogonality.mean();
  return snap;
}

}  // namespace cavortho
