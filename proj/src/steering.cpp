#include "cavortho/steering.hpp"

namespace cavortho {

double estimate_tau(const ActivationMatrix& z, const Eigen::Ref<const Vector>& labels,
                    const Eigen::Ref<const Vector>& cav) {
  if (labels.size() != z.samples() || cav.size() != z.dim()) {
    throw Error(ErrorCode::InvalidMatrix, "estimate_tau: shape mismatch");
  }
  const double nrm = cav.norm();
  if (!(nrm > 0.0)) throw Error(ErrorCode::DegenerateVector, "steering CAV is zero");
  const Vector proj = z.data() * (cav / nrm);
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] == -1.0) {
      sum += proj[i];
      ++count;
    }
  }
  if (count == 0) {
    throw Error(ErrorCode::SingleClassConcept, "no concept-free samples to estimate tau from");
  }
  return sum / static_cast<double>(count);
}

ActivationMatrix steer(const ActivationMatrix& z, const LabelMatrix& t, const CavSet& cavs,
                       Index target, const SteeringMode& mode) {
  require_compatible(cavs, z);
  if (target < 0 || target >= cavs.concepts()) {
    throw Error(ErrorCode::InvalidConfig, "target concept index out of range");
  }
  const Vector cav = cavs.vector(target).transpose();
  Matrix out = z.data();
  if (const auto* ins = std::get_if<Insert>(&mode)) {
    for (Index i = 0; i < out.rows(); ++i) {
      out.row(i) = insert_concept(z.row(i), cav, ins->step).transpose();
    }
  } else {
    const auto& rem = std::get<Remove>(mode);
    double tau = 0.0;
    if (rem.tau) {
      tau = *rem.tau;
    } else {
      require_same_samples(z, t);
      require_compatible(cavs, t);
      tau = estimate_tau(z, t.column(target), cav);
    }
    for (Index i = 0; i < out.rows(); ++i) {
      out.row(i) = remove_concept(z.row(i), cav, tau).transpose();
    }
  }
  return ActivationMatrix(std::move(out));
}

SteeringReport score_deltas(const ActivationMatrix& before, const ActivationMatrix& after,
                            const CavSet& cavs, Index target) {
  require_compatible(cavs, before);
  if (before.samples() != after.samples() || before.dim() != after.dim()) {
    throw Error(ErrorCode::InvalidMatrix, "steered activations changed shape");
  }
  const Matrix delta = (after.data() - before.data()) * cavs.vectors().transpose();
  SteeringReport report;
  report.target_concept = target;
  report.per_concept_score_delta = delta.cwiseAbs().colwise().mean().transpose();
  report.target_score_delta = report.per_concept_score_delta[target];
  report.per_concept_score_delta[target] = 0.0;
  return report;
}

SteeringReport collateral_report(const ActivationMatrix& z, const LabelMatrix& t,
                                 const CavSet& cavs, Index target, const SteeringMode& mode) {
  const ActivationMatrix steered = steer(z, t, cavs, target, mode);
  return score_deltas(z, steered, cavs, target);
}

}  // namespace cavortho
