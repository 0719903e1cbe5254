#pragma once

#include <limits>
#include <optional>
#include <variant>

#include "cavortho/core.hpp"

namespace cavortho {

/// Adds `step` units along the CAV direction.
struct Insert {
  double step = 0.0;
};

/// Projects activations onto the level `tau` along the CAV direction. When
/// `tau` is unset it is estimated from the concept-free samples.
struct Remove {
  std::optional<double> tau;
};

using SteeringMode = std::variant<Insert, Remove>;

/// z + step * c_hat. A zero step returns z unchanged.
template <typename Derived, typename DerivedC>
Vector insert_concept(const Eigen::MatrixBase<Derived>& z, const Eigen::MatrixBase<DerivedC>& cav,
                      double step) {
  if (z.size() != cav.size()) {
    throw Error(ErrorCode::InvalidMatrix, "activation and CAV differ in length");
  }
  const double nrm = cav.norm();
  if (!(nrm > 0.0)) throw Error(ErrorCode::DegenerateVector, "steering CAV is zero");
  Vector out = z.reshaped();
  if (step == 0.0) return out;
  out += (step / nrm) * cav.reshaped();
  return out;
}

/// z - c_hat (c_hat.z - tau): afterwards c_hat.z' == tau.
template <typename Derived, typename DerivedC>
Vector remove_concept(const Eigen::MatrixBase<Derived>& z, const Eigen::MatrixBase<DerivedC>& cav,
                      double tau) {
  if (z.size() != cav.size()) {
    throw Error(ErrorCode::InvalidMatrix, "activation and CAV differ in length");
  }
  const double nrm = cav.norm();
  if (!(nrm > 0.0)) throw Error(ErrorCode::DegenerateVector, "steering CAV is zero");
  const Vector unit = cav.reshaped() / nrm;
  Vector out = z.reshaped();
  // Correct until the remaining gap is at rounding level. A second removal
  // then stops at the first check, so the operation is exactly idempotent.
  const double slack = 4.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(out.size() + 8);
  for (int pass = 0; pass < 4; ++pass) {
    const double gap = unit.dot(out) - tau;
    if (std::abs(gap) <= slack * (unit.cwiseAbs().dot(out.cwiseAbs()) + std::abs(tau))) break;
    out -= gap * unit;
  }
  return out;
}

/// Mean projection onto c_hat of the samples labelled -1.
double estimate_tau(const ActivationMatrix& z, const Eigen::Ref<const Vector>& labels,
                    const Eigen::Ref<const Vector>& cav);

/// Applies a steering edit with `cavs.vector(target)` to every row of z.
/// Remove without tau estimates it from label column `target`.
ActivationMatrix steer(const ActivationMatrix& z, const LabelMatrix& t, const CavSet& cavs,
                       Index target, const SteeringMode& mode);

struct SteeringReport {
  Index target_concept = 0;
  /// Mean |delta score| per concept; the target entry is zero and reported
  /// in `target_score_delta` instead.
  Vector per_concept_score_delta;
  double target_score_delta = 0.0;

  double collateral() const { return per_concept_score_delta.sum(); }
};

/// Steers every sample and measures the mean absolute change of each
/// concept's score (z . c_j).
SteeringReport collateral_report(const ActivationMatrix& z, const LabelMatrix& t,
                                 const CavSet& cavs, Index target, const SteeringMode& mode);

/// Score deltas between two activation sets under the same CAVs.
SteeringReport score_deltas(const ActivationMatrix& before, const ActivationMatrix& after,
                            const CavSet& cavs, Index target);

}  // namespace cavortho
