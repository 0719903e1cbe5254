#pragma once

#include <string>
#include <string_view>

#include "cavortho/core.hpp"

namespace cavortho {

enum class FitMethod { Ridge, Pattern };

std::string_view to_string(FitMethod method);
FitMethod parse_fit_method(std::string_view text);

/// Minimizer of |t - Z w - b|^2 + |w|^2 with an unregularized scalar bias.
struct RidgeFit {
  Vector weights;
  double bias = 0.0;
};

/// Minimizer of |Z - t w^T - 1 b^T|^2: `pattern` is the CAV, `offset` the
/// per-feature intercept.
struct PatternFit {
  Vector pattern;
  Vector offset;
};

RidgeFit fit_ridge(const ActivationMatrix& z, const Eigen::Ref<const Vector>& labels);
PatternFit fit_pattern(const ActivationMatrix& z, const Eigen::Ref<const Vector>& labels);

/// Fits every label column independently. Row c of the result is the fit for
/// column c. Ridge rows store the regression bias; Pattern rows store the
/// projection of the activation mean onto the unit pattern.
CavSet fit_all(const ActivationMatrix& z, const LabelMatrix& t, FitMethod method);

}  // namespace cavortho
