#include "cavortho/fit.hpp"

namespace cavortho {
namespace {

void require_binary_column(const ActivationMatrix& z, const Eigen::Ref<const Vector>& t) {
  if (t.size() != z.samples()) {
    throw Error(ErrorCode::InvalidMatrix,
                "label column has " + std::to_string(t.size()) + " entries, expected " +
                    std::to_string(z.samples()));
  }
  bool pos = false;
  bool neg = false;
  for (Index i = 0; i < t.size(); ++i) {
    if (t[i] == 1.0) {
      pos = true;
    } else if (t[i] == -1.0) {
      neg = true;
    } else {
      throw Error(ErrorCode::InvalidMatrix, "label entries must be -1 or +1");
    }
  }
  if (!pos || !neg) {
    throw Error(ErrorCode::SingleClassConcept, "label column has only one class");
  }
}

}  // namespace

std::string_view to_string(FitMethod method) {
  return method == FitMethod::Ridge ? "ridge" : "pattern";
}

FitMethod parse_fit_method(std::string_view text) {
  if (text == "ridge") return FitMethod::Ridge;
  if (text == "pattern") return FitMethod::Pattern;
  throw Error(ErrorCode::InvalidConfig,
              "unknown fit method '" + std::string(text) + "' (expected pattern or ridge)");
}

RidgeFit fit_ridge(const ActivationMatrix& z, const Eigen::Ref<const Vector>& labels) {
  require_binary_column(z, labels);
  const Eigen::RowVectorXd z_mean = z.data().colwise().mean();
  const double t_mean = labels.mean();
  const Matrix zc = z.data().rowwise() - z_mean;
  const Vector tc = labels.array() - t_mean;

  Matrix gram = zc.transpose() * zc;
  gram.diagonal().array() += 1.0;
  const Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::InvalidMatrix, "ridge normal equations are not positive definite");
  }
  RidgeFit fit;
  fit.weights = llt.solve(zc.transpose() * tc);
  fit.bias = t_mean - z_mean.dot(fit.weights);
  return fit;
}

PatternFit fit_pattern(const ActivationMatrix& z, const Eigen::Ref<const Vector>& labels) {
  require_binary_column(z, labels);
  const Eigen::RowVectorXd z_mean = z.data().colwise().mean();
  const double t_mean = labels.mean();
  const Matrix zc = z.data().rowwise() - z_mean;
  const Vector tc = labels.array() - t_mean;

  PatternFit fit;
  fit.pattern = zc.transpose() * tc / tc.squaredNorm();
  fit.offset = z_mean.transpose() - t_mean * fit.pattern;
  return fit;
}

CavSet fit_all(const ActivationMatrix& z, const LabelMatrix& t, FitMethod method) {
  require_same_samples(z, t);
  const Index n = t.concepts();
  Matrix vectors(n, z.dim());
  Vector biases(n);
  const Eigen::RowVectorXd z_mean = z.data().colwise().mean();

  std::string failures;
  ErrorCode first_code = ErrorCode::InvalidMatrix;
  for (Index c = 0; c < n; ++c) {
    const std::string& name = t.concept_names()[c];
    try {
      const Vector col = t.column(c);
      if (method == FitMethod::Ridge) {
        RidgeFit fit = fit_ridge(z, col);
        vectors.row(c) = fit.weights.transpose();
        biases[c] = fit.bias;
      } else {
        PatternFit fit = fit_pattern(z, col);
        vectors.row(c) = fit.pattern.transpose();
        const double nrm = fit.pattern.norm();
        biases[c] = nrm > 0.0 ? z_mean.dot(fit.pattern) / nrm : 0.0;
      }
      if (!(vectors.row(c).squaredNorm() > 0.0)) {
        throw Error(ErrorCode::DegenerateVector, "fitted CAV is zero");
      }
    } catch (const Error& e) {
      if (failures.empty()) first_code = e.code();
      if (!failures.empty()) failures += "; ";
      failures += "concept '" + name + "': " + e.what();
    }
  }
  if (!failures.empty()) throw Error(first_code, failures);
  return CavSet(std::move(vectors), std::move(biases), t.concept_names());
}

}  // namespace cavortho
