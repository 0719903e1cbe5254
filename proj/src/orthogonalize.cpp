#include "cavortho/orthogonalize.hpp"

#include <cmath>
#include <random>

namespace cavortho {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

double orth_value(const Matrix& cavs, const Matrix& weights_sq) {
  const Matrix unit = normalized_rows(cavs);
  Matrix dev = unit * unit.transpose();
  dev.diagonal().array() -= 1.0;
  return (weights_sq.array() * dev.array().square()).sum();
}

// d/dC of |W o (U U^T - I)|^2 with U = rownorm(C). With M = W o W o (UU^T - I)
// the gradient in U is 4 M U; each row then passes through the Jacobian of
// u = c / |c|, which is (I - u u^T) / |c|.
Matrix orth_gradient(const Matrix& cavs, const Matrix& weights_sq) {
  const Matrix unit = normalized_rows(cavs);
  Matrix dev = unit * unit.transpose();
  dev.diagonal().array() -= 1.0;
  const Matrix m = weights_sq.cwiseProduct(dev);
  Matrix g = 4.0 * m * unit;
  for (Index i = 0; i < g.rows(); ++i) {
    const double radial = g.row(i).dot(unit.row(i));
    g.row(i) = (g.row(i) - radial * unit.row(i)) / cavs.row(i).norm();
  }
  return g;
}

WeightMatrix weights_for(const OrthConfig& config, Index n) {
  return WeightMatrix(n, config.beta, config.target_pairs);
}

CavSet with_projection_biases(Matrix vectors, const ActivationMatrix& z,
                              const std::vector<std::string>& names) {
  const Eigen::RowVectorXd z_mean = z.data().colwise().mean();
  Vector biases(vectors.rows());
  for (Index c = 0; c < vectors.rows(); ++c) {
    const double nrm = vectors.row(c).norm();
    biases[c] = nrm > 0.0 ? z_mean.dot(vectors.row(c)) / nrm : 0.0;
  }
  return CavSet(std::move(vectors), std::move(biases), names);
}

}  // namespace

std::string_view to_string(Optimizer optimizer) {
  return optimizer == Optimizer::Adam ? "adam" : "gd";
}

Optimizer parse_optimizer(std::string_view text) {
  if (text == "adam") return Optimizer::Adam;
  if (text == "gd") return Optimizer::GradientDescent;
  throw Error(ErrorCode::InvalidConfig,
              "unknown optimizer '" + std::string(text) + "' (expected adam or gd)");
}

void OrthConfig::validate(Index concepts) const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be finite and >= 0");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta must be finite and > 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (epochs < 1) fail("epochs must be positive");
  if (eval_every < 1) fail("eval_every must be positive");
  for (const auto& p : target_pairs) {
    if (p.first < 0 || p.second < 0 || p.first >= concepts || p.second >= concepts) {
      fail("target pair (" + std::to_string(p.first) + ", " + std::to_string(p.second) +
           ") references a concept outside 0.." + std::to_string(concepts - 1));
    }
    if (p.first == p.second) fail("target pair must join two different concepts");
  }
}

WeightMatrix::WeightMatrix(Index concepts, double beta, const std::vector<ConceptPair>& target_pairs)
    : data_(Matrix::Ones(concepts, concepts)) {
  if (!(beta > 0.0)) throw Error(ErrorCode::InvalidConfig, "beta must be > 0");
  for (const auto& p : target_pairs) {
    if (p.first < 0 || p.second < 0 || p.first >= concepts || p.second >= concepts ||
        p.first == p.second) {
      throw Error(ErrorCode::InvalidConfig, "invalid target pair");
    }
    data_(p.first, p.second) = beta;
    data_(p.second, p.first) = beta;
  }
}

double orth_loss(const CavSet& cavs) {
  return orth_value(cavs.vectors(), Matrix::Ones(cavs.concepts(), cavs.concepts()));
}

double weighted_orth_loss(const CavSet& cavs, const WeightMatrix& weights) {
  if (weights.size() != cavs.concepts()) {
    throw Error(ErrorCode::InvalidMatrix,
                "weight matrix is " + std::to_string(weights.size()) + "x" +
                    std::to_string(weights.size()) + " but there are " +
                    std::to_string(cavs.concepts()) + " concepts");
  }
  return orth_value(cavs.vectors(), weights.data().cwiseAbs2());
}

double cav_data_loss(const CavSet& cavs, const ActivationMatrix& z, const LabelMatrix& t) {
  require_same_samples(z, t);
  require_compatible(cavs, z);
  require_compatible(cavs, t);
  const Matrix zc = z.data().rowwise() - z.data().colwise().mean();
  double total = 0.0;
  for (Index c = 0; c < cavs.concepts(); ++c) {
    const Vector tc = t.column(c).array() - t.column(c).mean();
    total += (zc - tc * cavs.vector(c)).squaredNorm();
  }
  return total / static_cast<double>(z.samples() * z.dim());
}

double total_loss(const CavSet& cavs, const ActivationMatrix& z, const LabelMatrix& t,
                  const OrthConfig& config) {
  config.validate(cavs.concepts());
  const double data = cav_data_loss(cavs, z, t);
  if (config.alpha == 0.0) return data;
  return data + config.alpha * weighted_orth_loss(cavs, weights_for(config, cavs.concepts()));
}

Matrix loss_gradient(const CavSet& cavs, const ActivationMatrix& z, const LabelMatrix& t,
                     const OrthConfig& config) {
  require_same_samples(z, t);
  require_compatible(cavs, z);
  require_compatible(cavs, t);
  config.validate(cavs.concepts());
  const Objective objective(z, t, config.alpha, weights_for(config, cavs.concepts()));
  return objective.gradient(cavs.vectors());
}

Objective::Objective(const ActivationMatrix& z, const LabelMatrix& t, double alpha,
                     WeightMatrix weights)
    : scale_(1.0 / static_cast<double>(z.samples() * z.dim())),
      weights_sq_(weights.data().cwiseAbs2()),
      alpha_(alpha) {
  require_same_samples(z, t);
  if (weights.size() != t.concepts()) {
    throw Error(ErrorCode::InvalidMatrix, "weight matrix does not match concept count");
  }
  const Matrix zc = z.data().rowwise() - z.data().colwise().mean();
  const Matrix labels = t.as_real();
  const Matrix tc = labels.rowwise() - labels.colwise().mean();
  centered_sq_ = zc.squaredNorm();
  cross_ = tc.transpose() * zc;
  label_sq_ = tc.colwise().squaredNorm().transpose();
}

double Objective::data_loss(const Matrix& cavs) const {
  // |Zc - t w^T|^2 = |Zc|^2 - 2 w.(Zc^T t) + |t|^2 |w|^2 per concept.
  const double n = static_cast<double>(cavs.rows());
  const double cross = cavs.cwiseProduct(cross_).sum();
  const double quad = label_sq_.dot(cavs.rowwise().squaredNorm());
  return scale_ * (n * centered_sq_ - 2.0 * cross + quad);
}

double Objective::orth_loss(const Matrix& cavs) const { return orth_value(cavs, weights_sq_); }

Matrix Objective::gradient(const Matrix& cavs) const {
  Matrix g = 2.0 * scale_ * (label_sq_.asDiagonal() * cavs - cross_);
  if (alpha_ != 0.0) g += alpha_ * orth_gradient(cavs, weights_sq_);
  return g;
}

bool early_exit_check(const MetricsHistory& history, const EarlyExit& thresholds) {
  if (history.empty()) return false;
  const MetricsSnapshot& base = history.front();
  const MetricsSnapshot& cur = history.back();
  if (thresholds.min_avg_auroc && cur.macro_auroc < *thresholds.min_avg_auroc) return true;
  if (thresholds.max_avg_drop && base.macro_auroc - cur.macro_auroc > *thresholds.max_avg_drop) {
    return true;
  }
  if (thresholds.max_single_drop) {
    const double worst = (base.per_concept_auroc - cur.per_concept_auroc).maxCoeff();
    if (worst > *thresholds.max_single_drop) return true;
  }
  return false;
}

Matrix random_unit_rows(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  }
  return normalized_rows(out);
}

OptimizationResult optimize(const ActivationMatrix& z, const LabelMatrix& t,
                            const OrthConfig& config, const std::optional<CavSet>& initial,
                            EvalSplit eval) {
  require_same_samples(z, t);
  const Index n = t.concepts();
  config.validate(n);

  const ActivationMatrix& eval_z = eval.activations ? *eval.activations : z;
  const LabelMatrix& eval_t = eval.labels ? *eval.labels : t;
  if ((eval.activations == nullptr) != (eval.labels == nullptr)) {
    throw Error(ErrorCode::InvalidConfig, "evaluation split needs both activations and labels");
  }
  require_same_samples(eval_z, eval_t);
  if (eval_z.dim() != z.dim() || eval_t.concepts() != n) {
    throw Error(ErrorCode::InvalidMatrix, "evaluation split shape does not match training data");
  }

  Matrix cavs;
  if (config.init == InitMode::Pretrained) {
    if (!initial) {
      throw Error(ErrorCode::InvalidConfig, "pretrained initialization needs an initial CAV set");
    }
    require_compatible(*initial, z);
    require_compatible(*initial, t);
    if (initial->concept_names() != t.concept_names()) {
      throw Error(ErrorCode::InvalidConfig,
                  "initial CAV concept names do not match the label columns");
    }
    cavs = initial->vectors();
  } else {
    cavs = random_unit_rows(n, z.dim(), config.seed);
  }

  const Objective objective(z, t, config.alpha, weights_for(config, n));
  const auto& names = t.concept_names();

  OptimizationResult result{with_projection_biases(cavs, z, names), {}, false, 0};
  result.history.append(evaluate(result.final_cavs, eval_z, eval_t, 0));
  Matrix compliant = cavs;

  Matrix first_moment = Matrix::Zero(n, z.dim());
  Matrix second_moment = Matrix::Zero(n, z.dim());
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const Matrix grad = objective.gradient(cavs);
    if (config.optimizer == Optimizer::Adam) {
      beta1_pow *= kAdamBeta1;
      beta2_pow *= kAdamBeta2;
      first_moment = kAdamBeta1 * first_moment + (1.0 - kAdamBeta1) * grad;
      second_moment = kAdamBeta2 * second_moment + (1.0 - kAdamBeta2) * grad.cwiseAbs2();
      const auto m_hat = first_moment.array() / (1.0 - beta1_pow);
      const auto v_hat = second_moment.array() / (1.0 - beta2_pow);
      cavs.array() -= config.learning_rate * m_hat / (v_hat.sqrt() + kAdamEpsilon);
    } else {
      cavs -= config.learning_rate * grad;
    }

    const double loss = cavs.allFinite() ? objective.value(cavs) : NAN;
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::NonFiniteLoss,
                  "loss became non-finite at epoch " + std::to_string(epoch) +
                      "; lower the learning rate");
    }

    if (epoch % config.eval_every != 0 && epoch != config.epochs) continue;
    const CavSet current = with_projection_biases(cavs, z, names);
    result.history.append(evaluate(current, eval_z, eval_t, epoch));
    result.stop_epoch = epoch;
    if (early_exit_check(result.history, config.early_exit)) {
      result.stopped_early = true;
      result.final_cavs = with_projection_biases(compliant, z, names);
      return result;
    }
    compliant = cavs;
    result.final_cavs = current;
  }
  return result;
}

}  // namespace cavortho
