#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cavortho/core.hpp"
#include "cavortho/metrics.hpp"

namespace cavortho {

enum class InitMode { Pretrained, Random };
enum class Optimizer { Adam, GradientDescent };

std::string_view to_string(Optimizer optimizer);
Optimizer parse_optimizer(std::string_view text);

/// Unordered pair of concept indices.
struct ConceptPair {
  Index first = 0;
  Index second = 0;
};

/// AUROC guards checked at every evaluation; unset thresholds are ignored.
struct EarlyExit {
  std::optional<double> min_avg_auroc;
  std::optional<double> max_avg_drop;
  std::optional<double> max_single_drop;
};

/// Fine-tuning hyperparameters. Defaults: lr 0.001, alpha 0.01, 300 epochs.
struct OrthConfig {
  double alpha = 0.01;
  double learning_rate = 0.001;
  int epochs = 300;
  InitMode init = InitMode::Pretrained;
  std::uint64_t seed = 0;  // used by InitMode::Random
  std::vector<ConceptPair> target_pairs;
  double beta = 1.0;  // weight on target_pairs
  int eval_every = 10;
  EarlyExit early_exit;
  Optimizer optimizer = Optimizer::Adam;

  /// Throws InvalidConfig on any out-of-range field.
  void validate(Index concepts) const;
};

/// Symmetric pair weights: beta on target pairs (both orientations), 1
/// elsewhere including the diagonal.
class WeightMatrix {
 public:
  WeightMatrix(Index concepts, double beta, const std::vector<ConceptPair>& target_pairs);
  static WeightMatrix uniform(Index concepts) { return WeightMatrix(concepts, 1.0, {}); }

  const Matrix& data() const noexcept { return data_; }
  Index size() const noexcept { return data_.rows(); }

 private:
  Matrix data_;
};

/// |C_hat C_hat^T - I|_F^2 over row-normalized CAVs.
double orth_loss(const CavSet& cavs);

/// |W o (C_hat C_hat^T - I)|_F^2.
double weighted_orth_loss(const CavSet& cavs, const WeightMatrix& weights);

/// Pattern objective summed over concepts, with each offset at its
/// closed-form optimum and the total divided by k*m:
///   (1/(k m)) sum_c |Z - t_c w_c^T - 1 b_c^T|^2.
double cav_data_loss(const CavSet& cavs, const ActivationMatrix& z, const LabelMatrix& t);

/// cav_data_loss + alpha * (weighted) orthogonality loss.
double total_loss(const CavSet& cavs, const ActivationMatrix& z, const LabelMatrix& t,
                  const OrthConfig& config);

/// Gradient of total_loss with respect to the raw CAV matrix (n x m).
Matrix loss_gradient(const CavSet& cavs, const ActivationMatrix& z, const LabelMatrix& t,
                     const OrthConfig& config);

/// Combined objective with the data sufficient statistics cached, so
/// evaluating the loss or its gradient costs O(n^2 m) rather than O(k n m).
class Objective {
 public:
  Objective(const ActivationMatrix& z, const LabelMatrix& t, double alpha, WeightMatrix weights);

  double data_loss(const Matrix& cavs) const;
  double orth_loss(const Matrix& cavs) const;
  double value(const Matrix& cavs) const { return data_loss(cavs) + alpha_ * orth_loss(cavs); }
  Matrix gradient(const Matrix& cavs) const;

 private:
  double scale_;         // 1 / (k m)
  double centered_sq_;   // |Z_centered|_F^2
  Matrix cross_;         // T_centered^T Z_centered, n x m
  Vector label_sq_;      // |t_c centered|^2 per concept
  Matrix weights_sq_;    // W o W
  double alpha_;
};

/// True when the latest snapshot violates a threshold relative to the first
/// (baseline) snapshot. Comparisons are strict.
bool early_exit_check(const MetricsHistory& history, const EarlyExit& thresholds);

struct OptimizationResult {
  CavSet final_cavs;
  MetricsHistory history;
  bool stopped_early = false;
  int stop_epoch = 0;
};

/// Optional held-out data for monitoring; training data is used when unset.
struct EvalSplit {
  const ActivationMatrix* activations = nullptr;
  const LabelMatrix* labels = nullptr;
};

/// Jointly fine-tunes all CAVs on the combined loss.
///
/// A snapshot is recorded at epoch 0, every `eval_every` epochs, and at the
/// last epoch. When an early-exit threshold trips, the returned CAVs are
/// those of the last compliant snapshot, `stop_epoch` is the violating epoch
/// and the violating snapshot is the last history entry. Stored biases are
/// the projection of the training activation mean onto each unit CAV.
OptimizationResult optimize(const ActivationMatrix& z, const LabelMatrix& t,
                            const OrthConfig& config,
                            const std::optional<CavSet>& initial = std::nullopt,
                            EvalSplit eval = {});

/// Unit-norm Gaussian rows drawn from `seed`.
Matrix random_unit_rows(Index rows, Index cols, std::uint64_t seed);

}  // namespace cavortho
