#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cavortho/core.hpp"

namespace cavortho {

enum class DirectionMode { Orthonormal, RandomUnit };

/// P(t_target = +1 | t_source = +1) = probability.
struct Cooccurrence {
  Index source = 0;
  Index target = 0;
  double probability = 0.0;
};

struct GeneratorConfig {
  Index dim = 0;       // m
  Index concepts = 0;  // n
  Index samples = 0;   // k
  std::uint64_t seed = 0;
  std::vector<double> positive_rate;
  std::vector<Cooccurrence> cooccurrence;
  std::vector<double> signal_strengths;
  double noise_sigma = 0.0;
  DirectionMode direction_mode = DirectionMode::Orthonormal;
  std::vector<std::string> concept_names;  // defaults to concept_0..concept_{n-1}

  /// Throws InvalidConfig for malformed fields and InfeasibleCorrelation when
  /// a conditional cannot coexist with the target's marginal.
  void validate() const;

  std::vector<std::string> names() const;
};

struct GroundTruth {
  Matrix directions;  // n x m, unit rows
  GeneratorConfig config;
};

/// Rate at which the target is drawn +1 when the source is -1, chosen so the
/// target keeps its configured marginal.
double complement_rate(const GeneratorConfig& config, const Cooccurrence& link);

LabelMatrix sample_labels(const GeneratorConfig& config);

/// z_i = sum_c t_ic s_c d_c + N(0, sigma^2 I).
std::pair<ActivationMatrix, GroundTruth> sample_activations(const LabelMatrix& labels,
                                                            const GeneratorConfig& config);

/// Empirical statistics of one co-occurrence link.
struct LinkFrequency {
  Cooccurrence link;
  double conditional = 0.0;        // P(t_target = +1 | t_source = +1)
  double complement = 0.0;         // P(t_target = +1 | t_source = -1)
  double target_marginal = 0.0;    // P(t_target = +1)
};

std::vector<LinkFrequency> link_frequencies(const LabelMatrix& labels,
                                            const std::vector<Cooccurrence>& links);

/// Pearson correlation between two label columns.
double label_correlation(const LabelMatrix& labels, Index a, Index b);

}  // namespace cavortho
