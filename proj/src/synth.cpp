#include "cavortho/synth.hpp"

#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace cavortho {
namespace {

constexpr double kFeasibilityTol = 1e-12;

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Links ordered so every source is final before it is used.
std::vector<Cooccurrence> dependency_order(const GeneratorConfig& config) {
  std::vector<Cooccurrence> pending = config.cooccurrence;
  std::vector<Cooccurrence> ordered;
  std::set<Index> unresolved;
  for (const auto& l : pending) unresolved.insert(l.target);
  while (!pending.empty()) {
    bool progressed = false;
    for (auto it = pending.begin(); it != pending.end();) {
      if (unresolved.count(it->source) == 0) {
        ordered.push_back(*it);
        unresolved.erase(it->target);
        it = pending.erase(it);
        progressed = true;
      } else {
        ++it;
      }
    }
    if (!progressed) invalid("cooccurrence links form a cycle");
  }
  return ordered;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

}  // namespace

std::vector<std::string> GeneratorConfig::names() const {
  if (!concept_names.empty()) return concept_names;
  std::vector<std::string> out;
  for (Index c = 0; c < concepts; ++c) out.push_back("concept_" + std::to_string(c));
  return out;
}

double complement_rate(const GeneratorConfig& config, const Cooccurrence& link) {
  const double src = config.positive_rate[link.source];
  const double tgt = config.positive_rate[link.target];
  if (src >= 1.0) return 0.0;
  return (tgt - src * link.probability) / (1.0 - src);
}

void GeneratorConfig::validate() const {
  if (dim < 1) invalid("m must be >= 1");
  if (concepts < 1) invalid("n must be >= 1");
  if (samples < 2) invalid("k must be >= 2");
  const auto n = static_cast<std::size_t>(concepts);
  if (positive_rate.size() != n) {
    invalid("positive_rate has " + std::to_string(positive_rate.size()) + " entries, expected " +
            std::to_string(n));
  }
  if (signal_strengths.size() != n) {
    invalid("signal_strengths has " + std::to_string(signal_strengths.size()) +
            " entries, expected " + std::to_string(n));
  }
  if (!concept_names.empty() && concept_names.size() != n) {
    invalid("concept_names has " + std::to_string(concept_names.size()) + " entries, expected " +
            std::to_string(n));
  }
  for (std::size_t c = 0; c < n; ++c) {
    const double p = positive_rate[c];
    if (!(p >= 0.0 && p <= 1.0)) {
      invalid("positive_rate[" + std::to_string(c) + "] = " + num(p) + " is outside [0, 1]");
    }
    const double s = signal_strengths[c];
    if (!(s > 0.0) || !std::isfinite(s)) {
      invalid("signal_strengths[" + std::to_string(c) + "] = " + num(s) + " must be positive");
    }
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    invalid("noise_sigma = " + num(noise_sigma) + " must be >= 0");
  }
  if (direction_mode == DirectionMode::Orthonormal && dim < concepts) {
    invalid("orthonormal directions need m >= n (m = " + std::to_string(dim) +
            ", n = " + std::to_string(concepts) + ")");
  }

  std::set<std::pair<Index, Index>> pairs;
  std::set<Index> targets;
  for (std::size_t i = 0; i < cooccurrence.size(); ++i) {
    const auto& l = cooccurrence[i];
    const std::string field = "cooccurrence[" + std::to_string(i) + "]";
    if (l.source < 0 || l.target < 0 || l.source >= concepts || l.target >= concepts) {
      invalid(field + " references a concept outside 0.." + std::to_string(concepts - 1));
    }
    if (l.source == l.target) invalid(field + " links a concept to itself");
    if (!(l.probability >= 0.0 && l.probability <= 1.0)) {
      invalid(field + ".probability = " + num(l.probability) + " is outside [0, 1]");
    }
    if (!pairs.insert({std::min(l.source, l.target), std::max(l.source, l.target)}).second) {
      invalid(field + " repeats an already linked pair");
    }
    if (!targets.insert(l.target).second) {
      invalid(field + " redraws concept " + std::to_string(l.target) +
              ", which is already the target of another link");
    }
  }
  dependency_order(*this);

  for (std::size_t i = 0; i < cooccurrence.size(); ++i) {
    const auto& l = cooccurrence[i];
    const double src = positive_rate[l.source];
    const double tgt = positive_rate[l.target];
    bool feasible;
    if (src >= 1.0) {
      feasible = std::abs(l.probability - tgt) <= kFeasibilityTol;
    } else {
      const double q = complement_rate(*this, l);
      feasible = q >= -kFeasibilityTol && q <= 1.0 + kFeasibilityTol;
    }
    if (!feasible) {
      throw Error(ErrorCode::InfeasibleCorrelation,
                  "cooccurrence[" + std::to_string(i) + "]: P(t" + std::to_string(l.target) +
                      "=+1 | t" + std::to_string(l.source) + "=+1) = " + num(l.probability) +
                      " cannot coexist with positive rates " + num(src) + " and " + num(tgt));
    }
  }
}

LabelMatrix sample_labels(const GeneratorConfig& config) {
  config.validate();
  const Index k = config.samples;
  const Index n = config.concepts;
  auto rng = stream(config.seed, 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  LabelData t(k, n);
  for (Index i = 0; i < k; ++i) {
    for (Index c = 0; c < n; ++c) t(i, c) = unif(rng) < config.positive_rate[c] ? 1 : -1;
  }
  for (const auto& link : dependency_order(config)) {
    const double q = std::clamp(complement_rate(config, link), 0.0, 1.0);
    for (Index i = 0; i < k; ++i) {
      const double rate = t(i, link.source) == 1 ? link.probability : q;
      t(i, link.target) = unif(rng) < rate ? 1 : -1;
    }
  }
  return LabelMatrix(std::move(t), config.names());
}

std::pair<ActivationMatrix, GroundTruth> sample_activations(const LabelMatrix& labels,
                                                            const GeneratorConfig& config) {
  config.validate();
  if (labels.samples() != config.samples || labels.concepts() != config.concepts) {
    throw Error(ErrorCode::InvalidMatrix, "labels do not match the generator configuration");
  }
  const Index m = config.dim;
  const Index n = config.concepts;
  auto rng = stream(config.seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix gauss(m, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) gauss(i, j) = normal(rng);
  }
  Matrix directions;
  if (config.direction_mode == DirectionMode::Orthonormal) {
    const Eigen::HouseholderQR<Matrix> qr(gauss);
    const Matrix q = qr.householderQ() * Matrix::Identity(m, n);
    directions = q.transpose();
  } else {
    directions = normalized_rows(gauss.transpose());
  }

  const Vector strengths = Eigen::Map<const Vector>(config.signal_strengths.data(), n);
  Matrix z = labels.as_real() * strengths.asDiagonal() * directions;
  if (config.noise_sigma > 0.0) {
    for (Index i = 0; i < z.rows(); ++i) {
      for (Index j = 0; j < m; ++j) z(i, j) += config.noise_sigma * normal(rng);
    }
  }
  return {ActivationMatrix(std::move(z)), GroundTruth{std::move(directions), config}};
}

std::vector<LinkFrequency> link_frequencies(const LabelMatrix& labels,
                                            const std::vector<Cooccurrence>& links) {
  std::vector<LinkFrequency> out;
  const auto& t = labels.data();
  for (const auto& l : links) {
    if (l.source < 0 || l.target < 0 || l.source >= labels.concepts() ||
        l.target >= labels.concepts()) {
      throw Error(ErrorCode::InvalidConfig, "link references a missing concept");
    }
    double src_pos = 0, both = 0, src_neg = 0, neg_then_pos = 0, tgt_pos = 0;
    for (Index i = 0; i < labels.samples(); ++i) {
      const bool s = t(i, l.source) == 1;
      const bool g = t(i, l.target) == 1;
      tgt_pos += g;
      if (s) {
        src_pos += 1;
        both += g;
      } else {
        src_neg += 1;
        neg_then_pos += g;
      }
    }
    LinkFrequency f;
    f.link = l;
    f.conditional = src_pos > 0 ? both / src_pos : NAN;
    f.complement = src_neg > 0 ? neg_then_pos / src_neg : NAN;
    f.target_marginal = tgt_pos / static_cast<double>(labels.samples());
    out.push_back(f);
  }
  return out;
}

double label_correlation(const LabelMatrix& labels, Index a, Index b) {
  const Vector x = labels.column(a).array() - labels.column(a).mean();
  const Vector y = labels.column(b).array() - labels.column(b).mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace cavortho
