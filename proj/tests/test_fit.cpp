#include <doctest.h>

#include "cavortho/fit.hpp"
#include "cavortho/metrics.hpp"
#include "cavortho/synth.hpp"
#include "oracles.hpp"

using namespace cavortho;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Max-norm of the gradient of |t - Z w - b|^2 + |w|^2.
double ridge_stationarity(const Matrix& z, const Vector& t, const RidgeFit& f) {
  const Vector r = t - z * f.weights - Vector::Constant(t.size(), f.bias);
  const Vector gw = -2.0 * z.transpose() * r + 2.0 * f.weights;
  return std::max(gw.lpNorm<Eigen::Infinity>(), std::abs(-2.0 * r.sum()));
}

// Max-norm of the gradient of |Z - t w^T - 1 b^T|^2.
double pattern_stationarity(const Matrix& z, const Vector& t, const PatternFit& f) {
  const Matrix r = z - t * f.pattern.transpose() - Vector::Ones(t.size()) * f.offset.transpose();
  const Vector gw = -2.0 * r.transpose() * t;
  const Vector gb = -2.0 * r.colwise().sum().transpose();
  return std::max(gw.lpNorm<Eigen::Infinity>(), gb.lpNorm<Eigen::Infinity>());
}

}  // namespace

TEST_CASE("fit_ridge hand example") {
  Matrix z(2, 2);
  z << 1, 0, -1, 0;
  const RidgeFit f = fit_ridge(ActivationMatrix(z), vec({1, -1}));
  CHECK(f.weights[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(f.weights[1] == 0.0);
  CHECK(f.bias == doctest::Approx(0.0));
}

TEST_CASE("fit_ridge on balanced antisymmetric data has zero bias") {
  oracle::Rng rng(4);
  const Matrix half = rng.gaussian(5, 3);
  Matrix z(10, 3);
  z << half, -half;
  Vector t(10);
  t << Vector::Ones(5), -Vector::Ones(5);
  CHECK(std::abs(fit_ridge(ActivationMatrix(z), t).bias) <= 1e-14);
}

TEST_CASE("fit_ridge matches gradient descent and is stationary") {
  oracle::Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix z = rng.gaussian(20, 5);
    const Vector t = rng.labels(20);
    const RidgeFit f = fit_ridge(ActivationMatrix(z), t);
    const auto [w, b] = oracle::ridge_by_descent(z, t);
    CHECK(oracle::relative_distance(f.weights, w) <= 1e-5);
    CHECK(std::abs(f.bias - b) <= 1e-5 * std::max(1.0, std::abs(b)));
    CHECK(ridge_stationarity(z, t, f) <= 1e-8);
  }
}

TEST_CASE("fit_pattern hand example and column rescaling") {
  Matrix z(4, 2);
  z << 2, 0, 2, 0, 0, 0, 0, 0;
  const Vector t = vec({1, 1, -1, -1});
  const PatternFit f = fit_pattern(ActivationMatrix(z), t);
  CHECK(f.pattern == vec({1, 0}));
  CHECK(f.offset == vec({1, 0}));

  Matrix scaled = z;
  scaled.col(0) *= 10;
  CHECK(fit_pattern(ActivationMatrix(scaled), t).pattern == vec({10, 0}));
}

TEST_CASE("fit_pattern gives zero weight to a column uncorrelated with the label") {
  Matrix z(4, 2);
  z << 2, 1, 2, -1, 0, 1, 0, -1;
  const PatternFit f = fit_pattern(ActivationMatrix(z), vec({1, 1, -1, -1}));
  CHECK(f.pattern[1] == 0.0);
}

TEST_CASE("fit_pattern matches gradient descent and is stationary") {
  oracle::Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix z = rng.gaussian(50, 8) + Matrix::Constant(50, 8, rng.uniform(-3, 3));
    const Vector t = rng.labels(50, rng.uniform(0.2, 0.8));
    const PatternFit f = fit_pattern(ActivationMatrix(z), t);
    const auto [w, b] = oracle::pattern_by_descent(z, t);
    CHECK(oracle::relative_distance(f.pattern, w) <= 1e-5);
    CHECK(oracle::relative_distance(f.offset, b) <= 1e-5);
    CHECK(pattern_stationarity(z, t, f) <= 1e-8);
  }
}

TEST_CASE("property: pattern direction ignores a constant row offset") {
  oracle::Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = rng.gaussian(30, 6);
    const Vector t = rng.labels(30);
    const Eigen::RowVectorXd shift = rng.gaussian(1, 6) * 5.0;
    const Matrix moved = z.rowwise() + shift;
    const Vector a = fit_pattern(ActivationMatrix(z), t).pattern;
    const Vector b = fit_pattern(ActivationMatrix(moved), t).pattern;
    CHECK(cosine(a, b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.norm() == doctest::Approx(a.norm()).epsilon(1e-10));
  }
}

TEST_CASE("single-class and malformed label columns are rejected") {
  const ActivationMatrix z(Matrix::Identity(3, 2));
  CHECK_THROWS_AS(fit_pattern(z, vec({1, 1, 1})), Error);
  try {
    fit_ridge(z, vec({-1, -1, -1}));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingleClassConcept);
  }
  try {
    fit_pattern(z, vec({1, 0, -1}));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidMatrix);
  }
  CHECK_THROWS_AS(fit_pattern(z, vec({1, -1})), Error);
}

TEST_CASE("fit_all reduces to the single-concept fits") {
  oracle::Rng rng(30);
  const Matrix zm = rng.gaussian(25, 4);
  const ActivationMatrix z(zm);
  const LabelMatrix t(rng.label_matrix(25, 1), {"only"});

  const CavSet pattern = fit_all(z, t, FitMethod::Pattern);
  const PatternFit pf = fit_pattern(z, t.column(0));
  CHECK(pattern.vector(0).transpose() == pf.pattern);
  const Vector unit = pf.pattern.normalized();
  CHECK(pattern.biases()[0] == doctest::Approx(zm.colwise().mean().dot(unit)).epsilon(1e-12));

  const CavSet ridge = fit_all(z, t, FitMethod::Ridge);
  const RidgeFit rf = fit_ridge(z, t.column(0));
  CHECK(ridge.vector(0).transpose() == rf.weights);
  CHECK(ridge.biases()[0] == rf.bias);
}

TEST_CASE("fit_all: identical columns, permutation and determinism") {
  oracle::Rng rng(31);
  const ActivationMatrix z(rng.gaussian(40, 6));
  LabelData d = rng.label_matrix(40, 3);
  d.col(2) = d.col(0);
  const LabelMatrix t(d, {"a", "b", "c"});
  for (FitMethod method : {FitMethod::Pattern, FitMethod::Ridge}) {
    const CavSet c = fit_all(z, t, method);
    CHECK(c.vector(0) == c.vector(2));

    LabelData perm(40, 3);
    perm << d.col(1), d.col(2), d.col(0);
    const CavSet p = fit_all(z, LabelMatrix(perm, {"b", "c", "a"}), method);
    CHECK(p.vector(0) == c.vector(1));
    CHECK(p.vector(1) == c.vector(2));
    CHECK(p.vector(2) == c.vector(0));

    const CavSet again = fit_all(z, t, method);
    CHECK(again.vectors() == c.vectors());
    CHECK(again.biases() == c.biases());
  }
}

TEST_CASE("fit_all names the failing concept") {
  const ActivationMatrix z(Matrix::Zero(4, 2));
  LabelData d(4, 1);
  d << 1, -1, 1, -1;
  try {
    fit_all(z, LabelMatrix(d, {"hat"}), FitMethod::Pattern);
    FAIL("expected an error for a zero pattern");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateVector);
    CHECK(std::string(e.what()).find("hat") != std::string::npos);
  }
}

TEST_CASE("ridge and pattern fits differ on the same data") {
  oracle::Rng rng(32);
  const ActivationMatrix z(rng.gaussian(30, 5));
  const LabelMatrix t(rng.label_matrix(30, 2), {"a", "b"});
  CHECK(fit_all(z, t, FitMethod::Ridge).vectors() != fit_all(z, t, FitMethod::Pattern).vectors());
}

TEST_CASE("pattern CAVs recover orthogonal ground truth") {
  GeneratorConfig cfg;
  cfg.dim = 32;
  cfg.concepts = 4;
  cfg.samples = 2000;
  cfg.seed = 99;
  cfg.positive_rate.assign(4, 0.5);
  cfg.signal_strengths.assign(4, 1.0);
  cfg.noise_sigma = 0.1;
  const LabelMatrix t = sample_labels(cfg);
  const auto [z, truth] = sample_activations(t, cfg);
  const CavSet cavs = fit_all(z, t, FitMethod::Pattern);
  for (Index c = 0; c < 4; ++c) {
    CHECK(std::abs(cosine(cavs.vector(c), truth.directions.row(c))) >= 0.95);
  }
}

TEST_CASE("fit method names round-trip") {
  CHECK(parse_fit_method(to_string(FitMethod::Ridge)) == FitMethod::Ridge);
  CHECK(parse_fit_method(to_string(FitMethod::Pattern)) == FitMethod::Pattern);
  CHECK_THROWS_AS(parse_fit_method("svm"), Error);
}
