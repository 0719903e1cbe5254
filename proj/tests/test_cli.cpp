#include <doctest.h>

#include "cavortho/fit.hpp"
#include "cavortho/metrics.hpp"
#include "cavortho/steering.hpp"
#include "cli_harness.hpp"

using namespace cavortho;
using harness::invoke;
using harness::slurp;
namespace fs = std::filesystem;

namespace {

struct Dataset {
  fs::path dir;
  std::string z;
  std::string t;
};

Dataset make_dataset(const std::string& name, const std::string& config) {
  Dataset d{harness::workdir(name), "", ""};
  io::write_file(d.dir / "gen.json", config);
  d.z = (d.dir / "z.csv").string();
  d.t = (d.dir / "t.csv").string();
  const auto r = invoke({"gen", "-c", (d.dir / "gen.json").string(), "--activations", d.z, "--labels", d.t,
                      "--truth", (d.dir / "truth.csv").string()});
  REQUIRE(r.status == 0);
  return d;
}

const char* kSmall =
    R"({"m": 6, "n": 3, "k": 120, "seed": 3, "noise_sigma": 0.2,
        "cooccurrence": [[0, 1, 0.8]], "concept_names": ["smiling", "mouth_open", "hat"]})";

double csv_value(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind(key + ",", 0) == 0) return io::parse_double(line.substr(key.size() + 1), key);
  }
  FAIL("missing key " << key);
  return 0.0;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

bool one_line(const std::string& s) {
  return !s.empty() && s.back() == '\n' && s.find('\n') == s.size() - 1;
}

}  // namespace

TEST_CASE("gen writes three files and summarizes links") {
  const Dataset d = make_dataset("gen_min", R"({"m": 3, "n": 2, "k": 100, "seed": 1})");
  CHECK(fs::exists(d.z));
  CHECK(fs::exists(d.t));
  CHECK(fs::exists(d.dir / "truth.csv"));
  CHECK(io::read_matrix(d.z).rows() == 100);
  CHECK(io::read_labels(fs::path(d.t)).concept_names() ==
        std::vector<std::string>{"concept_0", "concept_1"});
}

TEST_CASE("gen prints empirical conditionals near the enforced 0.7") {
  const fs::path dir = harness::workdir("gen_table");
  io::write_file(dir / "g.json",
                 R"({"m": 8, "n": 4, "k": 20000, "seed": 5,
                     "cooccurrence": [{"source": 0, "target": 1, "probability": 0.7}, [2, 3, 0.7]]})");
  const auto r = invoke({"gen", "-c", (dir / "g.json").string(), "--activations", (dir / "z.cavm").string(),
                      "--labels", (dir / "t.csv").string(), "--truth", (dir / "d.csv").string()});
  REQUIRE(r.status == 0);
  std::istringstream is(r.out);
  std::string line;
  int links = 0;
  while (std::getline(is, line)) {
    if (line.rfind("concept_0,concept_1,", 0) == 0 || line.rfind("concept_2,concept_3,", 0) == 0) {
      const auto parts = line.substr(line.find("0.7,") + 4);
      const double conditional = io::parse_double(parts.substr(0, parts.find(',')), "out");
      CHECK(std::abs(conditional - 0.7) <= 0.02);
      ++links;
    }
  }
  CHECK(links == 2);
}

TEST_CASE("gen diagnostics name the field and use the error code prefix") {
  const fs::path dir = harness::workdir("gen_bad");
  auto run_with = [&](const std::string& cfg) {
    io::write_file(dir / "g.json", cfg);
    return invoke({"gen", "-c", (dir / "g.json").string(), "--activations", (dir / "z.csv").string(),
                "--labels", (dir / "t.csv").string(), "--truth", (dir / "d.csv").string()});
  };
  auto r = run_with(R"({"m": 3, "n": 2, "k": 100, "positive_rate": [1.3, 0.5]})");
  CHECK(r.status == 2);
  CHECK(r.err.rfind("InvalidConfig: ", 0) == 0);
  CHECK(r.err.find("positive_rate[0]") != std::string::npos);
  CHECK(one_line(r.err));

  r = run_with(R"({"m": 3, "n": 2, "k": 100, "positive_rate": [0.9, 0.2], "cooccurrence": [[0, 1, 0.7]]})");
  CHECK(r.status == 2);
  CHECK(r.err.rfind("InfeasibleCorrelation: ", 0) == 0);

  r = run_with(R"({"m": 3, "n": 2})");
  CHECK(r.status == 2);
  CHECK(r.err.find("'k'") != std::string::npos);

  r = run_with("{not json");
  CHECK(r.status == 2);

  r = invoke({"gen", "-c", (dir / "missing.json").string(), "--activations", "a", "--labels", "b", "--truth", "c"});
  CHECK(r.status == 4);
  CHECK(r.err.rfind("IoError: ", 0) == 0);
}

TEST_CASE("fit prints AUROC and orthogonality and writes a bundle") {
  const Dataset d = make_dataset("fit", kSmall);
  const std::string pattern = (d.dir / "p.bundle").string();
  const std::string ridge = (d.dir / "r.bundle").string();
  auto r = invoke({"fit", "--activations", d.z, "--labels", d.t, "--out", pattern});
  REQUIRE(r.status == 0);
  CHECK(csv_value(r.out, "macro_auroc") >= 0.99);
  CHECK(r.out.find("avg_orthogonality,") != std::string::npos);
  r = invoke({"fit", "--activations", d.z, "--labels", d.t, "--method", "ridge", "--out", ridge});
  REQUIRE(r.status == 0);
  const io::CavBundle p = io::read_bundle(fs::path(pattern));
  const io::CavBundle q = io::read_bundle(fs::path(ridge));
  CHECK(p.provenance_value("method") == "pattern");
  CHECK(q.provenance_value("method") == "ridge");
  CHECK(p.cavs.vectors() != q.cavs.vectors());
  CHECK(p.final_snapshot.has_value());

  // The bundle holds exactly what the library computes.
  const ActivationMatrix z(io::read_matrix(d.z));
  const LabelMatrix t = io::read_labels(fs::path(d.t));
  CHECK(p.cavs.vectors() == fit_all(z, t, FitMethod::Pattern).vectors());
}

TEST_CASE("fit with one concept reports AUROC only") {
  const Dataset d = make_dataset("fit_one", R"({"m": 4, "n": 1, "k": 60, "seed": 2, "noise_sigma": 0.1})");
  const auto r = invoke({"fit", "--activations", d.z, "--labels", d.t, "--out", (d.dir / "b").string()});
  REQUIRE(r.status == 0);
  CHECK(r.out.find("orthogonality") == std::string::npos);
  CHECK(csv_value(r.out, "macro_auroc") == 1.0);
}

TEST_CASE("fit rejects a constant label column by name") {
  const fs::path dir = harness::workdir("fit_const");
  io::write_file(dir / "t.csv", "smiling,hat\n1,1\n-1,1\n1,1\n");
  io::write_file(dir / "z.csv", "3,2\n1,0\n0,1\n1,1\n");
  const auto r = invoke({"fit", "--activations", (dir / "z.csv").string(), "--labels",
                      (dir / "t.csv").string(), "--out", (dir / "b").string()});
  CHECK(r.status == 2);
  CHECK(r.err.rfind("SingleClassConcept: ", 0) == 0);
  CHECK(r.err.find("hat") != std::string::npos);

  io::write_file(dir / "z4.csv", "4,2\n1,0\n0,1\n1,1\n0,0\n");
  io::write_file(dir / "t2.csv", "smiling\n1\n-1\n1\n");
  const auto m = invoke({"fit", "--activations", (dir / "z4.csv").string(), "--labels",
                      (dir / "t2.csv").string(), "--out", (dir / "b").string()});
  CHECK(m.status == 2);
  CHECK(m.err.rfind("InvalidMatrix: ", 0) == 0);
}

TEST_CASE("orthogonalize: defaults, provenance, history and alpha 0") {
  const Dataset d = make_dataset("orth", kSmall);
  const std::string init = (d.dir / "p.bundle").string();
  REQUIRE(invoke({"fit", "--activations", d.z, "--labels", d.t, "--out", init}).status == 0);

  const std::string out = (d.dir / "o.bundle").string();
  const std::string hist = (d.dir / "h.csv").string();
  auto r = invoke({"orthogonalize", "--activations", d.z, "--labels", d.t, "--init", init, "--out", out,
                "--history", hist});
  REQUIRE(r.status == 0);
  const io::CavBundle b = io::read_bundle(fs::path(out));
  CHECK(b.provenance_value("learning_rate") == "0.001");
  CHECK(b.provenance_value("alpha") == "0.01");
  CHECK(b.provenance_value("epochs") == "300");
  CHECK(b.provenance_value("epochs_run") == "300");
  CHECK(b.provenance_value("init") == "pattern");
  REQUIRE(b.final_snapshot.has_value());
  CHECK(b.final_snapshot->epoch == 300);
  const std::string h = slurp(hist);
  CHECK(h.rfind("epoch,metric,concept,value\n", 0) == 0);
  CHECK(h.find("300,avg_orthogonality,*,") != std::string::npos);
  CHECK(h.find("0,auroc,smiling,") != std::string::npos);

  r = invoke({"orthogonalize", "--activations", d.z, "--labels", d.t, "--init", init, "--alpha", "0",
           "--out", out});
  REQUIRE(r.status == 0);
  const Matrix before = io::read_bundle(fs::path(init)).cavs.vectors();
  const Matrix after = io::read_bundle(fs::path(out)).cavs.vectors();
  CHECK((after - before).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("orthogonalize: pairs by name or index, random init, eval split") {
  const Dataset d = make_dataset("orth_pairs", kSmall);
  const std::string out = (d.dir / "o.bundle").string();
  auto r = invoke({"orthogonalize", "--activations", d.z, "--labels", d.t, "--random-seed", "4",
                "--pairs", "smiling:mouth_open,2:0", "--beta", "10", "--epochs", "20", "--out", out,
                "--eval-activations", d.z, "--eval-labels", d.t});
  REQUIRE(r.status == 0);
  const io::CavBundle b = io::read_bundle(fs::path(out));
  CHECK(b.provenance_value("pairs") == "smiling:mouth_open,hat:smiling");
  CHECK(b.provenance_value("init") == "random:4");

  r = invoke({"orthogonalize", "--activations", d.z, "--labels", d.t, "--random-seed", "4", "--pairs",
           "smiling:nobody", "--out", out});
  CHECK(r.status == 2);
  CHECK(r.err.find("nobody") != std::string::npos);

  r = invoke({"orthogonalize", "--activations", d.z, "--labels", d.t, "--out", out});
  CHECK(r.status == 2);
  r = invoke({"orthogonalize", "--activations", d.z, "--labels", d.t, "--random-seed", "1",
           "--eval-activations", d.z, "--out", out});
  CHECK(r.status == 2);
}

TEST_CASE("orthogonalize: early exit and divergence") {
  // Three concepts in two dimensions: orthogonalizing ridge CAVs must cost AUROC.
  const Dataset d = make_dataset(
      "orth_exit", R"({"m": 2, "n": 3, "k": 200, "seed": 3, "noise_sigma": 0.1, "direction_mode": "random_unit"})");
  const std::string init = (d.dir / "r.bundle").string();
  REQUIRE(invoke({"fit", "--activations", d.z, "--labels", d.t, "--method", "ridge", "--out", init}).status == 0);
  const std::string out = (d.dir / "o.bundle").string();
  auto r = invoke({"orthogonalize", "--activations", d.z, "--labels", d.t, "--init", init, "--alpha", "1",
                "--lr", "0.1", "--max-avg-drop", "0", "--out", out});
  REQUIRE(r.status == 0);
  CHECK(r.out.find("stopped_early,true") != std::string::npos);
  CHECK(io::read_bundle(fs::path(out)).provenance_value("stopped_early") == "true");

  r = invoke({"orthogonalize", "--activations", d.z, "--labels", d.t, "--init", init, "--optimizer", "gd",
           "--lr", "1e300", "--alpha", "1", "--out", out});
  CHECK(r.status == 3);
  CHECK(r.err.rfind("NonFiniteLoss: ", 0) == 0);
  CHECK(r.err.find("learning rate") != std::string::npos);
}

TEST_CASE("a config file supplies flags and the command line wins") {
  const Dataset d = make_dataset("orth_cfg", kSmall);
  const std::string out = (d.dir / "o.bundle").string();
  io::write_file(d.dir / "run.ini",
                 "[orthogonalize]\nalpha = 0.5\nepochs = 12\neval-every = 4\nrandom-seed = 9\n");
  auto r = invoke({"--config", (d.dir / "run.ini").string(), "orthogonalize", "--activations", d.z,
                "--labels", d.t, "--epochs", "8", "--out", out});
  REQUIRE(r.status == 0);
  const io::CavBundle b = io::read_bundle(fs::path(out));
  CHECK(b.provenance_value("alpha") == "0.5");
  CHECK(b.provenance_value("epochs") == "8");
  CHECK(b.provenance_value("eval_every") == "4");
  CHECK(b.provenance_value("init") == "random:9");
}

TEST_CASE("metrics output matches the library") {
  const Dataset d = make_dataset("metrics", kSmall);
  const std::string bundle = (d.dir / "p.bundle").string();
  REQUIRE(invoke({"fit", "--activations", d.z, "--labels", d.t, "--out", bundle}).status == 0);
  const std::string report = (d.dir / "report.csv").string();
  const auto r = invoke({"metrics", "--bundle", bundle, "--activations", d.z, "--labels", d.t, "--out", report});
  REQUIRE(r.status == 0);

  const io::CavBundle b = io::read_bundle(fs::path(bundle));
  const ActivationMatrix z(io::read_matrix(d.z));
  const LabelMatrix t = io::read_labels(fs::path(d.t));
  std::ostringstream golden;
  io::write_metrics_report(golden, cosine_matrix(b.cavs), evaluate(b.cavs, z, t, 0), t.concept_names());
  CHECK(r.out == golden.str());
  CHECK(slurp(report) == golden.str());
}

TEST_CASE("metrics reports the identity for an orthogonal bundle") {
  const fs::path dir = harness::workdir("metrics_id");
  io::write_file(dir / "z.csv", "4,2\n1,1\n1,-1\n-1,1\n-1,-1\n");
  io::write_file(dir / "t.csv", "a,b\n1,1\n1,-1\n-1,1\n-1,-1\n");
  io::write_file(dir / "b.bundle",
                 "format_version = 1\nconcept_names = a,b\nvectors =\n2,2\n3,0\n0,2\nbiases =\n2,1\n0\n0\n");
  const auto r = invoke({"metrics", "--bundle", (dir / "b.bundle").string(), "--activations",
                      (dir / "z.csv").string(), "--labels", (dir / "t.csv").string()});
  REQUIRE(r.status == 0);
  CHECK(r.out.rfind("# cosine\nconcept,a,b\na,1,0\nb,0,1\n", 0) == 0);
}

TEST_CASE("steer: zero step, repeated removal, sweeps and the delta identity") {
  const Dataset d = make_dataset("steer", kSmall);
  const std::string bundle = (d.dir / "p.bundle").string();
  REQUIRE(invoke({"fit", "--activations", d.z, "--labels", d.t, "--out", bundle}).status == 0);

  const std::string same = (d.dir / "same.csv").string();
  auto r = invoke({"steer", "--bundle", bundle, "--activations", d.z, "--labels", d.t, "--target", "smiling",
                "--step", "0", "--out", same});
  REQUIRE(r.status == 0);
  CHECK(slurp(same) == slurp(d.z));

  const std::string once = (d.dir / "once.csv").string();
  const std::string twice = (d.dir / "twice.csv").string();
  const std::string report = (d.dir / "report.csv").string();
  r = invoke({"steer", "--bundle", bundle, "--activations", d.z, "--labels", d.t, "--target", "smiling",
           "--mode", "remove", "--out", once, "--report", report});
  REQUIRE(r.status == 0);
  CHECK(slurp(report) == r.out);
  r = invoke({"steer", "--bundle", bundle, "--activations", once, "--labels", d.t, "--target", "smiling",
           "--mode", "remove", "--out", twice});
  REQUIRE(r.status == 0);
  CHECK((io::read_matrix(twice) - io::read_matrix(once)).cwiseAbs().maxCoeff() <= 1e-12);

  // Report deltas follow cos(c_j, c_target) |c_j| times the mean |projection change|.
  const io::CavBundle b = io::read_bundle(fs::path(bundle));
  const Matrix dz = io::read_matrix(once) - io::read_matrix(d.z);
  const Vector unit = b.cavs.vector(0).transpose().normalized();
  const double dproj = (dz * unit).cwiseAbs().mean();
  std::istringstream is(slurp(report));
  std::string line;
  std::getline(is, line);
  int rows = 0;
  while (std::getline(is, line)) {
    const auto f = fields(line);
    REQUIRE(f.size() == 5);
    const Index j = b.cavs.index_of(f[2]);
    const double expected =
        j == 0 ? dproj * b.cavs.vector(0).norm()
               : std::abs(cosine(b.cavs.vector(j), unit)) * b.cavs.vector(j).norm() * dproj;
    CHECK(io::parse_double(f[4], "report") == doctest::Approx(expected).epsilon(1e-9));
    ++rows;
  }
  CHECK(rows == 3);

  const std::string sweep = (d.dir / "sweep.cavm").string();
  r = invoke({"steer", "--bundle", bundle, "--activations", d.z, "--labels", d.t, "--target", "hat",
           "--sweep", "0.5,1,2", "--out", sweep});
  REQUIRE(r.status == 0);
  CHECK(fs::exists(d.dir / "sweep_step0.cavm"));
  CHECK(fs::exists(d.dir / "sweep_step2.cavm"));
  CHECK(r.out.find("insert,2,hat,target,") != std::string::npos);
}

TEST_CASE("steer errors") {
  const Dataset d = make_dataset("steer_err", kSmall);
  const std::string bundle = (d.dir / "p.bundle").string();
  REQUIRE(invoke({"fit", "--activations", d.z, "--labels", d.t, "--out", bundle}).status == 0);
  const std::string out = (d.dir / "x.csv").string();
  auto r = invoke({"steer", "--bundle", bundle, "--activations", d.z, "--labels", d.t, "--target", "beard",
                "--step", "1", "--out", out});
  CHECK(r.status == 2);
  CHECK(r.err.find("smiling, mouth_open, hat") != std::string::npos);
  CHECK(one_line(r.err));
  r = invoke({"steer", "--bundle", bundle, "--activations", d.z, "--labels", d.t, "--target", "hat", "--out", out});
  CHECK(r.status == 2);
  r = invoke({"steer", "--bundle", bundle, "--activations", d.z, "--labels", d.t, "--target", "hat", "--mode",
           "flip", "--step", "1", "--out", out});
  CHECK(r.status == 2);
}

TEST_CASE("parse errors and help") {
  auto r = invoke({});
  CHECK(r.status == 2);
  CHECK(r.err.rfind("InvalidConfig: ", 0) == 0);
  r = invoke({"fit", "--bogus"});
  CHECK(r.status == 2);
  CHECK(one_line(r.err));
  r = invoke({"--help"});
  CHECK(r.status == 0);
  CHECK(r.out.find("orthogonalize") != std::string::npos);
  r = invoke({"orthogonalize", "--help"});
  CHECK(r.status == 0);
  CHECK(r.out.find("--alpha") != std::string::npos);
}
