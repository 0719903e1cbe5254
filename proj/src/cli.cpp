#include "cavortho/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cavortho/fit.hpp"
#include "cavortho/io.hpp"
#include "cavortho/metrics.hpp"
#include "cavortho/orthogonalize.hpp"
#include "cavortho/steering.hpp"
#include "cavortho/synth.hpp"

namespace cavortho::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using io::format_double;

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenOptions {
  std::string config;
  std::string activations;
  std::string labels;
  std::string truth;
};

double number_field(const json& j, const std::string& field) {
  if (!j.is_number()) invalid(field + " must be a number");
  return j.get<double>();
}

Index count_field(const json& root, const char* key) {
  if (!root.contains(key)) invalid(std::string("missing field '") + key + "'");
  const json& j = root.at(key);
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    invalid(std::string(key) + " must be a non-negative integer");
  }
  return static_cast<Index>(j.get<long long>());
}

std::vector<double> per_concept(const json& root, const char* key, Index n, double fallback,
                                bool required) {
  if (!root.contains(key)) {
    if (required) invalid(std::string("missing field '") + key + "'");
    return std::vector<double>(static_cast<std::size_t>(n), fallback);
  }
  const json& j = root.at(key);
  if (j.is_number()) return std::vector<double>(static_cast<std::size_t>(n), j.get<double>());
  if (!j.is_array()) invalid(std::string(key) + " must be a number or an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(number_field(j[i], std::string(key) + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Index concept_ref(const json& j, const std::vector<std::string>& names, const std::string& field) {
  if (j.is_number_integer()) return static_cast<Index>(j.get<long long>());
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == s) return static_cast<Index>(i);
    }
    invalid(field + " names unknown concept '" + s + "'");
  }
  invalid(field + " must be a concept index or name");
}

GeneratorConfig parse_generator_config(const json& root) {
  if (!root.is_object()) invalid("generator config must be a JSON object");
  GeneratorConfig cfg;
  cfg.dim = count_field(root, "m");
  cfg.concepts = count_field(root, "n");
  cfg.samples = count_field(root, "k");
  cfg.seed = root.contains("seed") ? static_cast<std::uint64_t>(count_field(root, "seed")) : 0;
  cfg.positive_rate = per_concept(root, "positive_rate", cfg.concepts, 0.5, false);
  cfg.signal_strengths = per_concept(root, "signal_strengths", cfg.concepts, 1.0, false);
  cfg.noise_sigma = root.contains("noise_sigma")
                        ? number_field(root.at("noise_sigma"), "noise_sigma")
                        : 0.0;
  if (root.contains("direction_mode")) {
    const json& d = root.at("direction_mode");
    const std::string mode = d.is_string() ? d.get<std::string>() : "";
    if (mode == "orthonormal") {
      cfg.direction_mode = DirectionMode::Orthonormal;
    } else if (mode == "random_unit") {
      cfg.direction_mode = DirectionMode::RandomUnit;
    } else {
      invalid("direction_mode must be \"orthonormal\" or \"random_unit\"");
    }
  }
  if (root.contains("concept_names")) {
    const json& names = root.at("concept_names");
    if (!names.is_array()) invalid("concept_names must be an array of strings");
    for (const auto& n : names) {
      if (!n.is_string()) invalid("concept_names must be an array of strings");
      cfg.concept_names.push_back(n.get<std::string>());
    }
  }
  const auto names = cfg.names();
  if (root.contains("cooccurrence")) {
    const json& links = root.at("cooccurrence");
    if (!links.is_array()) invalid("cooccurrence must be an array");
    for (std::size_t i = 0; i < links.size(); ++i) {
      const std::string field = "cooccurrence[" + std::to_string(i) + "]";
      const json& l = links[i];
      Cooccurrence c;
      if (l.is_array() && l.size() == 3) {
        c = {concept_ref(l[0], names, field), concept_ref(l[1], names, field),
             number_field(l[2], field + ".probability")};
      } else if (l.is_object() && l.contains("source") && l.contains("target") &&
                 l.contains("probability")) {
        c = {concept_ref(l.at("source"), names, field), concept_ref(l.at("target"), names, field),
             number_field(l.at("probability"), field + ".probability")};
      } else {
        invalid(field + " must be [source, target, probability] or an object with those keys");
      }
      cfg.cooccurrence.push_back(c);
    }
  }
  cfg.validate();
  return cfg;
}

int cmd_gen(const GenOptions& opt, std::ostream& out) {
  json root;
  try {
    root = json::parse(io::read_file(opt.config));
  } catch (const json::exception& e) {
    invalid(opt.config + ": " + e.what());
  }
  const GeneratorConfig cfg = parse_generator_config(root);
  const LabelMatrix labels = sample_labels(cfg);
  auto [z, truth] = sample_activations(labels, cfg);

  io::write_matrix(opt.activations, z.data());
  io::write_labels(fs::path(opt.labels), labels);
  io::write_matrix(opt.truth, truth.directions);

  const auto& names = labels.concept_names();
  out << "samples," << cfg.samples << "\nconcepts," << cfg.concepts << "\ndim," << cfg.dim << '\n';
  out << "concept,positive_rate,empirical_rate\n";
  for (Index c = 0; c < labels.concepts(); ++c) {
    const double rate = (labels.data().col(c).array() == 1).cast<double>().mean();
    out << names[static_cast<std::size_t>(c)] << ',' << format_double(cfg.positive_rate[static_cast<std::size_t>(c)])
        << ',' << format_double(rate) << '\n';
  }
  out << "source,target,target_conditional,empirical_conditional,empirical_complement,"
         "label_correlation\n";
  for (const auto& f : link_frequencies(labels, cfg.cooccurrence)) {
    out << names[static_cast<std::size_t>(f.link.source)] << ','
        << names[static_cast<std::size_t>(f.link.target)] << ','
        << format_double(f.link.probability) << ',' << format_double(f.conditional) << ','
        << format_double(f.complement) << ','
        << format_double(label_correlation(labels, f.link.source, f.link.target)) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitOptions {
  std::string activations;
  std::string labels;
  std::string method = "pattern";
  std::string out;
};

void print_snapshot(std::ostream& out, const MetricsSnapshot& snap,
                    const std::vector<std::string>& names) {
  // Orthogonality is undefined for a single concept, so only AUROC is shown.
  const bool orth = names.size() >= 2;
  out << (orth ? "concept,auroc,orthogonality\n" : "concept,auroc\n");
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto i = static_cast<Index>(c);
    out << names[c] << ',' << format_double(snap.per_concept_auroc[i]);
    if (orth) out << ',' << format_double(snap.per_concept_orthogonality[i]);
    out << '\n';
  }
  out << "macro_auroc," << format_double(snap.macro_auroc) << '\n';
  if (orth) out << "avg_orthogonality," << format_double(snap.avg_orthogonality) << '\n';
}

// Like evaluate(), but a single concept gets NaN orthogonality instead of an error.
MetricsSnapshot evaluate_any(const CavSet& cavs, const ActivationMatrix& z, const LabelMatrix& t,
                             int epoch) {
  if (cavs.concepts() >= 2) return evaluate(cavs, z, t, epoch);
  MetricsSnapshot snap;
  snap.epoch = epoch;
  snap.per_concept_auroc = Vector::Constant(1, auroc(concept_scores(z, cavs.vector(0).transpose()),
                                                     t.column(0)));
  snap.per_concept_orthogonality = Vector::Constant(1, NAN);
  snap.macro_auroc = snap.per_concept_auroc[0];
  snap.avg_orthogonality = NAN;
  return snap;
}

int cmd_fit(const FitOptions& opt, std::ostream& out) {
  const ActivationMatrix z(io::read_matrix(opt.activations));
  const LabelMatrix t = io::read_labels(fs::path(opt.labels));
  require_same_samples(z, t);
  const FitMethod method = parse_fit_method(opt.method);
  CavSet cavs = fit_all(z, t, method);
  const MetricsSnapshot snap = evaluate_any(cavs, z, t, 0);

  io::CavBundle bundle{io::kBundleVersion, std::move(cavs),
                       {{"method", std::string(to_string(method))},
                        {"samples", std::to_string(z.samples())},
                        {"dim", std::to_string(z.dim())},
                        {"epochs_run", "0"}},
                       snap};
  io::write_bundle(fs::path(opt.out), bundle);
  print_snapshot(out, snap, t.concept_names());
  return 0;
}

// ---------------------------------------------------------------------------
// orthogonalize
// ---------------------------------------------------------------------------

struct OrthOptions {
  std::string activations;
  std::string labels;
  std::string init;
  std::optional<std::uint64_t> random_seed;
  double alpha = 0.01;
  double beta = 1.0;
  std::string pairs;
  double lr = 0.001;
  int epochs = 300;
  int eval_every = 10;
  std::optional<double> min_avg_auroc;
  std::optional<double> max_avg_drop;
  std::optional<double> max_single_drop;
  std::string optimizer = "adam";
  std::string out;
  std::string history;
  std::string eval_activations;
  std::string eval_labels;
};

Index resolve_concept(std::string_view token, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == token) return static_cast<Index>(i);
  }
  long long idx = -1;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), idx);
  if (ec == std::errc() && ptr == token.data() + token.size() && idx >= 0 &&
      idx < static_cast<long long>(names.size())) {
    return static_cast<Index>(idx);
  }
  invalid("unknown concept '" + std::string(token) + "' in --pairs");
}

std::vector<ConceptPair> parse_pairs(const std::string& text, const std::vector<std::string>& names) {
  std::vector<ConceptPair> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) invalid("pair '" + item + "' must look like a:b");
    out.push_back({resolve_concept(std::string_view(item).substr(0, colon), names),
                   resolve_concept(std::string_view(item).substr(colon + 1), names)});
  }
  return out;
}

int cmd_orthogonalize(const OrthOptions& opt, std::ostream& out) {
  const ActivationMatrix z(io::read_matrix(opt.activations));
  const LabelMatrix t = io::read_labels(fs::path(opt.labels));
  require_same_samples(z, t);

  if (opt.init.empty() == !opt.random_seed.has_value()) {
    invalid("give exactly one of --init <bundle> or --random-seed <seed>");
  }

  OrthConfig cfg;
  cfg.alpha = opt.alpha;
  cfg.beta = opt.beta;
  cfg.learning_rate = opt.lr;
  cfg.epochs = opt.epochs;
  cfg.eval_every = opt.eval_every;
  cfg.target_pairs = parse_pairs(opt.pairs, t.concept_names());
  cfg.early_exit = {opt.min_avg_auroc, opt.max_avg_drop, opt.max_single_drop};
  cfg.optimizer = parse_optimizer(opt.optimizer);

  std::optional<CavSet> initial;
  std::string init_source;
  if (opt.random_seed) {
    cfg.init = InitMode::Random;
    cfg.seed = *opt.random_seed;
    init_source = "random:" + std::to_string(cfg.seed);
  } else {
    const io::CavBundle init = io::read_bundle(fs::path(opt.init));
    cfg.init = InitMode::Pretrained;
    init_source = init.provenance_value("method").value_or("unknown");
    initial = init.cavs;
  }
  cfg.validate(t.concepts());

  std::optional<ActivationMatrix> eval_z;
  std::optional<LabelMatrix> eval_t;
  EvalSplit split;
  if (!opt.eval_activations.empty() || !opt.eval_labels.empty()) {
    if (opt.eval_activations.empty() || opt.eval_labels.empty()) {
      invalid("--eval-activations and --eval-labels go together");
    }
    eval_z.emplace(io::read_matrix(opt.eval_activations));
    eval_t.emplace(io::read_labels(fs::path(opt.eval_labels)));
    split = {&*eval_z, &*eval_t};
  }

  OptimizationResult result = optimize(z, t, cfg, initial, split);
  const auto& snaps = result.history.snapshots();
  const MetricsSnapshot& final_snap = result.stopped_early ? snaps[snaps.size() - 2] : snaps.back();

  std::string pairs_echo;
  for (const auto& p : cfg.target_pairs) {
    if (!pairs_echo.empty()) pairs_echo += ',';
    pairs_echo += t.concept_names()[static_cast<std::size_t>(p.first)] + ":" +
                  t.concept_names()[static_cast<std::size_t>(p.second)];
  }
  io::CavBundle bundle{io::kBundleVersion,
                       result.final_cavs,
                       {{"method", "orthogonalized"},
                        {"init", init_source},
                        {"optimizer", std::string(to_string(cfg.optimizer))},
                        {"alpha", format_double(cfg.alpha)},
                        {"beta", format_double(cfg.beta)},
                        {"pairs", pairs_echo},
                        {"learning_rate", format_double(cfg.learning_rate)},
                        {"epochs", std::to_string(cfg.epochs)},
                        {"eval_every", std::to_string(cfg.eval_every)},
                        {"epochs_run", std::to_string(result.stop_epoch)},
                        {"stopped_early", result.stopped_early ? "true" : "false"}},
                       final_snap};
  io::write_bundle(fs::path(opt.out), bundle);
  if (!opt.history.empty()) {
    std::ofstream hs(opt.history, std::ios::binary | std::ios::trunc);
    if (!hs) throw Error(ErrorCode::IoError, "cannot open '" + opt.history + "' for writing");
    io::write_history(hs, result.history, t.concept_names());
    if (!hs) throw Error(ErrorCode::IoError, "failed writing '" + opt.history + "'");
  }

  const MetricsSnapshot& base = snaps.front();
  out << "phase,epoch,macro_auroc,avg_orthogonality\n"
      << "baseline," << base.epoch << ',' << format_double(base.macro_auroc) << ','
      << format_double(base.avg_orthogonality) << '\n'
      << "final," << final_snap.epoch << ',' << format_double(final_snap.macro_auroc) << ','
      << format_double(final_snap.avg_orthogonality) << '\n'
      << "stopped_early," << (result.stopped_early ? "true" : "false") << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct MetricsOptions {
  std::string bundle;
  std::string activations;
  std::string labels;
  std::string out;
};

int cmd_metrics(const MetricsOptions& opt, std::ostream& out) {
  const io::CavBundle bundle = io::read_bundle(fs::path(opt.bundle));
  const ActivationMatrix z(io::read_matrix(opt.activations));
  const LabelMatrix t = io::read_labels(fs::path(opt.labels));
  require_same_samples(z, t);
  require_compatible(bundle.cavs, z);
  require_compatible(bundle.cavs, t);
  const MetricsSnapshot snap = evaluate_any(bundle.cavs, z, t, 0);
  std::ostringstream report;
  io::write_metrics_report(report, cosine_matrix(bundle.cavs), snap, bundle.cavs.concept_names());
  out << report.str();
  if (!opt.out.empty()) io::write_file(opt.out, report.str());
  return 0;
}

// ---------------------------------------------------------------------------
// steer
// ---------------------------------------------------------------------------

struct SteerOptions {
  std::string bundle;
  std::string activations;
  std::string labels;
  std::string target;
  std::string mode = "insert";
  std::optional<double> step;
  std::string sweep;
  std::string out;
  std::string report;
};

fs::path sweep_path(const fs::path& base, std::size_t idx) {
  fs::path p = base;
  p.replace_filename(base.stem().string() + "_step" + std::to_string(idx) + base.extension().string());
  return p;
}

int cmd_steer(const SteerOptions& opt, std::ostream& out) {
  const io::CavBundle bundle = io::read_bundle(fs::path(opt.bundle));
  const ActivationMatrix z(io::read_matrix(opt.activations));
  const LabelMatrix t = io::read_labels(fs::path(opt.labels));
  require_same_samples(z, t);
  require_compatible(bundle.cavs, z);
  require_compatible(bundle.cavs, t);
  const CavSet& cavs = bundle.cavs;
  const Index target = cavs.index_of(opt.target);
  const auto& names = cavs.concept_names();

  std::ostringstream report;
  io::write_steering_header(report);
  const auto out_format = io::format_for(opt.out);

  if (opt.mode == "remove") {
    if (opt.step || !opt.sweep.empty()) invalid("--step and --sweep only apply to --mode insert");
    const Index label_col = t.index_of(opt.target);
    const double tau = estimate_tau(z, t.column(label_col), cavs.vector(target).transpose());
    const ActivationMatrix edited = steer(z, t, cavs, target, Remove{tau});
    io::write_matrix(opt.out, edited.data(), out_format);
    io::write_steering_report(report, "remove", tau, score_deltas(z, edited, cavs, target), names);
  } else if (opt.mode == "insert") {
    std::vector<double> steps;
    if (opt.step && !opt.sweep.empty()) invalid("give either --step or --sweep, not both");
    if (opt.step) {
      steps.push_back(*opt.step);
    } else if (!opt.sweep.empty()) {
      std::stringstream ss(opt.sweep);
      std::string item;
      while (std::getline(ss, item, ',')) steps.push_back(io::parse_double(item, "--sweep"));
    } else {
      invalid("--mode insert needs --step or --sweep");
    }
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const ActivationMatrix edited = steer(z, t, cavs, target, Insert{steps[s]});
      const fs::path dest = opt.step ? fs::path(opt.out) : sweep_path(opt.out, s);
      io::write_matrix(dest, edited.data(), out_format);
      io::write_steering_report(report, "insert", steps[s], score_deltas(z, edited, cavs, target),
                                names);
    }
  } else {
    invalid("--mode must be insert or remove");
  }

  out << report.str();
  if (!opt.report.empty()) io::write_file(opt.report, report.str());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Concept activation vector fitting, orthogonalization and steering"};
  app.name(args.empty() ? "cavortho" : args.front());
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file supplying any flag; the command line wins");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate synthetic activations and labels");
  gen_cmd->add_option("--config-json,-c", gen.config, "Generator configuration (JSON)")->required();
  gen_cmd->add_option("--activations", gen.activations, "Output activation matrix")->required();
  gen_cmd->add_option("--labels", gen.labels, "Output label file")->required();
  gen_cmd->add_option("--truth", gen.truth, "Output ground-truth directions")->required();

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one CAV per concept");
  fit_cmd->add_option("--activations", fit.activations)->required();
  fit_cmd->add_option("--labels", fit.labels)->required();
  fit_cmd->add_option("--method", fit.method, "pattern or ridge")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Output bundle")->required();

  OrthOptions orth;
  auto* orth_cmd = app.add_subcommand("orthogonalize", "Jointly fine-tune CAVs toward orthogonality");
  orth_cmd->add_option("--activations", orth.activations)->required();
  orth_cmd->add_option("--labels", orth.labels)->required();
  orth_cmd->add_option("--init", orth.init, "Bundle to fine-tune");
  orth_cmd->add_option("--random-seed", orth.random_seed, "Start from random unit CAVs");
  orth_cmd->add_option("--alpha", orth.alpha)->capture_default_str();
  orth_cmd->add_option("--beta", orth.beta, "Weight on --pairs")->capture_default_str();
  orth_cmd->add_option("--pairs", orth.pairs, "Target pairs, e.g. smiling:mouth_open,0:3");
  orth_cmd->add_option("--lr", orth.lr)->capture_default_str();
  orth_cmd->add_option("--epochs", orth.epochs)->capture_default_str();
  orth_cmd->add_option("--eval-every", orth.eval_every)->capture_default_str();
  orth_cmd->add_option("--min-avg-auroc", orth.min_avg_auroc);
  orth_cmd->add_option("--max-avg-drop", orth.max_avg_drop);
  orth_cmd->add_option("--max-single-drop", orth.max_single_drop);
  orth_cmd->add_option("--optimizer", orth.optimizer, "adam or gd")->capture_default_str();
  orth_cmd->add_option("--out", orth.out, "Output bundle")->required();
  orth_cmd->add_option("--history", orth.history, "Per-evaluation metrics (long CSV)");
  orth_cmd->add_option("--eval-activations", orth.eval_activations, "Held-out activations");
  orth_cmd->add_option("--eval-labels", orth.eval_labels, "Held-out labels");

  MetricsOptions met;
  auto* met_cmd = app.add_subcommand("metrics", "Report cosines, orthogonality and AUROC");
  met_cmd->add_option("--bundle", met.bundle)->required();
  met_cmd->add_option("--activations", met.activations)->required();
  met_cmd->add_option("--labels", met.labels)->required();
  met_cmd->add_option("--out", met.out, "Also write the report here");

  SteerOptions st;
  auto* st_cmd = app.add_subcommand("steer", "Insert or remove a concept along its CAV");
  st_cmd->add_option("--bundle", st.bundle)->required();
  st_cmd->add_option("--activations", st.activations)->required();
  st_cmd->add_option("--labels", st.labels)->required();
  st_cmd->add_option("--target", st.target, "Concept name")->required();
  st_cmd->add_option("--mode", st.mode, "insert or remove")->capture_default_str();
  st_cmd->add_option("--step", st.step, "Insertion step");
  st_cmd->add_option("--sweep", st.sweep, "Comma-separated insertion steps");
  st_cmd->add_option("--out", st.out, "Edited activations (sweeps append _step<i>)")->required();
  st_cmd->add_option("--report", st.report, "Also write the delta report here");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("cavortho");

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << to_string(ErrorCode::InvalidConfig) << ": " << e.what() << '\n';
    return exit_code(ErrorCode::InvalidConfig);
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*fit_cmd) return cmd_fit(fit, out);
    if (*orth_cmd) return cmd_orthogonalize(orth, out);
    if (*met_cmd) return cmd_metrics(met, out);
    if (*st_cmd) return cmd_steer(st, out);
  } catch (const Error& e) {
    err << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << to_string(ErrorCode::InvalidConfig) << ": " << e.what() << '\n';
    return exit_code(ErrorCode::InvalidConfig);
  }
  return 0;
}

}  // namespace cavortho::cli
