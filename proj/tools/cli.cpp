#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <variant>

#include "wood/data.hpp"
#include "wood/detect.hpp"
#include "wood/error.hpp"
#include "wood/parallel.hpp"
#include "wood/scoring.hpp"
#include "wood/trainer.hpp"

namespace wood::cli {

namespace fs = std::filesystem;

namespace {

struct Source {
  std::string path;
  std::string labels;  // IDX label file, only for IDX images
};

bool looks_like_idx(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  unsigned char head[4] = {};
  in.read(reinterpret_cast<char*>(head), 4);
  if (in.gcount() < 3) return false;
  const bool gzip = head[0] == 0x1f && head[1] == 0x8b;
  const bool idx = head[0] == 0 && head[1] == 0 && head[2] == 0x08;
  return gzip || idx;
}

struct LoadedInD {
  InDDataset data;
  Normalization norm;
};

LoadedInD load_ind(const Source& src) {
  if (!src.labels.empty()) {
    return {load_idx_pair(src.path, src.labels), Normalization{"pixels/255", {}, {}}};
  }
  if (looks_like_idx(src.path)) {
    throw ConfigError("IDX images " + src.path + " need a labels file");
  }
  return {read_ind_csv(src.path), Normalization{}};
}

OodDataset load_ood(const std::string& path) {
  if (looks_like_idx(path)) return load_idx_images(path);
  return read_ood_csv(path);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<std::size_t> parse_sizes(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " list: " + text);
    }
  }
  return out;
}

const std::map<std::string, CostKind> kMatrixNames{{"binary", CostKind::Binary},
                                                   {"dynamic", CostKind::Dynamic}};
const std::map<std::string, ScoreEvaluation> kEvalNames{{"closed", ScoreEvaluation::ClosedForm},
                                                        {"sinkhorn", ScoreEvaluation::Sinkhorn}};

// Flags shared by every command that evaluates scores.
struct ScoreFlags {
  std::string matrix = "dynamic";
  std::string eval_path = "closed";
  double lambda = 50.0;
  std::size_t max_iter = 1000;
  double tol = 1e-9;

  void add(CLI::App* cmd, bool overrides) {
    auto* m = cmd->add_option("--matrix", matrix, "Cost matrix: binary or dynamic")
                  ->check(CLI::IsMember({"binary", "dynamic"}));
    auto* e = cmd->add_option("--eval-path", eval_path, "Score evaluation: closed or sinkhorn")
                  ->check(CLI::IsMember({"closed", "sinkhorn"}));
    auto* l = cmd->add_option("--lambda", lambda, "Sinkhorn inverse regularization weight")
                  ->check(CLI::PositiveNumber);
    auto* i = cmd->add_option("--max-iter", max_iter, "Sinkhorn iteration cap")->check(CLI::PositiveNumber);
    auto* t = cmd->add_option("--tol", tol, "Sinkhorn convergence tolerance")->check(CLI::PositiveNumber);
    if (!overrides) {
      for (auto* opt : {m, e, l, i, t}) opt->capture_default_str();
    }
  }

  ScoreConfig config() const {
    ScoreConfig c;
    c.matrix_kind = kMatrixNames.at(matrix);
    c.evaluation = kEvalNames.at(eval_path);
    c.sinkhorn.lambda = lambda;
    c.sinkhorn.max_iter = max_iter;
    c.sinkhorn.tol = tol;
    return c;
  }
};

struct Checked {
  MlpModel model;
  Checkpoint ckpt;
};

Checked open_checkpoint(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  MlpModel model = ck.model();
  return {std::move(model), std::move(ck)};
}

void require_width(const Checkpoint& ck, std::size_t dim, const std::string& what) {
  if (dim != ck.layer_dims.front()) {
    throw ConfigError(what + " has " + std::to_string(dim) + " features, checkpoint expects " +
                      std::to_string(ck.layer_dims.front()));
  }
}

// ---------------------------------------------------------------- gen-data

struct GenData {
  std::string kind = "blobs";
  SyntheticSpec spec;
  std::string out;
  std::vector<double> split_fractions;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
    cmd->add_option("--kind", kind, "blobs (InD), ring or shifted (OOD)")
        ->check(CLI::IsMember({"blobs", "ring", "shifted"}))
        ->capture_default_str();
    cmd->add_option("--k", spec.k, "Number of classes")->capture_default_str();
    cmd->add_option("--n", spec.n_per_class, "Samples per class (total for OOD kinds)")
        ->capture_default_str();
    cmd->add_option("--dim", spec.dim, "Feature dimension")->capture_default_str();
    cmd->add_option("--sep", spec.separation, "Blob separation or ring radius")->capture_default_str();
    cmd->add_option("--noise", spec.noise, "Gaussian noise scale")->capture_default_str();
    cmd->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
    cmd->add_option("--split", split_fractions, "Also write train/calib/test parts, e.g. 0.6,0.2,0.2")
        ->delimiter(',')
        ->expected(3);
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->callback([this] { run(); });
  }

  void run() {
    if (kind == "blobs") spec.kind = SyntheticKind::GaussianBlobs;
    if (kind == "ring") spec.kind = SyntheticKind::Ring;
    if (kind == "shifted") spec.kind = SyntheticKind::ShiftedBlob;
    ensure_dir(out);
    std::visit(
        [&](const auto& ds) {
          const std::string stem = spec.kind == SyntheticKind::GaussianBlobs ? "ind" : "ood";
          write_csv(fs::path(out) / (stem + ".csv"), ds);
          std::cout << "wrote " << ds.size() << " rows of width " << ds.dim() << " to "
                    << (fs::path(out) / (stem + ".csv")).string() << '\n';
          if (!split_fractions.empty()) {
            const auto parts =
                split(ds, {split_fractions[0], split_fractions[1], split_fractions[2]}, spec.seed);
            write_csv(fs::path(out) / (stem + "_train.csv"), parts.train);
            write_csv(fs::path(out) / (stem + "_calib.csv"), parts.calibration);
            write_csv(fs::path(out) / (stem + "_test.csv"), parts.test);
            std::cout << "split " << parts.train.size() << '/' << parts.calibration.size() << '/'
                      << parts.test.size() << '\n';
          }
        },
        synth(spec));
  }
};

// ------------------------------------------------------------------- train

struct Train {
  Source ind;
  std::string ood;
  TrainConfig cfg;
  ScoreFlags score;
  std::string hidden = "128,64";
  std::string normalize = "auto";
  std::string out;
  bool no_timing = false;
  CLI::App* cmd = nullptr;

  void add(CLI::App& app) {
    cmd = app.add_subcommand("train", "Train a classifier with the WOOD loss");
    cmd->add_option("--ind", ind.path, "InD training data (CSV with label column, or IDX images)")
        ->required();
    cmd->add_option("--ind-labels", ind.labels, "IDX labels for --ind");
    cmd->add_option("--ood", ood, "OOD training data (CSV or IDX images)");
    cmd->add_option("--beta", cfg.beta, "Weight of the OOD score term")->capture_default_str();
    cmd->add_option("--b-ind", cfg.b_ind, "InD samples per batch")->capture_default_str();
    cmd->add_option("--b-ood", cfg.b_ood, "OOD samples per batch")->capture_default_str();
    cmd->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--lr", cfg.lr, "Learning rate")->capture_default_str();
    cmd->add_option("--momentum", cfg.momentum, "SGD momentum")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    cmd->add_option("--hidden", hidden, "Hidden layer widths")->capture_default_str();
    cmd->add_option("--normalize", normalize,
                    "Input transform: auto (standardize CSV, keep IDX pixels in [0,1]), none, standardize")
        ->check(CLI::IsMember({"auto", "none", "standardize"}))
        ->capture_default_str();
    score.add(cmd, false);
    cmd->add_flag("--no-timing", no_timing, "Write wall_ms as 0 for reproducible logs");
    cmd->add_option("--out", out, "Output directory")->required();
  }

  void run(const std::string& config_path) {
    cfg.hidden = parse_sizes(hidden, "hidden width");
    cfg.score = score.config();
    cfg.validate();
    auto [data, norm] = load_ind(ind);
    const bool csv_input = ind.labels.empty();
    if (normalize == "standardize" || (normalize == "auto" && csv_input)) {
      norm = Normalization::standardize(data.features());
    }
    OodDataset ood_data = ood.empty() ? OodDataset(Matrix(0, static_cast<Eigen::Index>(data.dim())), "none")
                                      : load_ood(ood);
    if (ood_data.size() > 0 && ood_data.dim() != data.dim()) {
      throw ConfigError("OOD width " + std::to_string(ood_data.dim()) + " differs from InD width " +
                        std::to_string(data.dim()));
    }
    if (ood_data.size() == 0) cfg.b_ood = 0;

    ensure_dir(out);
    if (!config_path.empty()) {
      fs::copy_file(config_path, fs::path(out) / "config.txt", fs::copy_options::overwrite_existing);
    } else {
      std::ofstream(fs::path(out) / "config.txt") << "[train]\n" << cmd->config_to_str(true, false);
    }

    const FitResult result = fit(data, ood_data, cfg, norm);
    save_checkpoint(result.checkpoint, fs::path(out) / "model.ckpt");
    write_metrics_csv(fs::path(out) / "metrics.csv", result.log, !no_timing);
    const auto& last = result.log.back();
    std::cout << "trained " << cfg.epochs << " epochs: ce=" << fmt(last.ce_term)
              << " ood=" << fmt(last.ood_term) << " total=" << fmt(last.total) << '\n';
  }
};

// ---------------------------------------------------------------- evaluate

struct Evaluate {
  std::string checkpoint;
  Source ind;
  std::string ood;
  double tnr = 0.95;
  double calib_fraction = 0.2;
  bool calibrate_on_test = false;
  std::uint64_t seed = 7;
  ScoreFlags score;
  std::string out;
  CLI::App* cmd = nullptr;

  void add(CLI::App& app) {
    cmd = app.add_subcommand("evaluate", "Calibrate the detector and report FNR/AUROC");
    cmd->add_option("--checkpoint", checkpoint, "Trained model")->required();
    cmd->add_option("--ind", ind.path, "InD test data")->required();
    cmd->add_option("--ind-labels", ind.labels, "IDX labels for --ind");
    cmd->add_option("--ood", ood, "OOD test data")->required();
    cmd->add_option("--tnr", tnr, "Target true negative rate")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--calib-fraction", calib_fraction, "Share of InD held out for calibration")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_flag("--calibrate-on-test", calibrate_on_test,
                  "Calibrate on the full InD test set instead of a held-out share");
    cmd->add_option("--seed", seed, "Seed for the calibration split")->capture_default_str();
    score.add(cmd, true);
    cmd->add_option("--out", out, "Output directory")->required();
  }

  void run() {
    if (!(tnr > 0.0 && tnr < 1.0)) throw ConfigError("--tnr must lie in (0, 1)");
    const auto [model, ck] = open_checkpoint(checkpoint);
    const ScoreConfig sc = score_config(ck);

    const auto [ind_data, ind_norm] = load_ind(ind);
    const OodDataset ood_data = load_ood(ood);
    if (ood_data.size() == 0) throw InputError("OOD file " + ood + " has no rows");
    if (ind_data.size() == 0) throw InputError("InD file " + ind.path + " has no rows");
    require_width(ck, ind_data.dim(), "InD data");
    require_width(ck, ood_data.dim(), "OOD data");
    if (ind_data.num_classes() > ck.num_classes) {
      throw ConfigError("InD labels reach class " + std::to_string(ind_data.num_classes() - 1) +
                        " but the checkpoint has K=" + std::to_string(ck.num_classes));
    }

    const std::size_t threads = worker_threads();
    const Matrix ind_probs = predict_probs(model, ck.normalization.apply(ind_data.features()));
    const Matrix ood_probs = predict_probs(model, ck.normalization.apply(ood_data.features()));
    const std::vector<double> ind_scores = scores_only(score_rows(ind_probs, sc, threads));
    const std::vector<double> ood_scores = scores_only(score_rows(ood_probs, sc, threads));

    std::vector<double> calib_scores;
    std::vector<double> eval_scores;
    if (calibrate_on_test) {
      calib_scores = eval_scores = ind_scores;
    } else {
      std::vector<std::size_t> order(ind_scores.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(seed);
      std::shuffle(order.begin(), order.end(), rng);
      const auto n_cal = static_cast<std::size_t>(
          std::round(calib_fraction * static_cast<double>(order.size())));
      if (n_cal == 0 || n_cal >= order.size()) {
        throw ConfigError("calibration split leaves an empty part; use --calibrate-on-test");
      }
      std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_cal));
      std::sort(order.begin() + static_cast<std::ptrdiff_t>(n_cal), order.end());
      for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_cal ? calib_scores : eval_scores).push_back(ind_scores[order[i]]);
      }
    }

    const EvalReport report = evaluate(calib_scores, eval_scores, ood_scores, tnr);
    ensure_dir(out);
    write_report(fs::path(out) / "report.txt", report);
    write_histogram_csv(fs::path(out) / "hist_ind.csv", report.hist_ind);
    write_histogram_csv(fs::path(out) / "hist_ood.csv", report.hist_ood);
    std::cout << "epsilon=" << fmt(report.epsilon) << " tnr=" << fmt(report.tnr)
              << " fnr=" << fmt(report.fnr_at_tnr) << " auroc=" << fmt(report.auroc)
              << " accuracy=" << fmt(accuracy(ind_probs, ind_data.labels())) << '\n';
  }

  ScoreConfig score_config(const Checkpoint& ck) const {
    ScoreConfig sc = ck.train_config.score;
    if (cmd->count("--matrix") > 0) sc.matrix_kind = kMatrixNames.at(score.matrix);
    if (cmd->count("--eval-path") > 0) sc.evaluation = kEvalNames.at(score.eval_path);
    if (cmd->count("--lambda") > 0) sc.sinkhorn.lambda = score.lambda;
    if (cmd->count("--max-iter") > 0) sc.sinkhorn.max_iter = score.max_iter;
    if (cmd->count("--tol") > 0) sc.sinkhorn.tol = score.tol;
    return sc;
  }
};

// ------------------------------------------------------------------- score

struct Score {
  std::string checkpoint;
  std::string input;
  std::optional<double> epsilon;
  std::string out;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("score", "Write per-sample WOOD scores");
    cmd->add_option("--checkpoint", checkpoint, "Trained model")->required();
    cmd->add_option("--input", input, "Feature file (CSV or IDX images)")->required();
    cmd->add_option("--epsilon", epsilon, "Detector threshold; adds a decision column");
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->callback([this] { run(); });
  }

  void run() {
    const auto [model, ck] = open_checkpoint(checkpoint);
    const OodDataset data = load_ood(input);
    require_width(ck, data.dim(), "input");
    const Matrix probs = predict_probs(model, ck.normalization.apply(data.features()));
    const auto results = score_rows(probs, ck.train_config.score, worker_threads());

    ensure_dir(out);
    std::ofstream csv(fs::path(out) / "scores.csv", std::ios::binary);
    csv << "index,argmin_class,score" << (epsilon ? ",decision" : "") << '\n';
    Detector det;
    if (epsilon) det.epsilon = *epsilon;
    for (std::size_t i = 0; i < results.size(); ++i) {
      csv << i << ',' << results[i].argmin << ',' << fmt(results[i].score);
      if (epsilon) csv << ',' << classify(det, results[i].score);
      csv << '\n';
    }
    std::cout << "scored " << results.size() << " samples\n";
  }
};

// ------------------------------------------------------------- bench-score

struct Bench {
  std::string ks = "10,50,100";
  std::size_t repeats = 100;
  ScoreFlags score;
  std::uint64_t seed = 7;
  std::string out;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("bench-score", "Time the Sinkhorn-path score, binary vs dynamic");
    cmd->add_option("--k", ks, "Class counts to benchmark")->capture_default_str();
    cmd->add_option("--repeats", repeats, "Samples timed per K")->capture_default_str();
    score.eval_path = "sinkhorn";
    score.add(cmd, false);
    cmd->add_option("--seed", seed, "Seed for the random softmax vectors")->capture_default_str();
    cmd->add_option("--out", out, "Output directory for bench.csv");
    cmd->callback([this] { run(); });
  }

  void run() {
    if (score.eval_path != "sinkhorn") {
      throw ConfigError("bench-score times the Sinkhorn path; the closed form is O(K) for both matrices");
    }
    const auto k_values = parse_sizes(ks, "K");
    if (k_values.empty() || repeats == 0) throw ConfigError("bench-score needs K values and repeats >= 1");
    const auto rows = bench_score(k_values, repeats, score.config().sinkhorn, seed);

    std::ostringstream csv;
    csv << "K,binary_ms,dynamic_ms,ratio\n";
    for (const auto& r : rows) {
      csv << r.k << ',' << fmt(r.binary_ms) << ',' << fmt(r.dynamic_ms) << ',' << fmt(r.ratio) << '\n';
    }
    std::cout << csv.str();
    if (!out.empty()) {
      ensure_dir(out);
      std::ofstream(fs::path(out) / "bench.csv", std::ios::binary) << csv.str();
    }
  }
};

}  // namespace

std::vector<BenchRow> bench_score(std::span<const std::size_t> ks, std::size_t repeats,
                                  const SinkhornConfig& cfg, std::uint64_t seed) {
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  for (std::size_t k : ks) {
    if (k < 2) throw ConfigError("K must be >= 2");
    std::vector<ProbVector> samples;
    for (std::size_t s = 0; s < repeats; ++s) {
      std::vector<double> p(k);
      double sum = 0.0;
      for (double& x : p) sum += (x = gamma(rng) + 1e-3);
      for (double& x : p) x /= sum;
      samples.emplace_back(std::move(p));
    }
    auto time_kind = [&](CostKind kind) {
      const ScoreConfig sc{kind, ScoreEvaluation::Sinkhorn, cfg};
      double sink = 0.0;
      const auto t0 = std::chrono::steady_clock::now();
      for (const auto& f : samples) sink += wood_score(f, sc);
      const auto t1 = std::chrono::steady_clock::now();
      if (!std::isfinite(sink)) throw NumericError("non-finite score in benchmark");
      return std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(repeats);
    };
    BenchRow row;
    row.k = k;
    row.dynamic_ms = time_kind(CostKind::Dynamic);
    row.binary_ms = time_kind(CostKind::Binary);
    row.ratio = row.binary_ms / row.dynamic_ms;
    rows.push_back(row);
  }
  return rows;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Wasserstein-based out-of-distribution detection"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.set_config("--config", "", "Key-value config file; [command] sections, flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenData gen;
  Train train;
  Evaluate eval;
  Score score;
  Bench bench;
  gen.add(app);
  train.add(app);
  eval.add(app);
  score.add(app);
  bench.add(app);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n' << "run with --help for usage\n";
    return static_cast<int>(ExitCode::kUsage);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }

  try {
    if (auto* cfg_opt = app.get_config_ptr(); cfg_opt != nullptr && cfg_opt->count() > 0) {
      config_path = cfg_opt->as<std::string>();
    }
    if (train.cmd->parsed()) train.run(config_path);
    if (eval.cmd->parsed()) eval.run();
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kOk);
}

}  // namespace wood::cli
