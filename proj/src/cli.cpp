#include "ssem/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ssem/error.hpp"
#include "ssem/experiment.hpp"
#include "ssem/parallel.hpp"

namespace ssem {

namespace fs = std::filesystem;

namespace {

/// Hyperparameter flags shared by train, compare and sweep-labels. Values
/// are resolved as defaults < --config file < explicit flags.
struct HyperFlags {
  std::string config_path;
  std::string method = "hmt";
  double tol = 1e-5;
  int max_iter = 100;
  double cutoff = 0.5;
  double rho = 0.99;
  double pi = 0.5;
  int neighborhood = 8;
  bool clamp_labels = false;
  unsigned threads = 1;
  double ratio = 0.0;
  std::uint64_t seed = 1;

  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app, bool with_method) {
    app->add_option("--config", config_path, "key=value file with hyperparameters");
    if (with_method)
      options["method"] = app->add_option("--method", method, "gmm | gmm-elev | hmt")
                              ->check(CLI::IsMember({"gmm", "gmm-elev", "hmt"}));
    options["tol"] = app->add_option("--tol", tol, "parameter convergence threshold")->capture_default_str();
    options["max_iter"] = app->add_option("--max-iter", max_iter, "EM iteration cap")->capture_default_str();
    options["cutoff"] = app->add_option("--cutoff", cutoff, "posterior cutoff for mixture inference")
                            ->capture_default_str();
    options["rho"] = app->add_option("--rho", rho, "initial transition probability")->capture_default_str();
    options["pi"] = app->add_option("--pi", pi, "initial root prior")->capture_default_str();
    options["neighborhood"] = app->add_option("--neighborhood", neighborhood, "4 or 8")
                                  ->check(CLI::IsMember({4, 8}))
                                  ->capture_default_str();
    options["clamp_labels"] = app->add_flag("--clamp-labels", clamp_labels, "observe labeled pixels in HMT");
    options["threads"] = app->add_option("--threads", threads, "worker cap; 1 is bit-reproducible")
                             ->capture_default_str();
    options["ratio"] = app->add_option("--ratio", ratio, "label sampling ratio when --labels is absent");
    options["seed"] = app->add_option("--seed", seed, "label sampling seed")->capture_default_str();
  }

  bool explicit_flag(const std::string& key) const {
    const auto it = options.find(key);
    return it != options.end() && it->second->count() > 0;
  }

  /// Applies config-file values for every key not given on the command line.
  void resolve() {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config " + config_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (eq == std::string::npos)
        throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
      auto key = CLI::detail::trim_copy(line.substr(0, eq));
      const auto value = CLI::detail::trim_copy(line.substr(eq + 1));
      std::replace(key.begin(), key.end(), '-', '_');
      if (explicit_flag(key)) continue;
      std::istringstream ss(value);
      bool ok = true;
      if (key == "method") method = value;
      else if (key == "tol") ok = static_cast<bool>(ss >> tol);
      else if (key == "max_iter") ok = static_cast<bool>(ss >> max_iter);
      else if (key == "cutoff") ok = static_cast<bool>(ss >> cutoff);
      else if (key == "rho") ok = static_cast<bool>(ss >> rho);
      else if (key == "pi") ok = static_cast<bool>(ss >> pi);
      else if (key == "neighborhood") ok = static_cast<bool>(ss >> neighborhood) && (neighborhood == 4 || neighborhood == 8);
      else if (key == "clamp_labels") clamp_labels = value == "1" || value == "true";
      else if (key == "threads") ok = static_cast<bool>(ss >> threads);
      else if (key == "ratio") ok = static_cast<bool>(ss >> ratio);
      else if (key == "seed") ok = static_cast<bool>(ss >> seed);
      else throw FormatError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
      if (!ok) throw FormatError("config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }

  RunConfig run_config() const {
    RunConfig cfg;
    try {
      cfg.method = parse_method(method);
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    cfg.cutoff = cutoff;
    cfg.rho_init = rho;
    cfg.pi_init = pi;
    cfg.neighborhood = neighborhood == 4 ? Neighborhood::Four : Neighborhood::Eight;
    cfg.clamp_labels = clamp_labels;
    return cfg;
  }
};

LabelSet resolve_labels(const std::string& labels_path, const HyperFlags& flags, const RasterScene& scene) {
  if (!labels_path.empty()) {
    auto labels = load_labels(labels_path);
    labels.validate(scene.width, scene.height);
    return labels;
  }
  if (!(flags.ratio > 0.0)) throw DataError("either --labels or --ratio is required");
  return sample_labels(scene, flags.ratio, flags.seed);
}

std::vector<std::uint8_t> read_class_grid(const fs::path& path, const RasterScene*& shape_out, RasterScene& holder) {
  holder = load_scene(path);
  shape_out = &holder;
  std::vector<std::uint8_t> out(holder.pixel_count());
  const auto ch = holder.channel(0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ch[i] >= 0.5 ? 1 : 0;
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  fn(out);
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised EM flood mapping: Gaussian mixture vs hidden Markov tree"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic flood scene and labels");
  std::string spec_path, out_scene, out_labels;
  synth->add_option("--spec", spec_path, "key=value scene spec (defaults when absent)");
  synth->add_option("--out-scene", out_scene, "scene file to write")->required();
  synth->add_option("--out-labels", out_labels, "label file to write")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "fit one method and write model + trace");
  HyperFlags train_flags;
  std::string scene_path, labels_path, out_dir;
  train_flags.attach(train_cmd, true);
  train_cmd->add_option("--scene", scene_path, "input scene")->required();
  train_cmd->add_option("--labels", labels_path, "label file");
  train_cmd->add_option("--out", out_dir, "output directory")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "write class and score grids for a trained model");
  std::string model_path;
  double predict_cutoff = 0.5;
  unsigned predict_threads = 1;
  predict_cmd->add_option("--model", model_path, "model file")->required();
  predict_cmd->add_option("--scene", scene_path, "input scene")->required();
  predict_cmd->add_option("--out", out_dir, "output directory")->required();
  predict_cmd->add_option("--cutoff", predict_cutoff, "posterior cutoff (mixture models)")->capture_default_str();
  predict_cmd->add_option("--threads", predict_threads, "worker cap")->capture_default_str();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a prediction against truth");
  std::string pred_path, score_path, truth_path, mask_path, method_name = "model";
  int eval_neighborhood = 8;
  eval_cmd->add_option("--pred", pred_path, "class grid file")->required();
  eval_cmd->add_option("--score", score_path, "score grid file")->required();
  eval_cmd->add_option("--truth", truth_path, "scene file with truth grid")->required();
  eval_cmd->add_option("--mask", mask_path, "grid file; nonzero channel-0 pixels are evaluated");
  eval_cmd->add_option("--method", method_name, "method name written in the report");
  eval_cmd->add_option("--neighborhood", eval_neighborhood, "Gamma-index neighborhood")
      ->check(CLI::IsMember({4, 8}))
      ->capture_default_str();
  eval_cmd->add_option("--out", out_dir, "output directory")->required();

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "train and evaluate all three methods");
  HyperFlags compare_flags;
  compare_flags.attach(compare_cmd, false);
  compare_cmd->add_option("--scene", scene_path, "input scene")->required();
  compare_cmd->add_option("--labels", labels_path, "label file");
  compare_cmd->add_option("--out", out_dir, "output directory")->required();

  // sweep-labels
  auto* sweep_cmd = app.add_subcommand("sweep-labels", "avg F of every method across label ratios");
  HyperFlags sweep_flags;
  std::string ratios_text = "1e-4,1e-3,1e-2,5e-2";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string sweep_out;
  sweep_flags.attach(sweep_cmd, false);
  sweep_cmd->add_option("--scene", scene_path, "input scene")->required();
  sweep_cmd->add_option("--ratios", ratios_text, "comma-separated label ratios")->capture_default_str();
  sweep_cmd->add_option("--seeds", seeds, "label sampling seeds")->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "CSV file to write")->required();

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "oracle-equivalence self check");
  VerifyOptions verify_options;
  verify_cmd->add_option("--trees", verify_options.trees, "random trees to test")->capture_default_str();
  verify_cmd->add_option("--seed", verify_options.seed, "generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      const SceneSpec spec = spec_path.empty() ? SceneSpec{} : load_scene_spec(spec_path);
      const auto generated = generate_scene(spec);
      save_scene(generated.scene, out_scene);
      save_labels(generated.labels, out_labels);
      std::size_t flood = 0, obstacles = 0;
      for (auto t : *generated.scene.truth) flood += t;
      for (auto o : generated.obstacle) obstacles += o;
      const auto n = static_cast<double>(generated.scene.pixel_count());
      out << "scene " << generated.scene.width << "x" << generated.scene.height << ", "
          << spec.feature_count() << " feature channels + elevation\n"
          << std::setprecision(4) << "flood fraction " << flood / n << ", dry fraction " << 1.0 - flood / n
          << "\nobstacle fraction " << obstacles / n << "\nwater level " << generated.water_level
          << "\nlabels " << generated.labels.size() << " (" << generated.labels.count(0) << " dry, "
          << generated.labels.count(1) << " flood)\n";
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      train_flags.resolve();
      set_thread_count(train_flags.threads);
      const auto cfg = train_flags.run_config();
      const auto scene = load_scene(scene_path);
      const auto labels = resolve_labels(labels_path, train_flags, scene);
      const auto result = train(scene, labels, cfg);
      ensure_dir(out_dir);
      save_model(result.model, fs::path(out_dir) / "model.txt");
      write_file(fs::path(out_dir) / "trace.csv",
                 [&](std::ostream& o) { write_trace_csv(result.trace, cfg.method == Method::Hmt, o); });
      for (int it : result.rho_kept_iterations)
        err << "warning: rho estimate undefined at iteration " << it << ", previous value kept\n";
      const auto& last = result.trace.snapshots.back();
      out << to_string(cfg.method) << ": " << last.iteration << " iterations, "
          << (result.trace.converged ? "converged" : "stopped at max_iter") << std::setprecision(10)
          << ", loglik " << last.log_likelihood << '\n';
      return kExitOk;
    }

    if (predict_cmd->parsed()) {
      set_thread_count(predict_threads);
      const auto model = load_model(model_path);
      const auto scene = load_scene(scene_path);
      const auto pred = predict(model, scene, predict_cutoff);
      ensure_dir(out_dir);
      std::vector<double> classes(pred.classes.begin(), pred.classes.end());
      save_scene(single_channel(scene.width, scene.height, classes), fs::path(out_dir) / "classes.ssg");
      save_scene(single_channel(scene.width, scene.height, pred.scores), fs::path(out_dir) / "scores.ssg");
      std::size_t flood = 0;
      for (auto c : pred.classes) flood += c;
      out << "predicted " << flood << " flood pixels of " << pred.classes.size() << '\n';
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      RasterScene pred_holder, mask_holder;
      const RasterScene* shape = nullptr;
      const auto classes = read_class_grid(pred_path, shape, pred_holder);
      const auto scores_scene = load_scene(score_path);
      const auto truth_scene = load_scene(truth_path);
      if (!truth_scene.truth) throw DataError("truth scene has no truth grid");
      if (scores_scene.pixel_count() != classes.size() || truth_scene.pixel_count() != classes.size() ||
          truth_scene.width != shape->width)
        throw DimError("prediction, score and truth grids are not aligned");
      std::vector<std::uint8_t> mask;
      if (!mask_path.empty()) {
        const RasterScene* mshape = nullptr;
        mask = read_class_grid(mask_path, mshape, mask_holder);
      }
      const auto scores = scores_scene.channel(0);
      const auto eval = evaluate(*shape, classes, {scores.begin(), scores.end()}, *truth_scene.truth, mask,
                                 eval_neighborhood == 4 ? Neighborhood::Four : Neighborhood::Eight);
      ensure_dir(out_dir);
      write_file(fs::path(out_dir) / "report.csv", [&](std::ostream& o) {
        write_eval_header(o);
        write_eval_rows(o, method_name, eval);
      });
      write_file(fs::path(out_dir) / "roc.csv", [&](std::ostream& o) { metrics::write_roc_csv(o, eval.roc); });
      write_eval_header(out);
      write_eval_rows(out, method_name, eval);
      return kExitOk;
    }

    if (compare_cmd->parsed()) {
      compare_flags.resolve();
      set_thread_count(compare_flags.threads);
      const auto cfg = compare_flags.run_config();
      const auto scene = load_scene(scene_path);
      const auto labels = resolve_labels(labels_path, compare_flags, scene);
      const auto outcomes = compare(scene, labels, cfg);
      ensure_dir(out_dir);
      write_file(fs::path(out_dir) / "compare.csv", [&](std::ostream& o) { write_compare_csv(o, outcomes); });
      for (const auto& o : outcomes) {
        if (!o.ok) continue;
        const auto name = to_string(o.method);
        write_file(fs::path(out_dir) / ("roc_" + name + ".csv"),
                   [&](std::ostream& f) { metrics::write_roc_csv(f, o.evaluation.roc); });
        write_file(fs::path(out_dir) / ("trace_" + name + ".csv"), [&](std::ostream& f) {
          write_trace_csv(o.training.trace, o.method == Method::Hmt, f);
        });
      }
      write_compare_csv(out, outcomes);
      bool any_failed = false;
      for (const auto& o : outcomes) any_failed |= !o.ok;
      return any_failed ? kExitFailure : kExitOk;
    }

    if (sweep_cmd->parsed()) {
      sweep_flags.resolve();
      set_thread_count(sweep_flags.threads);
      const auto cfg = sweep_flags.run_config();
      std::vector<double> ratios;
      try {
        ratios = parse_double_list(ratios_text);
      } catch (const std::exception&) {
        err << "usage error: --ratios must be a comma-separated list of numbers\n";
        return kExitUsage;
      }
      const auto scene = load_scene(scene_path);
      const auto rows = sweep_labels(scene, ratios, seeds, cfg);
      write_file(sweep_out, [&](std::ostream& o) { write_sweep_csv(o, rows); });
      write_sweep_csv(out, rows);
      return kExitOk;
    }

    if (verify_cmd->parsed()) {
      const auto checks = verify(verify_options);
      bool all = true;
      for (const auto& c : checks) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
        all &= c.passed;
      }
      return all ? kExitOk : kExitFailure;
    }
  } catch (const EmptyError& e) {
    err << "evaluation failed: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace ssem
