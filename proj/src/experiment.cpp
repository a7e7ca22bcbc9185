#include "ssem/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "ssem/error.hpp"
#include "ssem/gmm.hpp"
#include "ssem/oracle.hpp"

namespace ssem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

gmm::GmmModel as_gmm(const TrainedModel& m) { return {m.pi1, m.components}; }

hmt::HmtModel as_hmt(const TrainedModel& m) {
  return {m.rho.value_or(0.99), m.pi1, m.components};
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::Gmm: return "gmm";
    case Method::GmmElev: return "gmm-elev";
    case Method::Hmt: return "hmt";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "gmm") return Method::Gmm;
  if (name == "gmm-elev") return Method::GmmElev;
  if (name == "hmt") return Method::Hmt;
  throw std::invalid_argument("unknown method '" + name + "'");
}

void write_model(const TrainedModel& model, std::ostream& out) {
  const auto m = model.components[0].dim();
  out << "# ssem model\n";
  out << "method=" << to_string(model.method) << '\n';
  out << "dim=" << m << '\n';
  out << "neighborhood=" << static_cast<int>(model.neighborhood) << '\n';
  out << std::setprecision(17);
  if (model.rho) out << "rho=" << *model.rho << '\n';
  out << "pi1=" << model.pi1 << '\n';
  for (int c = 0; c < 2; ++c)
    for (Eigen::Index k = 0; k < m; ++k) out << "mean." << c << '.' << k << '=' << model.components[c].mean[k] << '\n';
  for (int c = 0; c < 2; ++c)
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        out << "cov." << c << '.' << i << '.' << j << '=' << model.components[c].cov(i, j) << '\n';
}

TrainedModel read_model(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("model line " + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto take = [&kv](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("model file lacks key '" + key + "'");
    return it->second;
  };
  auto number = [&take](const std::string& key) {
    const auto& text = take(key);
    std::istringstream ss(text);
    double v = 0.0;
    if (!(ss >> v) || !(ss >> std::ws).eof()) throw FormatError("bad number for '" + key + "'");
    return v;
  };

  TrainedModel model;
  try {
    model.method = parse_method(take("method"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  const double dim_value = number("dim");
  if (!(dim_value >= 1.0) || dim_value != std::floor(dim_value)) throw FormatError("bad dim");
  const auto m = static_cast<Eigen::Index>(dim_value);
  if (kv.count("neighborhood")) {
    const double nb = number("neighborhood");
    if (nb != 4.0 && nb != 8.0) throw FormatError("neighborhood must be 4 or 8");
    model.neighborhood = nb == 4.0 ? Neighborhood::Four : Neighborhood::Eight;
  }
  if (model.method == Method::Hmt) model.rho = number("rho");
  model.pi1 = number("pi1");
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd mean(m);
    Eigen::MatrixXd cov(m, m);
    for (Eigen::Index k = 0; k < m; ++k)
      mean[k] = number("mean." + std::to_string(c) + '.' + std::to_string(k));
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        cov(i, j) = number("cov." + std::to_string(c) + '.' + std::to_string(i) + '.' + std::to_string(j));
    try {
      model.components[c] = make_gaussian(std::move(mean), std::move(cov));
    } catch (const Error& e) {
      throw FormatError(std::string("model component invalid: ") + e.what());
    }
  }
  return model;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_model(model, out);
  if (!out) throw IoError("failed writing " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_model(in);
}

TrainResult train(const RasterScene& scene, const LabelSet& labels, const RunConfig& config) {
  TrainResult out;
  out.model.method = config.method;
  out.model.neighborhood = config.neighborhood;
  if (config.method == Method::Hmt) {
    hmt::EmConfig cfg;
    cfg.max_iter = config.max_iter;
    cfg.tol = config.tol;
    cfg.rho_init = config.rho_init;
    cfg.pi_init = config.pi_init;
    cfg.neighborhood = config.neighborhood;
    cfg.clamp_labels = config.clamp_labels;
    auto fit = hmt::em_fit(scene, labels, cfg);
    out.model.rho = fit.model.rho;
    out.model.pi1 = fit.model.pi1;
    out.model.components = fit.model.components;
    out.trace = std::move(fit.trace);
    out.rho_kept_iterations = std::move(fit.rho_kept_iterations);
  } else {
    auto fit = gmm::em_fit(scene, labels, config.method == Method::GmmElev, {config.max_iter, config.tol});
    out.model.pi1 = fit.model.pi1;
    out.model.components = fit.model.components;
    out.trace = std::move(fit.trace);
  }
  return out;
}

Prediction predict(const TrainedModel& model, const RasterScene& scene, double cutoff) {
  Prediction out;
  if (model.method == Method::Hmt) {
    const Eigen::MatrixXd features = feature_matrix(scene, false);
    if (features.cols() != model.components[0].dim())
      throw DimError("scene feature count does not match the model");
    auto tree = hmt::build_flow_tree(elevation_values(scene), scene.width, scene.height, model.neighborhood);
    const auto hm = as_hmt(model);
    const auto em = hmt::log_emissions(hm, features);
    out.scores = hmt::e_step(hm, tree, em).marginal;
    out.classes = hmt::map_decode(hm, tree, em).labels;
    out.tree = std::move(tree);
  } else {
    const Eigen::MatrixXd features = feature_matrix(scene, model.use_elevation());
    if (features.cols() != model.components[0].dim())
      throw DimError("scene feature count does not match the model");
    const auto gm = as_gmm(model);
    const Eigen::VectorXd post = gmm::posterior_rows(gm, features);
    out.scores.assign(post.begin(), post.end());
    out.classes.resize(out.scores.size());
    for (std::size_t i = 0; i < out.scores.size(); ++i) out.classes[i] = out.scores[i] >= cutoff ? 1 : 0;
  }
  return out;
}

Evaluation evaluate(const RasterScene& scene, std::span<const std::uint8_t> classes,
                    std::span<const double> scores, std::span<const std::uint8_t> truth,
                    std::span<const std::uint8_t> mask, Neighborhood neighborhood) {
  Evaluation out;
  out.report = metrics::class_report(classes, truth, mask);
  out.roc = metrics::roc_auc(scores, truth, mask);
  out.salt_pepper = metrics::salt_pepper_count(classes, scene.width, scene.height, neighborhood);
  return out;
}

void write_eval_header(std::ostream& out) {
  out << "method,class,precision,recall,f1,avg_f,auc,salt_pepper_count,note\n";
}

void write_eval_rows(std::ostream& out, const std::string& method, const Evaluation& eval) {
  static constexpr const char* kNames[2] = {"dry", "flood"};
  out << std::setprecision(10);
  for (int c = 0; c < 2; ++c) {
    const auto& m = eval.report.per_class[c];
    out << method << ',' << kNames[c] << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ','
        << eval.report.avg_f << ',' << eval.roc.auc << ',' << eval.salt_pepper << ",\n";
  }
}

std::vector<MethodOutcome> compare(const RasterScene& scene, const LabelSet& labels,
                                   const RunConfig& base) {
  if (!scene.truth) throw DataError("compare requires a scene with a truth grid");
  std::vector<MethodOutcome> outcomes;
  for (const auto method : kAllMethods) {
    MethodOutcome o;
    o.method = method;
    try {
      RunConfig cfg = base;
      cfg.method = method;
      o.training = train(scene, labels, cfg);
      o.prediction = predict(o.training.model, scene, cfg.cutoff);
      o.evaluation = evaluate(scene, o.prediction.classes, o.prediction.scores, *scene.truth, {},
                              cfg.neighborhood);
      o.ok = true;
    } catch (const Error& e) {
      o.error = e.what();
    }
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

void write_compare_csv(std::ostream& out, const std::vector<MethodOutcome>& outcomes) {
  write_eval_header(out);
  for (const auto& o : outcomes) {
    if (o.ok) {
      write_eval_rows(out, to_string(o.method), o.evaluation);
    } else {
      std::string note = o.error;
      std::replace(note.begin(), note.end(), ',', ';');
      out << to_string(o.method) << ",error,,,,,,," << note << '\n';
    }
  }
}

std::vector<SweepRow> sweep_labels(const RasterScene& scene, const std::vector<double>& ratios,
                                   const std::vector<std::uint64_t>& seeds, const RunConfig& base,
                                   bool keep_maps) {
  if (!scene.truth) throw DataError("sweep requires a scene with a truth grid");
  std::vector<SweepRow> rows;
  for (const double ratio : ratios) {
    for (const auto seed : seeds) {
      LabelSet labels;
      std::string sample_error;
      try {
        labels = sample_labels(scene, ratio, seed);
      } catch (const Error& e) {
        sample_error = e.what();
      }
      for (const auto method : kAllMethods) {
        SweepRow row{method, ratio, seed, kNaN, sample_error, {}};
        if (sample_error.empty()) {
          try {
            RunConfig cfg = base;
            cfg.method = method;
            const auto trained = train(scene, labels, cfg);
            auto pred = predict(trained.model, scene, cfg.cutoff);
            row.avg_f = metrics::class_report(pred.classes, *scene.truth).avg_f;
            if (keep_maps && method == Method::Hmt) row.classes = std::move(pred.classes);
          } catch (const Error& e) {
            row.reason = e.what();
          }
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "method,ratio,seed,avg_f,reason\n" << std::setprecision(10);
  for (const auto& r : rows) {
    std::string reason = r.reason;
    std::replace(reason.begin(), reason.end(), ',', ';');
    out << to_string(r.method) << ',' << r.ratio << ',' << r.seed << ',' << r.avg_f << ',' << reason << '\n';
  }
}

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(3) << v;
  return ss.str();
}

double transition_objective(double rho, double flooded_pairs, double dried_pairs) {
  double q = 0.0;
  if (flooded_pairs > 0.0) q += flooded_pairs * std::log(rho);
  if (dried_pairs > 0.0) q += dried_pairs * (rho < 1.0 ? std::log(1.0 - rho) : -1e300);
  return q;
}

}  // namespace

std::vector<VerifyCheck> verify(const VerifyOptions& options) {
  const RhoEstimator rho_estimator = options.rho_estimator ? options.rho_estimator : RhoEstimator(hmt::estimate_rho);
  std::mt19937_64 rng(options.seed);
  VerifyCheck marg{"hmt_marginals_vs_enumeration", true, ""};
  VerifyCheck pair{"hmt_pairwise_vs_enumeration", true, ""};
  VerifyCheck map{"hmt_map_vs_enumeration", true, ""};
  VerifyCheck rho{"hmt_rho_update_is_mle", true, ""};
  double worst_marg = 0.0, worst_pair = 0.0, worst_map = 0.0, worst_rho = 0.0;
  std::size_t map_mismatch = 0, rho_not_max = 0;

  const std::size_t span = options.max_nodes - options.min_nodes + 1;
  for (std::size_t t = 0; t < options.trees; ++t) {
    const std::size_t nodes = options.min_nodes + t % span;
    const auto tree = oracle::random_tree(nodes, rng);
    const auto model = oracle::random_model(2, 0.5, rng);
    const Eigen::MatrixXd x = oracle::sample_features(model, tree, rng);

    const auto post = hmt::e_step(model, tree, x);
    const auto exact = oracle::enumerate_joint(model, tree, x);
    for (std::size_t i = 0; i < nodes; ++i) {
      worst_marg = std::max(worst_marg, std::abs(post.marginal[i] - exact.marginal[i]));
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          worst_pair = std::max(worst_pair, std::abs(post.pairwise[i][a][b] - exact.pairwise[i][a][b]));
    }
    const auto decoded = hmt::map_decode(model, tree, x);
    worst_map = std::max(worst_map, std::abs(decoded.log_joint - exact.map_log_value));
    if (exact.map_ties == 1 && decoded.labels != exact.map_assignment) ++map_mismatch;

    // Expected-count MLE straight from the enumerated pairwise tables.
    double flooded = 0.0, dried = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
      if (tree.parent[i] < 0) continue;
      flooded += exact.pairwise[i][1][1];
      dried += exact.pairwise[i][0][1];
    }
    const auto estimate = rho_estimator(post, tree);
    if (flooded + dried > 1e-12 && estimate) {
      const double reference = flooded / (flooded + dried);
      worst_rho = std::max(worst_rho, std::abs(*estimate - reference));
      const double q = transition_objective(*estimate, flooded, dried);
      for (const double delta : {-1e-3, 1e-3}) {
        const double alt = std::clamp(*estimate + delta, 1e-12, 1.0);
        if (transition_objective(alt, flooded, dried) > q + 1e-12) {
          ++rho_not_max;
          break;
        }
      }
    }
  }
  marg.passed = worst_marg <= 1e-9;
  marg.detail = "max abs diff " + fmt(worst_marg);
  pair.passed = worst_pair <= 1e-9;
  pair.detail = "max abs diff " + fmt(worst_pair);
  map.passed = worst_map <= 1e-9 && map_mismatch == 0;
  map.detail = "max value diff " + fmt(worst_map) + ", assignment mismatches " + std::to_string(map_mismatch);
  rho.passed = worst_rho <= 1e-9 && rho_not_max == 0;
  rho.detail = "max diff to expected-count MLE " + fmt(worst_rho) + ", non-maximizing trees " +
               std::to_string(rho_not_max);

  // EM monotonicity on a small obstacle scene.
  SceneSpec spec;
  spec.width = 24;
  spec.height = 24;
  spec.obstacle_fraction = 0.3;
  spec.noise_sigma = 0.02;
  spec.label_ratio = 0.05;
  spec.bump_period = 12.0;
  spec.rng_seed = options.seed;
  const auto synth = generate_scene(spec);

  VerifyCheck gmm_mono{"gmm_loglik_monotone", true, ""};
  {
    const auto fit = gmm::em_fit(synth.scene, synth.labels, true, {50, 1e-5});
    double prev = -std::numeric_limits<double>::infinity();
    double worst_drop = 0.0, worst_trace = 0.0;
    for (const auto& s : fit.trace.snapshots) {
      const double ll = oracle::gmm_loglik({s.pi1, s.components}, synth.scene, synth.labels, true);
      worst_trace = std::max(worst_trace, std::abs(ll - s.log_likelihood));
      worst_drop = std::max(worst_drop, prev - ll);
      prev = ll;
    }
    gmm_mono.passed = worst_drop <= 1e-8 && worst_trace <= 1e-6;
    gmm_mono.detail = "largest drop " + fmt(worst_drop) + ", trace vs oracle " + fmt(worst_trace);
  }

  VerifyCheck hmt_mono{"hmt_objective_monotone", true, ""};
  {
    const auto fit = hmt::em_fit(synth.scene, synth.labels, {50, 1e-5});
    const Eigen::MatrixXd x = feature_matrix(synth.scene, false);
    double worst = 0.0;
    for (std::size_t t = 0; t + 1 < fit.trace.snapshots.size(); ++t) {
      const auto& a = fit.trace.snapshots[t];
      const auto& b = fit.trace.snapshots[t + 1];
      const hmt::HmtModel before{a.rho, a.pi1, a.components};
      const hmt::HmtModel after{b.rho, b.pi1, b.components};
      const auto post = hmt::e_step(before, fit.tree, x);
      worst = std::max(worst, oracle::hmt_expected_loglik(before, post, fit.tree, x) -
                                  oracle::hmt_expected_loglik(after, post, fit.tree, x));
    }
    hmt_mono.passed = worst <= 1e-8;
    hmt_mono.detail = "largest objective drop " + fmt(worst);
  }

  return {marg, pair, map, rho, gmm_mono, hmt_mono};
}

}  // namespace ssem
