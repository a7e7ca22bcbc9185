#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ssem/em_trace.hpp"
#include "ssem/gaussian.hpp"
#include "ssem/grid.hpp"
#include "ssem/hmt.hpp"
#include "ssem/metrics.hpp"

namespace ssem {

enum class Method { Gmm, GmmElev, Hmt };

std::string to_string(Method method);
/// Accepts "gmm", "gmm-elev", "hmt"; throws std::invalid_argument otherwise.
Method parse_method(const std::string& name);
inline constexpr std::array<Method, 3> kAllMethods{Method::Gmm, Method::GmmElev, Method::Hmt};

/// Hyperparameters shared by every command.
struct RunConfig {
  Method method = Method::Hmt;
  double tol = 1e-5;
  int max_iter = 100;
  double cutoff = 0.5;
  double rho_init = 0.99;
  double pi_init = 0.5;
  Neighborhood neighborhood = Neighborhood::Eight;
  bool clamp_labels = false;
};

/// Serializable result of training any of the three methods.
struct TrainedModel {
  Method method = Method::Gmm;
  /// Set for HMT only.
  std::optional<double> rho;
  double pi1 = 0.5;
  std::array<GaussianParams, 2> components;
  /// Flow-tree neighborhood used by HMT prediction.
  Neighborhood neighborhood = Neighborhood::Eight;

  bool use_elevation() const { return method == Method::GmmElev; }
};

/// Text key=value model file with 17 significant digits.
void write_model(const TrainedModel& model, std::ostream& out);
TrainedModel read_model(std::istream& in);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

struct TrainResult {
  TrainedModel model;
  EmTrace trace;
  /// HMT iterations whose rho estimate was undefined.
  std::vector<int> rho_kept_iterations;
};

TrainResult train(const RasterScene& scene, const LabelSet& labels, const RunConfig& config);

struct Prediction {
  std::vector<std::uint8_t> classes;
  /// P(flood) per pixel: mixture posterior or tree marginal.
  std::vector<double> scores;
  /// HMT only: the flow tree used for decoding.
  std::optional<hmt::FlowTree> tree;
};

Prediction predict(const TrainedModel& model, const RasterScene& scene, double cutoff = 0.5);

struct Evaluation {
  metrics::ClassReport report;
  metrics::RocCurve roc;
  std::size_t salt_pepper = 0;
};

/// Class report and ROC over the mask; salt-and-pepper over the full grid.
Evaluation evaluate(const RasterScene& scene, std::span<const std::uint8_t> classes,
                    std::span<const double> scores, std::span<const std::uint8_t> truth,
                    std::span<const std::uint8_t> mask, Neighborhood neighborhood);

void write_eval_header(std::ostream& out);
void write_eval_rows(std::ostream& out, const std::string& method, const Evaluation& eval);

struct MethodOutcome {
  Method method = Method::Gmm;
  bool ok = false;
  std::string error;
  TrainResult training;
  Prediction prediction;
  Evaluation evaluation;
};

/// Trains, predicts and evaluates every method on one scene. A failing
/// method is reported in its outcome and does not stop the others.
std::vector<MethodOutcome> compare(const RasterScene& scene, const LabelSet& labels,
                                   const RunConfig& base);
void write_compare_csv(std::ostream& out, const std::vector<MethodOutcome>& outcomes);

struct SweepRow {
  Method method = Method::Gmm;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  double avg_f = 0.0;  // NaN when the run failed
  std::string reason;
  /// HMT decoded maps, kept for structural checks; empty otherwise.
  std::vector<std::uint8_t> classes;
};

std::vector<SweepRow> sweep_labels(const RasterScene& scene, const std::vector<double>& ratios,
                                   const std::vector<std::uint64_t>& seeds, const RunConfig& base,
                                   bool keep_maps = false);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

using RhoEstimator =
    std::function<std::optional<double>(const hmt::TreePosteriors&, const hmt::FlowTree&)>;

struct VerifyOptions {
  std::size_t trees = 100;
  std::size_t min_nodes = 2;
  std::size_t max_nodes = 12;
  std::uint64_t seed = 20240611;
  /// The rho update under test; defaults to hmt::estimate_rho.
  RhoEstimator rho_estimator;
};

/// Oracle-equivalence suite: tree marginals, pairwise tables and MAP against
/// enumeration, the rho update against the enumerated expected-count MLE,
/// and EM monotonicity for both methods on a small synthetic scene.
std::vector<VerifyCheck> verify(const VerifyOptions& options = {});

}  // namespace ssem
