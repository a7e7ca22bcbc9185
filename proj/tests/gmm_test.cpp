#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "ssem/error.hpp"
#include "ssem/gmm.hpp"
#include "ssem/oracle.hpp"
#include "ssem/parallel.hpp"

using namespace ssem;
using gmm::GmmModel;

namespace {

GaussianParams scalar(double mean, double var) {
  return make_gaussian(Eigen::VectorXd::Constant(1, mean), Eigen::MatrixXd::Constant(1, 1, var));
}

GmmModel scalar_model(double mu0, double mu1, double var, double pi1) {
  GmmModel m;
  m.pi1 = pi1;
  m.components = {scalar(mu0, var), scalar(mu1, var)};
  return m;
}

Eigen::VectorXd point(double x) { return Eigen::VectorXd::Constant(1, x); }

struct Data {
  Eigen::MatrixXd features;
  std::vector<std::int8_t> labels;
};

// Two overlapping 2-D clusters with `labeled` labels split evenly.
Data mixture_data(int n, int labeled, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Data d;
  d.features.resize(n, 2);
  d.labels.assign(n, -1);
  std::vector<int> cls(n);
  for (int i = 0; i < n; ++i) {
    cls[i] = i % 3 == 0 ? 1 : 0;
    d.features(i, 0) = (cls[i] ? 1.5 : 0.0) + n01(rng);
    d.features(i, 1) = (cls[i] ? -1.0 : 0.5) + 0.7 * n01(rng);
  }
  int got[2] = {0, 0};
  for (int i = 0; i < n && got[0] + got[1] < labeled; ++i) {
    if (got[cls[i]] < labeled / 2) {
      d.labels[i] = static_cast<std::int8_t>(cls[i]);
      ++got[cls[i]];
    }
  }
  return d;
}

double max_param_diff(const GmmModel& a, const GmmModel& b) {
  double d = std::abs(a.pi1 - b.pi1);
  for (int c = 0; c < 2; ++c) {
    d = std::max(d, (a.components[c].mean - b.components[c].mean).cwiseAbs().maxCoeff());
    d = std::max(d, (a.components[c].cov - b.components[c].cov).cwiseAbs().maxCoeff());
  }
  return d;
}

}  // namespace

TEST_SUITE("gmm") {

TEST_CASE("init from two-point classes") {
  Eigen::MatrixXd f(4, 1);
  f << 0, 2, 10, 12;
  const auto m = gmm::init_from_labels(f, {0, 0, 1, 1});
  CHECK(m.components[0].mean[0] == 1.0);
  CHECK(m.components[1].mean[0] == 11.0);
  CHECK(m.pi1 == 0.5);
  CHECK(m.prior(0) + m.prior(1) == 1.0);
}

TEST_CASE("balanced 5000/5000 labels give pi1 = 0.5") {
  Eigen::MatrixXd f(10000, 1);
  std::vector<std::int8_t> labels(10000);
  for (int i = 0; i < 10000; ++i) {
    labels[i] = static_cast<std::int8_t>(i % 2);
    f(i, 0) = (i % 2) * 5.0 + (i % 7) * 0.1;
  }
  CHECK(gmm::init_from_labels(f, labels).pi1 == 0.5);
}

TEST_CASE("a single label in a class is an init error") {
  Eigen::MatrixXd f(4, 1);
  f << 0, 2, 10, 12;
  CHECK_THROWS_AS(gmm::init_from_labels(f, {0, 0, 1, -1}), InitError);
  CHECK_THROWS_AS(gmm::init_from_labels(f, {0, 0, -1, -1}), InitError);
}

TEST_CASE("init on a scene masks elevation unless asked") {
  const auto g = generate_scene(test::separable_spec(32));
  CHECK(gmm::init_from_labels(g.scene, g.labels, false).dim() == 3);
  CHECK(gmm::init_from_labels(g.scene, g.labels, true).dim() == 4);
}

TEST_CASE("posterior examples") {
  CHECK(gmm::posterior(scalar_model(-1, 1, 1, 0.5), point(0)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gmm::posterior(scalar_model(-1, 1, 1, 1.0), point(-3)) == 1.0);
  CHECK(gmm::posterior(scalar_model(-1, 1, 1, 1.0), point(30)) == 1.0);
  CHECK(gmm::posterior(scalar_model(-1, 1, 1, 0.0), point(30)) == 0.0);
}

TEST_CASE("posterior for means 0 and 4 at x = 1 against the scalar formula") {
  const long double pi = 3.14159265358979323846264338327950288L;
  auto density = [&](long double x, long double mu) {
    return std::exp(-(x - mu) * (x - mu) / 2) / std::sqrt(2 * pi);
  };
  const long double n0 = density(1, 0), n1 = density(1, 4);
  const double expected = static_cast<double>(0.5L * n1 / (0.5L * n0 + 0.5L * n1));
  const double got = gmm::posterior(scalar_model(0, 4, 1, 0.5), point(1));
  CHECK(std::abs(got - expected) < 1e-15);
  CHECK(std::abs(got - 0.017986209962091559) < 1e-15);
}

TEST_CASE("class posteriors are complementary") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10, 10);
  const auto m = scalar_model(-0.3, 2.0, 1.7, 0.3);
  GmmModel swapped = m;
  swapped.pi1 = 1 - m.pi1;
  std::swap(swapped.components[0], swapped.components[1]);
  for (int i = 0; i < 200; ++i) {
    const auto x = point(u(rng));
    CHECK(std::abs(gmm::posterior(m, x) + gmm::posterior(swapped, x) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(gmm::posterior(m, Eigen::VectorXd::Zero(2)), DimError);
}

TEST_CASE("posterior rows match single-point posteriors") {
  const auto d = mixture_data(300, 20, 1);
  const auto m = gmm::init_from_labels(d.features, d.labels);
  const auto rows = gmm::posterior_rows(m, d.features);
  for (Eigen::Index i = 0; i < d.features.rows(); ++i)
    CHECK(rows[i] == gmm::posterior(m, d.features.row(i).transpose()));
}

TEST_CASE("defaults are tol 1e-5 and 100 iterations") {
  gmm::EmConfig cfg;
  CHECK(cfg.tol == 1e-5);
  CHECK(cfg.max_iter == 100);
}

TEST_CASE("fully labeled data is a fixed point after one iteration") {
  const auto d = mixture_data(200, 200, 2);
  std::vector<std::int8_t> all(200);
  for (int i = 0; i < 200; ++i) all[i] = static_cast<std::int8_t>(i % 3 == 0 ? 1 : 0);
  const auto fit = gmm::em_fit(d.features, all, {10, 0.0});
  const auto& snaps = fit.trace.snapshots;
  REQUIRE(snaps.size() >= 3);
  const auto direct = gmm::init_from_labels(d.features, all);
  for (std::size_t t = 1; t < snaps.size(); ++t) {
    CHECK(std::abs(snaps[t].pi1 - snaps[1].pi1) <= 1e-12);
    for (int c = 0; c < 2; ++c) {
      CHECK((snaps[t].components[c].mean - snaps[1].components[c].mean).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((snaps[t].components[c].cov - snaps[1].components[c].cov).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  CHECK(max_param_diff(fit.model, direct) <= 1e-12);
}

TEST_CASE("observed log-likelihood never decreases") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = mixture_data(200, 20, seed);
    const auto fit = gmm::em_fit(d.features, d.labels, {200, 1e-10});
    double prev = -INFINITY;
    for (const auto& s : fit.trace.snapshots) {
      GmmModel m;
      m.pi1 = s.pi1;
      m.components = s.components;
      const double ll = oracle::gmm_loglik(m, d.features, d.labels);
      CHECK(std::abs(ll - s.log_likelihood) < 1e-9 * std::max(1.0, std::abs(ll)));
      CHECK(ll >= prev - 1e-8);
      prev = ll;
    }
  }
}

TEST_CASE("trace bookkeeping") {
  const auto d = mixture_data(300, 30, 3);
  const auto fit = gmm::em_fit(d.features, d.labels, {2000, 1e-5});
  const auto& snaps = fit.trace.snapshots;
  REQUIRE(!snaps.empty());
  CHECK(snaps[0].iteration == 0);
  CHECK(std::isnan(snaps[0].max_rel_change));
  CHECK(std::isnan(snaps[0].rho));
  const auto init = gmm::init_from_labels(d.features, d.labels);
  CHECK(snaps[0].pi1 == init.pi1);
  CHECK(fit.trace.converged);
  CHECK(snaps.back().max_rel_change < 1e-5);
  for (std::size_t t = 1; t + 1 < snaps.size(); ++t) CHECK(snaps[t].max_rel_change >= 1e-5);
  CHECK(fit.model.pi1 == snaps.back().pi1);
}

TEST_CASE("max_iter caps the run") {
  const auto d = mixture_data(300, 30, 3);
  const auto fit = gmm::em_fit(d.features, d.labels, {2, 0.0});
  CHECK(fit.trace.snapshots.size() == 3);
  CHECK_FALSE(fit.trace.converged);
}

TEST_CASE("pixel order does not matter") {
  const auto d = mixture_data(250, 24, 6);
  std::vector<int> perm(250);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(8);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd f(250, 2);
  std::vector<std::int8_t> l(250);
  for (int i = 0; i < 250; ++i) {
    f.row(i) = d.features.row(perm[i]);
    l[i] = d.labels[perm[i]];
  }
  const auto a = gmm::em_fit(d.features, d.labels, {100, 1e-12});
  const auto b = gmm::em_fit(f, l, {100, 1e-12});
  CHECK(max_param_diff(a.model, b.model) <= 1e-10);
}

TEST_CASE("threads do not change the result") {
  const auto d = mixture_data(5000, 40, 9);
  set_thread_count(1);
  const auto serial = gmm::em_fit(d.features, d.labels);
  const auto again = gmm::em_fit(d.features, d.labels);
  set_thread_count(4);
  const auto par = gmm::em_fit(d.features, d.labels);
  set_thread_count(1);
  CHECK(max_param_diff(serial.model, again.model) == 0.0);
  CHECK(max_param_diff(serial.model, par.model) <= 1e-12);
}

TEST_CASE("infer at 0.5 is the Bayes argmax") {
  const auto d = mixture_data(400, 30, 10);
  const auto fit = gmm::em_fit(d.features, d.labels);
  const auto& m = fit.model;
  const auto pred = gmm::infer(m, d.features, 0.5);
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
    const Eigen::VectorXd x = d.features.row(i).transpose();
    const double s1 = std::log(m.pi1) + log_pdf(m.components[1], x);
    const double s0 = std::log(1 - m.pi1) + log_pdf(m.components[0], x);
    if (std::abs(s1 - s0) > 1e-9) CHECK(pred[i] == (s1 > s0 ? 1 : 0));
  }
  const auto all = gmm::infer(m, d.features, 0.0);
  CHECK(std::all_of(all.begin(), all.end(), [](auto v) { return v == 1; }));
}

TEST_CASE("thresholded scalar posterior matches the log-density sign") {
  const auto m = scalar_model(0, 4, 1, 0.5);
  Eigen::MatrixXd xs(9, 1);
  xs << -1, 0, 1, 1.9, 2.1, 3, 4, 5, 8;
  const auto pred = gmm::infer(m, xs, 0.5);
  for (int i = 0; i < 9; ++i) {
    const double x = xs(i, 0);
    const double diff = -(x - 4) * (x - 4) / 2 + x * x / 2;
    CHECK(pred[i] == (diff > 0 ? 1 : 0));
  }
}

TEST_CASE("scene overloads agree with the matrix path") {
  SceneSpec spec = test::separable_spec(32);
  spec.obstacle_fraction = 0.2;
  const auto g = generate_scene(spec);
  const auto fit = gmm::em_fit(g.scene, g.labels, true);
  const auto f = feature_matrix(g.scene, true);
  const auto direct = gmm::em_fit(f, g.labels.dense(g.scene.width, g.scene.height));
  CHECK(max_param_diff(fit.model, direct.model) == 0.0);
  CHECK(gmm::infer(fit.model, g.scene, true) == gmm::infer(direct.model, f));
}

}  // TEST_SUITE
