#include <doctest.h>

#include <cmath>
#include <random>

#include "ssem/error.hpp"
#include "ssem/gmm.hpp"
#include "ssem/hmt.hpp"
#include "ssem/oracle.hpp"

using namespace ssem;

namespace {

hmt::EmissionTable probs(std::vector<std::array<double, 2>> rows) {
  hmt::EmissionTable t{Eigen::MatrixX2d(static_cast<Eigen::Index>(rows.size()), 2)};
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int c = 0; c < 2; ++c) t.log(static_cast<Eigen::Index>(i), c) = std::log(rows[i][c]);
  return t;
}

hmt::HmtModel params(double rho, double pi1) {
  hmt::HmtModel m;
  m.rho = rho;
  m.pi1 = pi1;
  m.components = {make_gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)),
                  make_gaussian(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Identity(1, 1))};
  return m;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("two-node joint by hand") {
  const auto tree = hmt::FlowTree::from_parents({-1, 0});
  const double a0 = 0.2, a1 = 0.6, b0 = 0.5, b1 = 0.3;
  const auto e = oracle::enumerate_joint(params(0.9, 0.4), tree, probs({{a0, a1}, {b0, b1}}));
  const double p00 = 0.6 * a0 * b0;        // root dry, child dry
  const double p10 = 0.4 * a1 * 0.1 * b0;  // root flooded, child dry
  const double p11 = 0.4 * a1 * 0.9 * b1;
  const double z = p00 + p10 + p11;
  CHECK(e.log_evidence == doctest::Approx(std::log(z)).epsilon(1e-14));
  CHECK(e.marginal[0] == doctest::Approx((p10 + p11) / z).epsilon(1e-14));
  CHECK(e.marginal[1] == doctest::Approx(p11 / z).epsilon(1e-14));
  CHECK(e.pairwise[1][0][0] == doctest::Approx(p00 / z).epsilon(1e-14));
  CHECK(e.pairwise[1][0][1] == doctest::Approx(p10 / z).epsilon(1e-14));
  CHECK(e.pairwise[1][1][1] == doctest::Approx(p11 / z).epsilon(1e-14));
  CHECK(e.pairwise[1][1][0] == 0.0);
  CHECK(e.pairwise[0][0][0] + e.pairwise[0][1][1] == 0.0);
  // p11 is the largest of the three
  CHECK(e.map_assignment == std::vector<std::uint8_t>{1, 1});
  CHECK(e.map_log_value == doctest::Approx(std::log(p11)).epsilon(1e-14));
  CHECK(e.map_ties == 1);
}

TEST_CASE("enumeration is capped") {
  std::mt19937_64 rng(1);
  const auto model = params(0.9, 0.5);
  const auto big = oracle::random_tree(oracle::kEnumerationCap + 1, rng);
  CHECK_THROWS_AS(oracle::enumerate_joint(model, big, Eigen::MatrixXd::Zero(21, 1)), CapError);
  const auto ok = oracle::random_tree(oracle::kEnumerationCap, rng);
  CHECK_NOTHROW(oracle::enumerate_joint(model, ok, Eigen::MatrixXd::Zero(20, 1)));
}

TEST_CASE("enumeration sums are self-consistent") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto tree = oracle::random_tree(9, rng);
    const auto model = oracle::random_model(2, 0.4, rng);
    const auto x = oracle::sample_features(model, tree, rng);
    const auto e = oracle::enumerate_joint(model, tree, x);
    for (std::size_t i = 0; i < tree.size(); ++i) {
      if (tree.is_root(i)) continue;
      const auto& p = e.pairwise[i];
      CHECK(p[0][0] + p[0][1] + p[1][0] + p[1][1] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(p[1][0] + p[1][1] == doctest::Approx(e.marginal[i]).epsilon(1e-12));
      CHECK(p[0][1] + p[1][1] == doctest::Approx(e.marginal[tree.parent[i]]).epsilon(1e-12));
    }
  }
}

TEST_CASE("sum-product agrees with enumeration on random trees") {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 11;
    const auto tree = oracle::random_tree(n, rng);
    const auto model = oracle::random_model(2, trial % 2 ? 0.0 : 0.9, rng);
    const auto x = oracle::sample_features(model, tree, rng);
    const auto e = oracle::enumerate_joint(model, tree, x);
    const auto post = hmt::e_step(model, tree, x);
    CHECK(std::abs(post.log_likelihood - e.log_evidence) < 1e-9);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(post.marginal[i] - e.marginal[i]) < 1e-9);
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) CHECK(std::abs(post.pairwise[i][a][b] - e.pairwise[i][a][b]) < 1e-9);
    }
    const auto map = hmt::map_decode(model, tree, x);
    CHECK(std::abs(map.log_joint - e.map_log_value) < 1e-9);
    if (e.map_ties == 1) CHECK(map.labels == e.map_assignment);
  }
}

TEST_CASE("gmm log-likelihood examples") {
  gmm::GmmModel m;
  m.pi1 = 0.25;
  m.components = {make_gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)),
                  make_gaussian(Eigen::VectorXd::Constant(1, 4), Eigen::MatrixXd::Identity(1, 1))};
  Eigen::MatrixXd x(1, 1);
  x << 0.0;
  const double n0 = -0.5 * std::log(2 * M_PI);
  const double n1 = n0 - 8.0;
  CHECK(oracle::gmm_loglik(m, x, {0}) == doctest::Approx(std::log(0.75) + n0).epsilon(1e-14));
  CHECK(oracle::gmm_loglik(m, x, {1}) == doctest::Approx(std::log(0.25) + n1).epsilon(1e-14));
  CHECK(oracle::gmm_loglik(m, x, {-1}) ==
        doctest::Approx(std::log(0.75 * std::exp(n0) + 0.25 * std::exp(n1))).epsilon(1e-14));

  // with every pixel labeled the unlabeled sum is empty
  Eigen::MatrixXd y(3, 1);
  y << 0.0, 4.0, 1.0;
  const double labeled = oracle::gmm_loglik(m, y, {0, 1, 0});
  CHECK(labeled == doctest::Approx(2 * std::log(0.75) + std::log(0.25) + 2 * n0 + n0 - 0.5).epsilon(1e-14));
}

TEST_CASE("expected complete log-likelihood of a certain root") {
  // a single root with certain class: Q = ln pi + ln N
  const auto tree = hmt::FlowTree::from_parents({-1});
  hmt::TreePosteriors post;
  post.marginal = {1.0};
  post.pairwise.assign(1, hmt::PairTable{});
  Eigen::MatrixXd x(1, 1);
  x << 1.0;
  CHECK(oracle::hmt_expected_loglik(params(0.9, 0.3), post, tree, x) ==
        doctest::Approx(std::log(0.3) - 0.5 * std::log(2 * M_PI)).epsilon(1e-14));
}

TEST_CASE("random trees are valid forests") {
  std::mt19937_64 rng(77);
  for (std::size_t n : {1u, 2u, 15u, 200u}) {
    const auto t = oracle::random_tree(n, rng);
    CHECK(t.size() == n);
    CHECK_NOTHROW(t.validate());
    CHECK(!t.roots.empty());
  }
  const auto m = oracle::random_model(3, 0.8, rng);
  CHECK(m.rho >= 0.8);
  CHECK(m.rho <= 1.0);
  CHECK(m.pi1 >= 0.1);
  CHECK(m.pi1 <= 0.9);
  CHECK(m.components[1].dim() == 3);
}

TEST_CASE("sampled labels respect the transition structure") {
  // rho 1 and pi1 1: every node floods, so features follow component 1
  std::mt19937_64 rng(4);
  const auto tree = oracle::random_tree(400, rng);
  auto model = params(1.0, 1.0);
  model.components[1] = make_gaussian(Eigen::VectorXd::Constant(1, 50), Eigen::MatrixXd::Identity(1, 1));
  const auto x = oracle::sample_features(model, tree, rng);
  CHECK(x.minCoeff() > 40.0);
}

}  // TEST_SUITE
