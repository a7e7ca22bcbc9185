#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "ssem/cli.hpp"
#include "ssem/experiment.hpp"
#include "ssem/grid.hpp"

using namespace ssem;
using ssem::test::TempDir;
using ssem::test::slurp;
using ssem::test::spit;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "ssem");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

const char* kSpec =
    "# small obstacle scene\n"
    "width = 32\n"
    "height = 32\n"
    "obstacle_fraction = 0.2\n"
    "noise_sigma = 0.02\n"
    "label_ratio = 0.02\n"
    "bump_period = 16\n"
    "rng_seed = 5\n";

// Writes a spec, synthesizes scene.ssg and labels.txt into `dir`.
void synth(const TempDir& dir) {
  spit(dir / "spec.txt", kSpec);
  const auto r = run({"synth", "--spec", (dir / "spec.txt").string(), "--out-scene",
                      (dir / "scene.ssg").string(), "--out-labels", (dir / "labels.txt").string()});
  REQUIRE(r.code == kExitOk);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth prints a summary and is deterministic") {
  TempDir dir;
  spit(dir / "spec.txt", kSpec);
  const auto a = run({"synth", "--spec", (dir / "spec.txt").string(), "--out-scene", (dir / "a.ssg").string(),
                      "--out-labels", (dir / "a.txt").string()});
  const auto b = run({"synth", "--spec", (dir / "spec.txt").string(), "--out-scene", (dir / "b.ssg").string(),
                      "--out-labels", (dir / "b.txt").string()});
  REQUIRE(a.code == 0);
  CHECK(a.out.find("scene 32x32, 3 feature channels + elevation") != std::string::npos);
  CHECK(a.out.find("flood fraction 0.5") != std::string::npos);
  CHECK(a.out.find("labels 21 (10 dry, 11 flood)") != std::string::npos);
  CHECK(a.out == b.out);
  CHECK(slurp(dir / "a.ssg") == slurp(dir / "b.ssg"));
  CHECK(slurp(dir / "a.txt") == slurp(dir / "b.txt"));
  const auto scene = load_scene(dir / "a.ssg");
  CHECK(scene.width == 32);
  CHECK(scene.truth.has_value());
}

TEST_CASE("train writes a model and a trace for each method") {
  TempDir dir;
  synth(dir);
  for (const std::string method : {"gmm", "gmm-elev", "hmt"}) {
    const auto out = dir / ("train_" + method);
    const auto r = run({"train", "--method", method, "--scene", (dir / "scene.ssg").string(), "--labels",
                        (dir / "labels.txt").string(), "--out", out.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind(method + ": ", 0) == 0);
    const auto model = load_model(out / "model.txt");
    CHECK(to_string(model.method) == method);
    const auto trace = lines(slurp(out / "trace.csv"));
    REQUIRE(trace.size() >= 2);
    const auto header = fields(trace[0]);
    const auto first = fields(trace[1]);
    CHECK(first[0] == "0");
    if (method == "hmt") {
      CHECK(trace[0].rfind("iter,rho,pi1,mu0.0", 0) == 0);
      CHECK(model.rho.has_value());
      CHECK(std::stod(first[1]) == 0.99);
      CHECK(std::stod(first[2]) == 0.5);
      CHECK(header.size() == 3 + 4 * 3 + 2);
    } else {
      CHECK(trace[0].rfind("iter,pi1,mu0.0", 0) == 0);
      CHECK_FALSE(model.rho.has_value());
      const std::size_t m = method == "gmm" ? 3 : 4;
      CHECK(header.size() == 2 + 4 * m + 2);
    }
    CHECK(header.back() == "maxrel");
  }
}

TEST_CASE("predict then eval: perfect and inverted maps") {
  TempDir dir;
  synth(dir);
  REQUIRE(run({"train", "--method", "hmt", "--scene", (dir / "scene.ssg").string(), "--labels",
               (dir / "labels.txt").string(), "--out", (dir / "m").string()})
              .code == 0);
  const auto p = run({"predict", "--model", (dir / "m" / "model.txt").string(), "--scene",
                      (dir / "scene.ssg").string(), "--out", (dir / "p").string()});
  REQUIRE(p.code == 0);
  CHECK(p.out.find("flood pixels of 1024") != std::string::npos);

  const auto scene = load_scene(dir / "scene.ssg");
  std::vector<double> truth(scene.truth->begin(), scene.truth->end()), inverted(truth);
  for (auto& v : inverted) v = 1.0 - v;
  save_scene(single_channel(32, 32, truth), dir / "perfect.ssg");
  save_scene(single_channel(32, 32, inverted), dir / "inverted.ssg");

  const auto good = run({"eval", "--pred", (dir / "perfect.ssg").string(), "--score",
                         (dir / "perfect.ssg").string(), "--truth", (dir / "scene.ssg").string(), "--method",
                         "oracle", "--out", (dir / "e1").string()});
  REQUIRE(good.code == 0);
  const auto rows = lines(slurp(dir / "e1" / "report.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "method,class,precision,recall,f1,avg_f,auc,salt_pepper_count,note");
  CHECK(fields(rows[1])[5] == "1");
  CHECK(fields(rows[1])[6] == "1");
  CHECK(lines(slurp(dir / "e1" / "roc.csv"))[0] == "fpr,tpr");
  CHECK(good.out == slurp(dir / "e1" / "report.csv"));

  const auto bad = run({"eval", "--pred", (dir / "inverted.ssg").string(), "--score",
                        (dir / "inverted.ssg").string(), "--truth", (dir / "scene.ssg").string(), "--out",
                        (dir / "e2").string()});
  REQUIRE(bad.code == 0);
  CHECK(fields(lines(slurp(dir / "e2" / "report.csv"))[1])[5] == "0");
  CHECK(fields(lines(slurp(dir / "e2" / "report.csv"))[1])[6] == "0");

  const auto real = run({"eval", "--pred", (dir / "p" / "classes.ssg").string(), "--score",
                         (dir / "p" / "scores.ssg").string(), "--truth", (dir / "scene.ssg").string(), "--out",
                         (dir / "e3").string()});
  CHECK(real.code == 0);

  // an empty mask selects nothing
  save_scene(single_channel(32, 32, std::vector<double>(1024, 0.0)), dir / "mask.ssg");
  const auto empty = run({"eval", "--pred", (dir / "perfect.ssg").string(), "--score",
                          (dir / "perfect.ssg").string(), "--truth", (dir / "scene.ssg").string(), "--mask",
                          (dir / "mask.ssg").string(), "--out", (dir / "e4").string()});
  CHECK(empty.code == kExitFailure);
}

TEST_CASE("compare writes one block per method") {
  TempDir dir;
  synth(dir);
  const auto r = run({"compare", "--scene", (dir / "scene.ssg").string(), "--labels",
                      (dir / "labels.txt").string(), "--out", (dir / "c").string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(dir / "c" / "compare.csv"));
  REQUIRE(rows.size() == 7);
  CHECK(fields(rows[1])[0] == "gmm");
  CHECK(fields(rows[3])[0] == "gmm-elev");
  CHECK(fields(rows[5])[0] == "hmt");
  CHECK(fields(rows[6])[1] == "flood");
  for (const auto* name : {"gmm", "gmm-elev", "hmt"}) {
    CHECK(std::filesystem::exists(dir / "c" / (std::string("roc_") + name + ".csv")));
    CHECK(std::filesystem::exists(dir / "c" / (std::string("trace_") + name + ".csv")));
  }
}

TEST_CASE("separable scene: every method reaches avg F 0.99") {
  const auto g = generate_scene(ssem::test::separable_spec(48));
  for (const auto& o : compare(g.scene, g.labels, {})) {
    REQUIRE(o.ok);
    CHECK(o.evaluation.report.avg_f >= 0.99);
  }
}

TEST_CASE("compare equals train, predict and eval run separately") {
  auto spec = ssem::test::separable_spec(32);
  spec.obstacle_fraction = 0.3;
  spec.noise_sigma = 0.02;
  const auto g = generate_scene(spec);
  const auto outcomes = compare(g.scene, g.labels, {});
  for (const auto& o : outcomes) {
    REQUIRE(o.ok);
    RunConfig cfg;
    cfg.method = o.method;
    const auto trained = train(g.scene, g.labels, cfg);
    const auto pred = predict(trained.model, g.scene);
    const auto eval = evaluate(g.scene, pred.classes, pred.scores, *g.scene.truth, {}, Neighborhood::Eight);
    CHECK(pred.classes == o.prediction.classes);
    CHECK(pred.scores == o.prediction.scores);
    CHECK(eval.report.avg_f == o.evaluation.report.avg_f);
    CHECK(eval.roc.auc == o.evaluation.roc.auc);
    CHECK(eval.salt_pepper == o.evaluation.salt_pepper);
  }
}

TEST_CASE("compare reports failing methods and exits 1") {
  TempDir dir;
  synth(dir);
  spit(dir / "few.txt", "0,0,0\n31,31,1\n");
  const auto r = run({"compare", "--scene", (dir / "scene.ssg").string(), "--labels",
                      (dir / "few.txt").string(), "--out", (dir / "c").string()});
  CHECK(r.code == kExitFailure);
  const auto rows = lines(slurp(dir / "c" / "compare.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(fields(rows[1])[1] == "error");
  CHECK(rows[1].find("labels") != std::string::npos);
}

TEST_CASE("sweep-labels writes a NaN row where labels are too few") {
  TempDir dir;
  synth(dir);
  const auto r = run({"sweep-labels", "--scene", (dir / "scene.ssg").string(), "--ratios", "0.001,0.05",
                      "--seeds", "1,2", "--out", (dir / "sweep.csv").string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(dir / "sweep.csv"));
  REQUIRE(rows.size() == 1 + 2 * 2 * 3);
  CHECK(rows[0] == "method,ratio,seed,avg_f,reason");
  std::size_t nan_rows = 0, finite_rows = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = fields(rows[i]);
    const double v = std::stod(f[3]);
    if (std::isnan(v)) {
      ++nan_rows;
      CHECK(std::stod(f[1]) == 0.001);
      CHECK(f.size() == 5);
    } else {
      ++finite_rows;
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(nan_rows == 6);
  CHECK(finite_rows == 6);
  CHECK(run({"sweep-labels", "--scene", (dir / "scene.ssg").string(), "--ratios", "a,b", "--out",
             (dir / "x.csv").string()})
            .code == kExitUsage);
}

TEST_CASE("verify passes and its rho check catches a wrong update") {
  const auto r = run({"verify", "--trees", "40"});
  CHECK(r.code == kExitOk);
  CHECK(lines(r.out).size() == 6);
  for (const auto& l : lines(r.out)) CHECK(l.rfind("PASS ", 0) == 0);

  VerifyOptions opt;
  opt.trees = 40;
  opt.rho_estimator = [](const hmt::TreePosteriors& post, const hmt::FlowTree& tree) -> std::optional<double> {
    // fraction of flooded children among all children: ignores the parent
    double flooded = 0, total = 0;
    for (std::size_t i = 0; i < tree.size(); ++i) {
      if (tree.is_root(i)) continue;
      flooded += post.marginal[i];
      total += 1;
    }
    return total > 0 ? std::optional<double>(flooded / total) : std::nullopt;
  };
  bool rho_failed = false;
  for (const auto& c : verify(opt))
    if (c.name == "hmt_rho_update_is_mle") rho_failed = !c.passed;
  CHECK(rho_failed);
}

TEST_CASE("usage and data errors map to exit codes") {
  TempDir dir;
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"train", "--scene", "x"}).code == kExitUsage);
  CHECK(run({"train", "--method", "svm", "--scene", "x", "--out", "y"}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);

  const auto missing = run({"train", "--scene", (dir / "none.ssg").string(), "--ratio", "0.1", "--out",
                            (dir / "o").string()});
  CHECK(missing.code == kExitData);
  CHECK(missing.err.rfind("error: ", 0) == 0);

  spit(dir / "junk.ssg", "not a scene");
  CHECK(run({"predict", "--model", (dir / "m.txt").string(), "--scene", (dir / "junk.ssg").string(), "--out",
             (dir / "o").string()})
            .code == kExitData);

  synth(dir);
  CHECK(run({"train", "--scene", (dir / "scene.ssg").string(), "--out", (dir / "o").string()}).code ==
        kExitData);
  spit(dir / "bad_spec.txt", "width = 10\nwater_quantile = 2\n");
  CHECK(run({"synth", "--spec", (dir / "bad_spec.txt").string(), "--out-scene", (dir / "s.ssg").string(),
             "--out-labels", (dir / "l.txt").string()})
            .code == kExitData);
}

TEST_CASE("config file values yield to explicit flags") {
  TempDir dir;
  synth(dir);
  spit(dir / "cfg.txt", "# fixed iteration count\ntol = 0\nmax_iter = 1\nmethod = gmm\n");
  const auto base = std::vector<std::string>{"train", "--config", (dir / "cfg.txt").string(), "--scene",
                                             (dir / "scene.ssg").string(), "--labels",
                                             (dir / "labels.txt").string()};
  auto a = base;
  a.insert(a.end(), {"--out", (dir / "a").string()});
  REQUIRE(run(a).code == 0);
  CHECK(lines(slurp(dir / "a" / "trace.csv")).size() == 3);
  CHECK(load_model(dir / "a" / "model.txt").method == Method::Gmm);

  auto b = base;
  b.insert(b.end(), {"--max-iter", "3", "--method", "hmt", "--out", (dir / "b").string()});
  REQUIRE(run(b).code == 0);
  CHECK(lines(slurp(dir / "b" / "trace.csv")).size() == 5);
  CHECK(load_model(dir / "b" / "model.txt").method == Method::Hmt);

  spit(dir / "bad.txt", "speed = 3\n");
  CHECK(run({"train", "--config", (dir / "bad.txt").string(), "--scene", (dir / "scene.ssg").string(),
             "--ratio", "0.05", "--out", (dir / "c").string()})
            .code == kExitData);
}

TEST_CASE("ratio sampling replaces a label file") {
  TempDir dir;
  synth(dir);
  const auto r = run({"train", "--method", "gmm", "--scene", (dir / "scene.ssg").string(), "--ratio", "0.05",
                      "--seed", "3", "--out", (dir / "o").string()});
  CHECK(r.code == 0);
}

}  // TEST_SUITE
