#include "ssem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "ssem/error.hpp"

namespace ssem::metrics {

namespace {

bool selected(std::span<const std::uint8_t> mask, std::size_t i) {
  return mask.empty() || mask[i] != 0;
}

void check_sizes(std::size_t a, std::size_t b, std::span<const std::uint8_t> mask) {
  if (a != b) throw DimError("prediction and truth grids differ in size");
  if (!mask.empty() && mask.size() != a) throw DimError("mask size does not match the grid");
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassReport class_report(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
                         std::span<const std::uint8_t> mask) {
  check_sizes(pred.size(), truth.size(), mask);
  // confusion[t][p]
  std::size_t confusion[2][2] = {{0, 0}, {0, 0}};
  std::size_t total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!selected(mask, i)) continue;
    ++confusion[truth[i] ? 1 : 0][pred[i] ? 1 : 0];
    ++total;
  }
  if (total == 0) throw EmptyError("no pixels selected for evaluation");

  ClassReport report;
  for (int c = 0; c < 2; ++c) {
    const int o = 1 - c;
    const std::size_t tp = confusion[c][c];
    auto& m = report.per_class[c];
    m.precision = ratio(tp, tp + confusion[o][c]);
    m.recall = ratio(tp, tp + confusion[c][o]);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  report.avg_f = 0.5 * (report.per_class[0].f1 + report.per_class[1].f1);
  return report;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truth,
                 std::span<const std::uint8_t> mask) {
  check_sizes(scores.size(), truth.size(), mask);
  std::vector<std::size_t> idx;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!selected(mask, i)) continue;
    if (!std::isfinite(scores[i])) throw DataError("non-finite score");
    idx.push_back(i);
    if (truth[i]) ++positives;
  }
  const std::size_t negatives = idx.size() - positives;
  if (positives == 0 || negatives == 0) throw EmptyError("ROC needs both classes in the mask");

  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.emplace_back(0.0, 0.0);
  // Twice the area in units of one positive-negative pair, kept integral.
  unsigned long long doubled_area = 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < idx.size();) {
    const double s = scores[idx[k]];
    std::size_t dtp = 0, dfp = 0;
    for (; k < idx.size() && scores[idx[k]] == s; ++k) (truth[idx[k]] ? dtp : dfp)++;
    doubled_area += static_cast<unsigned long long>(dfp) * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    curve.points.emplace_back(ratio(fp, negatives), ratio(tp, positives));
  }
  curve.auc = static_cast<double>(doubled_area) /
              (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return curve;
}

double gamma_index(std::span<const std::uint8_t> pred, std::uint32_t width, std::uint32_t height,
                   std::uint32_t row, std::uint32_t col, Neighborhood neighborhood) {
  if (pred.size() != std::size_t{width} * height) throw DimError("grid size mismatch");
  if (row >= height || col >= width) throw DimError("pixel outside the grid");
  const int self = pred[std::size_t{row} * width + col] ? 1 : -1;
  int sum = 0;
  int weight = 0;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      if (neighborhood == Neighborhood::Four && dr != 0 && dc != 0) continue;
      const long r = static_cast<long>(row) + dr;
      const long c = static_cast<long>(col) + dc;
      if (r < 0 || c < 0 || r >= height || c >= width) continue;
      sum += self * (pred[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)] ? 1 : -1);
      ++weight;
    }
  }
  return weight == 0 ? 0.0 : static_cast<double>(sum) / weight;
}

std::size_t salt_pepper_count(std::span<const std::uint8_t> pred, std::uint32_t width,
                              std::uint32_t height, Neighborhood neighborhood) {
  std::size_t count = 0;
  for (std::uint32_t r = 0; r < height; ++r)
    for (std::uint32_t c = 0; c < width; ++c)
      if (gamma_index(pred, width, height, r, c, neighborhood) < 0.0) ++count;
  return count;
}

void write_report_rows(std::ostream& out, const std::string& method, const ClassReport& report) {
  static constexpr const char* kNames[2] = {"dry", "flood"};
  out << std::setprecision(10);
  for (int c = 0; c < 2; ++c) {
    const auto& m = report.per_class[c];
    out << method << ',' << kNames[c] << ',' << m.precision << ',' << m.recall << ',' << m.f1 << '\n';
  }
  out << method << ",avg,,," << report.avg_f << '\n';
}

void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "fpr,tpr\n" << std::setprecision(12);
  for (const auto& [fpr, tpr] : curve.points) out << fpr << ',' << tpr << '\n';
}

}  // namespace ssem::metrics
