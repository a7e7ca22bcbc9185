#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssem/grid.hpp"

namespace ssem::metrics {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// per_class[c] treats class c as the positive class.
struct ClassReport {
  std::array<ClassMetrics, 2> per_class;
  double avg_f = 0.0;
};

struct RocCurve {
  /// (false-positive rate, true-positive rate), from (0,0) to (1,1).
  std::vector<std::pair<double, double>> points;
  double auc = 0.0;
};

/// Confusion-matrix metrics over pixels where mask is nonzero (all pixels
/// when mask is empty). Throws EmptyError when no pixel is selected.
ClassReport class_report(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
                         std::span<const std::uint8_t> mask = {});

/// ROC of `scores` against truth (1 = positive). Thresholds sweep the
/// distinct scores from high to low; tied scores move as one step, so the
/// trapezoid area equals the tie-aware Mann-Whitney statistic.
RocCurve roc_auc(std::span<const double> scores, std::span<const std::uint8_t> truth,
                 std::span<const std::uint8_t> mask = {});

/// Local Gamma index: mean of I_i * I_j over the in-bounds neighbors j,
/// with I = +1 for flood and -1 for dry.
double gamma_index(std::span<const std::uint8_t> pred, std::uint32_t width, std::uint32_t height,
                   std::uint32_t row, std::uint32_t col, Neighborhood neighborhood);

/// Pixels whose Gamma index is strictly negative.
std::size_t salt_pepper_count(std::span<const std::uint8_t> pred, std::uint32_t width,
                              std::uint32_t height, Neighborhood neighborhood);

/// method,class,precision,recall,f1 rows (plus avg_f as class "avg").
void write_report_rows(std::ostream& out, const std::string& method, const ClassReport& report);
void write_roc_csv(std::ostream& out, const RocCurve& curve);

}  // namespace ssem::metrics
