#pragma once

#include <cstddef>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssdd/masks.hpp"

namespace ssdd {

/// Dataset-level IoU. Classes whose union is empty have no IoU and are left
/// out of the mean.
struct IoUReport {
  std::vector<std::optional<double>> per_class_iou;  // background + C classes
  std::vector<std::size_t> intersection;
  std::vector<std::size_t> union_;
  double mean_iou = 0.0;
};

inline IoUReport iou_report(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts,
                            std::size_t class_count) {
  if (preds.size() != gts.size()) {
    throw InvalidInput("iou_report: " + std::to_string(preds.size()) + " predictions vs " +
                       std::to_string(gts.size()) + " ground-truth masks");
  }
  const std::size_t k = class_count + 1;
  IoUReport r;
  r.intersection.assign(k, 0);
  r.union_.assign(k, 0);
  for (std::size_t n = 0; n < preds.size(); ++n) {
    require_same_dims(preds[n], gts[n], "iou_report");
    for (std::size_t u = 0; u < gts[n].size(); ++u) {
      const ClassId g = gts[n][u];
      if (g == kIgnoreLabel) continue;
      const ClassId p = preds[n][u];
      if (p == g) {
        if (g < k) {
          ++r.intersection[g];
          ++r.union_[g];
        }
        continue;
      }
      if (g < k) ++r.union_[g];
      if (p < k) ++r.union_[p];
    }
  }
  r.per_class_iou.resize(k);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (r.union_[c] == 0) continue;
    const double iou = static_cast<double>(r.intersection[c]) / static_cast<double>(r.union_[c]);
    r.per_class_iou[c] = iou;
    sum += iou;
    ++defined;
  }
  r.mean_iou = defined ? sum / static_cast<double>(defined) : 0.0;
  return r;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// CSV with header `class,iou,intersection,union` and a final `mean,<miou>,,` row.
inline std::string report_csv(const IoUReport& r) {
  std::ostringstream os;
  os << "class,iou,intersection,union\n";
  for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) {
    os << c << ',';
    if (r.per_class_iou[c]) os << format_number(*r.per_class_iou[c]);
    os << ',' << r.intersection[c] << ',' << r.union_[c] << '\n';
  }
  os << "mean," << format_number(r.mean_iou) << ",,\n";
  return os.str();
}

/// Aligned text table: one row per class, IoU in percent.
inline std::string report_table(const IoUReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "class" << std::right << std::setw(9) << "IoU%"
     << std::setw(12) << "inter" << std::setw(12) << "union" << '\n';
  for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) {
    os << std::left << std::setw(8) << (c == 0 ? std::string("bg") : std::to_string(c)) << std::right
       << std::setw(9);
    if (r.per_class_iou[c]) {
      os << std::fixed << std::setprecision(1) << 100.0 * *r.per_class_iou[c];
    } else {
      os << "-";
    }
    os << std::setw(12) << r.intersection[c] << std::setw(12) << r.union_[c] << '\n';
  }
  os << std::left << std::setw(8) << "mIoU" << std::right << std::setw(9) << std::fixed
     << std::setprecision(1) << 100.0 * r.mean_iou << '\n';
  return os.str();
}

}  // namespace ssdd
