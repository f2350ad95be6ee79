#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ciss/image.hpp"

namespace ciss {

/// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;

  /// Adds every pixel whose truth is not the ignore sentinel.
  void update(const LabelMap& pred, const LabelMap& truth);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

/// IoU per class; NaN where TP + FP + FN = 0.
std::vector<double> iou_per_class(const ConfusionMatrix& cm);
/// Mean over classes with a defined IoU.
double miou(const ConfusionMatrix& cm);
double pixel_accuracy(const ConfusionMatrix& cm);

/// `class,id,iou` rows followed by `miou` and `pixel_acc` summary rows.
std::string eval_report_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

}  // namespace ciss
