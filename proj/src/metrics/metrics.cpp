#include "ciss/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ciss/errors.hpp"

namespace ciss {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < classes_; ++c) t += at(c, c);
  return t;
}

void ConfusionMatrix::update(const LabelMap& pred, const LabelMap& truth) {
  if (pred.height != truth.height || pred.width != truth.width) {
    throw ShapeError("confusion update: prediction and truth sizes differ");
  }
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    const auto t = truth.data[i];
    if (t == LabelMap::kIgnore) continue;
    const auto p = pred.data[i];
    if (t >= classes_ || p >= classes_) {
      throw DataError("class id " + std::to_string(t >= classes_ ? t : p) + " outside [0, " + std::to_string(classes_) + ")");
    }
    ++at(t, p);
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ShapeError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::vector<double> iou_per_class(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("metrics undefined on an empty confusion matrix");
  const std::size_t n = cm.classes();
  std::vector<double> iou(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < n; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const std::uint64_t denom = cm.at(c, c) + fp + fn;
    iou[c] = denom == 0 ? std::numeric_limits<double>::quiet_NaN()
                        : static_cast<double>(cm.at(c, c)) / static_cast<double>(denom);
  }
  return iou;
}

double miou(const ConfusionMatrix& cm) {
  double acc = 0.0;
  std::size_t n = 0;
  for (double v : iou_per_class(cm)) {
    if (std::isnan(v)) continue;
    acc += v;
    ++n;
  }
  return acc / static_cast<double>(n);
}

double pixel_accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("metrics undefined on an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

std::string eval_report_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os.precision(17);
  os << "class,id,iou\n";
  const auto iou = iou_per_class(cm);
  for (std::size_t c = 0; c < iou.size(); ++c) {
    os << (c < class_names.size() ? class_names[c] : "class" + std::to_string(c)) << ',' << c << ',';
    if (std::isnan(iou[c])) {
      os << "nan";
    } else {
      os << iou[c];
    }
    os << '\n';
  }
  os << "miou,," << miou(cm) << '\n';
  os << "pixel_acc,," << pixel_accuracy(cm) << '\n';
  return os.str();
}

}  // namespace ciss
