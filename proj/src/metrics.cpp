#include "kws/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace kws {

Metrics::Metrics(std::size_t n_classes) : n_(n_classes), confusion_(n_classes * n_classes, 0) {}

void Metrics::add(std::size_t truth, std::size_t predicted) {
  if (truth >= n_ || predicted >= n_) throw DataError("metrics: class id out of range");
  ++confusion_[truth * n_ + predicted];
  ++total_;
}

std::size_t Metrics::correct() const {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n_; ++i) c += count(i, i);
  return c;
}

double Metrics::accuracy() const {
  if (total_ == 0) throw DataError("accuracy of an empty evaluation");
  return static_cast<double>(correct()) / static_cast<double>(total_);
}

std::size_t Metrics::class_total(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < n_; ++j) s += count(truth, j);
  return s;
}

std::string Metrics::table(const LabelMap& labels) const {
  std::ostringstream out;
  out << std::setw(10) << "truth\\pred";
  for (std::size_t j = 0; j < n_; ++j) out << std::setw(8) << labels.name(j).substr(0, 7);
  out << '\n';
  for (std::size_t i = 0; i < n_; ++i) {
    out << std::setw(10) << labels.name(i).substr(0, 9);
    for (std::size_t j = 0; j < n_; ++j) out << std::setw(8) << count(i, j);
    out << '\n';
  }
  return out.str();
}

std::size_t argmax(std::span<const float> values) {
  if (values.empty()) throw ShapeError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void write_log_header(std::ostream& out) {
  out << "step\tl_ce\tl_sim\tl_x\tl_x_aug\tl_ul\tlr\twall_ms\tebn_std\tmask_chosen\tmask_zero\tmask_swap\tmask_"
         "unchanged\n";
}

void write_log_row(std::ostream& out, const StepLog& r) {
  out << r.step << '\t' << std::setprecision(9) << r.loss.l_ce << '\t' << r.loss.l_sim << '\t' << r.loss.l_x << '\t'
      << r.loss.l_x_aug << '\t' << r.loss.l_ul << '\t' << r.lr << '\t' << std::setprecision(6) << r.wall_ms << '\t'
      << r.ebn_std << '\t' << r.mask_chosen << '\t' << r.mask_zero << '\t' << r.mask_swap << '\t' << r.mask_unchanged
      << '\n';
}

double entry_std(std::span<const float> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (float v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (float v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

}  // namespace kws
