#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kws/dataset.hpp"
#include "kws/objectives.hpp"

namespace kws {

/// Confusion counts: rows are true classes, columns predictions.
class Metrics {
 public:
  explicit Metrics(std::size_t n_classes = 0);

  void add(std::size_t truth, std::size_t predicted);

  std::size_t n_classes() const { return n_; }
  std::size_t total() const { return total_; }
  std::size_t correct() const;
  /// trace / total; throws DataError when empty.
  double accuracy() const;
  std::size_t count(std::size_t truth, std::size_t predicted) const { return confusion_[truth * n_ + predicted]; }
  std::size_t class_total(std::size_t truth) const;

  /// Human-readable confusion table with class names.
  std::string table(const LabelMap& labels) const;

  bool operator==(const Metrics&) const = default;

 private:
  std::size_t n_;
  std::size_t total_ = 0;
  std::vector<std::size_t> confusion_;
};

std::size_t argmax(std::span<const float> values);

/// One training-log row.
struct StepLog {
  std::size_t step = 0;
  LossReport loss;
  double lr = 0.0;
  double wall_ms = 0.0;
  double ebn_std = 0.0;
  // MPC mask counts for the step's batch; zero for other objectives.
  std::size_t mask_chosen = 0;
  std::size_t mask_zero = 0;
  std::size_t mask_swap = 0;
  std::size_t mask_unchanged = 0;
};

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const StepLog& row);

/// Population standard deviation of all entries.
double entry_std(std::span<const float> values);

}  // namespace kws
