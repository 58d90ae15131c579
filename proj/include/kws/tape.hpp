#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kws/tensor.hpp"

namespace kws {

/// Execution-ordered record of differentiable primitives.
///
/// Primitives record themselves on the thread's active tape (see TapeScope)
/// when at least one input requires a gradient. A tape and the tensors on it
/// belong to one thread at a time.
template <typename T>
class BasicTape {
 public:
  using BackwardFn = std::function<void(std::span<const T> output_grad)>;

  struct Record {
    std::string op;
    std::vector<BasicTensor<T>> inputs;
    BasicTensor<T> output;
    BackwardFn backward;
  };

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  void record(std::string op, std::vector<BasicTensor<T>> inputs, BasicTensor<T> output,
              BackwardFn backward) {
    records_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(backward)});
  }

  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  /// Populates grad() of every requires_grad tensor reachable from the tape.
  /// Leaf gradients accumulate onto whatever the buffer holds; intermediate
  /// gradients are reset. Leaves on the tape that the loss does not reach end
  /// with a zero (allocated) gradient.
  void backward(BasicTensor<T> loss);

  static BasicTape* active() { return active_; }

 private:
  template <typename>
  friend class TapeScope;

  std::vector<Record> records_;
  static inline thread_local BasicTape* active_ = nullptr;
};

/// Makes a tape the active recording target for the current thread.
/// A null tape suspends recording.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(BasicTape<T>* tape) : previous_(BasicTape<T>::active_) {
    BasicTape<T>::active_ = tape;
  }
  explicit TapeScope(BasicTape<T>& tape) : TapeScope(&tape) {}
  ~TapeScope() { BasicTape<T>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  BasicTape<T>* previous_;
};

template <typename T>
class NoTapeScope : public TapeScope<T> {
 public:
  NoTapeScope() : TapeScope<T>(static_cast<BasicTape<T>*>(nullptr)) {}
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

}  // namespace kws
