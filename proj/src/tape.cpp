#include "kws/tape.hpp"

namespace kws {

template <typename T>
void BasicTape<T>::backward(BasicTensor<T> loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  for (auto& rec : records_) {
    rec.output.zero_grad();
    for (auto& in : rec.inputs) {
      if (in.requires_grad() && !in.has_grad()) in.zero_grad();
    }
  }
  loss.mutable_grad()[0] = T{1};
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->backward(it->output.grad());
  }
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace kws
