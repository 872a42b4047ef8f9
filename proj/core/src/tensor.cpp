#include "fpage/tensor.hpp"

#include "fpage/errors.hpp"

#include <sstream>

namespace fpage {

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "(n=" << batch << ", h=" << height << ", w=" << width << ", c=" << channels() << ")";
  return os.str();
}

Tensor stack(const Tensor* const* samples, int count) {
  if (count <= 0) throw InvalidArgument("stack: no samples");
  const Tensor& first = *samples[0];
  Tensor out(count, first.height, first.width, first.channels());
  for (int n = 0; n < count; ++n) {
    const Tensor& s = *samples[n];
    if (s.batch != 1 || s.height != first.height || s.width != first.width || s.channels() != first.channels()) {
      throw InvalidArgument("stack: sample " + std::to_string(n) + " has shape " + s.shape_string() +
                            ", expected " + first.shape_string());
    }
    out.sample(n) = s.data;
  }
  return out;
}

}  // namespace fpage
