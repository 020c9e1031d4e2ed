#include "idspace/tensor.hpp"

#include <cmath>
#include <sstream>

#include "idspace/errors.hpp"

namespace idspace {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ConfigError("tensor shape " + shape_string(shape) + " has a zero dimension");
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, const std::vector<Scalar>& data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  check_shape(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw ConfigError("tensor shape " + shape_string(shape_) + " does not match " +
                      std::to_string(data_.size()) + " values");
  }
}

template <typename Scalar>
std::size_t Tensor<Scalar>::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw ConfigError("tensor index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw ConfigError("tensor index out of bounds");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

template <typename Scalar>
Scalar& Tensor<Scalar>::at(std::initializer_list<std::size_t> index) {
  return data_[offset(index)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

template <typename Scalar>
bool Tensor<Scalar>::all_finite() const {
  for (Scalar v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace idspace
