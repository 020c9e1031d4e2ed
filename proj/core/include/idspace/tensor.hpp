#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace idspace {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage. Vectorised reductions split head and tail by
/// address, so unaligned buffers would make sums depend on the allocation.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major n-dimensional array.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0));
  Tensor(Shape shape, const std::vector<Scalar>& data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return data_; }
  std::span<const Scalar> values() const { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  /// Row-major element access; throws ConfigError on rank or bounds mismatch.
  Scalar& at(std::initializer_list<std::size_t> index);
  Scalar at(std::initializer_list<std::size_t> index) const;

  /// Same data viewed under a different shape of equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  AlignedVector<Scalar> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace idspace
