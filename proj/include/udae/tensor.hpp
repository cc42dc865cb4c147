#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace udae {

struct Shape4 {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t elems() const { return n * c * h * w; }

  bool operator==(const Shape4 &o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape4 &o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

// Rank-4 NCHW tensor, row-major contiguous. float is the storage/compute
// type everywhere in the pipeline; the double instantiation exists so the
// finite-difference checker can evaluate the same code in 64-bit. The
// optional grad buffer mirrors data element-for-element when present.
template <typename T> class TensorT {
  static_assert(std::is_floating_point_v<T>);

public:
  TensorT() = default;

  TensorT(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w)
      : shape_{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw std::invalid_argument("Tensor: negative dimension in " + shape_.str());
    data_.assign(static_cast<std::size_t>(shape_.elems()), T(0));
  }

  explicit TensorT(const Shape4 &s) : TensorT(s.n, s.c, s.h, s.w) {}

  static TensorT zeros(const Shape4 &s) { return TensorT(s); }

  static TensorT full(const Shape4 &s, T v) {
    TensorT t(s);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static TensorT from_data(const Shape4 &s, std::vector<T> values) {
    if (static_cast<std::int64_t>(values.size()) != s.elems())
      throw std::invalid_argument("Tensor::from_data: " + std::to_string(values.size()) +
                                  " values for shape " + s.str());
    TensorT t;
    t.shape_ = s;
    t.data_ = std::move(values);
    return t;
  }

  const Shape4 &shape() const { return shape_; }
  std::int64_t batch() const { return shape_.n; }
  std::int64_t channels() const { return shape_.c; }
  std::int64_t height() const { return shape_.h; }
  std::int64_t width() const { return shape_.w; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T *data() { return data_.data(); }
  const T *data() const { return data_.data(); }
  std::vector<T> &vec() { return data_; }
  const std::vector<T> &vec() const { return data_; }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  T &at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return data_[static_cast<std::size_t>(index(n, c, y, x))];
  }
  T at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[static_cast<std::size_t>(index(n, c, y, x))];
  }

  // Pointer to the start of channel c of batch n.
  T *plane(std::int64_t n, std::int64_t c) { return data_.data() + index(n, c, 0, 0); }
  const T *plane(std::int64_t n, std::int64_t c) const {
    return data_.data() + index(n, c, 0, 0);
  }

  bool has_grad() const { return grad_.has_value(); }

  std::vector<T> &grad() {
    if (!grad_)
      grad_.emplace(data_.size(), T(0));
    return *grad_;
  }
  const std::vector<T> &grad() const {
    if (!grad_)
      throw std::logic_error("Tensor::grad: no gradient buffer present");
    return *grad_;
  }

  void zero_grad() {
    if (grad_)
      std::fill(grad_->begin(), grad_->end(), T(0));
  }
  void drop_grad() { grad_.reset(); }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v))
        return false;
    return true;
  }

  template <typename U> TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return TensorT<U>::from_data(shape_, std::move(out));
  }

private:
  Shape4 shape_{};
  std::vector<T> data_;
  std::optional<std::vector<T>> grad_;
};

using Tensor = TensorT<float>;

template <typename T>
void check_same_shape(const TensorT<T> &a, const TensorT<T> &b, const char *op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch, " + a.shape().str() +
                                " vs " + b.shape().str());
}

} // namespace udae
