#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace licaf {

inline std::string shape_str(const std::vector<long>& dims) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << "]";
  return os.str();
}

/// Dense row-major n-d array with value semantics. All layer code in this
/// library passes these around by value or reference; there is no view
/// aliasing, a Tensor owns its buffer. Buffers are kept at Eigen's maximum
/// packet alignment so vectorized kernels split head/body/tail identically
/// for every allocation — a prerequisite for bit-reproducible training.
template <class S>
class Tensor {
 public:
  using Scalar = S;
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() = default;
  explicit Tensor(std::vector<long> dims) : shape_(std::move(dims)) {
    long n = 1;
    for (long d : shape_) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dim in " + shape_str(shape_));
      n *= d;
    }
    data_.assign(static_cast<size_t>(n), S(0));
  }
  Tensor(std::initializer_list<long> dims) : Tensor(std::vector<long>(dims)) {}

  static Tensor zeros(std::vector<long> dims) { return Tensor(std::move(dims)); }
  static Tensor full(std::vector<long> dims, S v) {
    Tensor t(std::move(dims));
    t.fill(v);
    return t;
  }

  int ndim() const { return static_cast<int>(shape_.size()); }
  const std::vector<long>& shape() const { return shape_; }
  long dim(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
  long numel() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  S& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  const S& operator[](long i) const { return data_[static_cast<size_t>(i)]; }

  template <class... Ix>
  S& at(Ix... ix) {
    return data_[offset(ix...)];
  }
  template <class... Ix>
  const S& at(Ix... ix) const {
    return data_[offset(ix...)];
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(S(0)); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// Reinterpret the flat buffer as a rows x cols row-major matrix.
  Eigen::Map<RowMat> mat(long rows, long cols) {
    check_mat(rows, cols);
    return Eigen::Map<RowMat>(data(), rows, cols);
  }
  Eigen::Map<const RowMat> mat(long rows, long cols) const {
    check_mat(rows, cols);
    return Eigen::Map<const RowMat>(data(), rows, cols);
  }

  template <class S2>
  Tensor<S2> cast() const {
    Tensor<S2> out(shape_);
    for (long i = 0; i < numel(); ++i) out[i] = static_cast<S2>(data_[static_cast<size_t>(i)]);
    return out;
  }

  std::string shape_string() const { return shape_str(shape_); }

 private:
  template <class... Ix>
  size_t offset(Ix... ix) const {
    constexpr int n = sizeof...(Ix);
    const long idx[n] = {static_cast<long>(ix)...};
    long off = 0;
    for (int a = 0; a < n; ++a) off = off * shape_[static_cast<size_t>(a)] + idx[a];
    return static_cast<size_t>(off);
  }
  void check_mat(long rows, long cols) const {
    if (rows * cols != numel())
      throw std::invalid_argument("Tensor::mat: " + std::to_string(rows) + "x" + std::to_string(cols) +
                                  " does not cover " + shape_string());
  }

  std::vector<long> shape_;
  std::vector<S, Eigen::aligned_allocator<S>> data_;
};

template <class S>
bool bitwise_equal(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) return false;
  for (long i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

template <class S>
S max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  S m = 0;
  for (long i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class S>
bool all_finite(const Tensor<S>& a) {
  for (long i = 0; i < a.numel(); ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

inline void check_axis(long got, long want, const char* op, const char* axis) {
  if (got != want)
    throw std::invalid_argument(std::string(op) + ": axis " + axis + " is " + std::to_string(got) +
                                ", expected " + std::to_string(want));
}

}  // namespace licaf
