#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "yoloe/error.hpp"
#include "yoloe/real.hpp"

namespace yoloe::inline YOLOE_PRECISION_NS {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

class GradTape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until something flows into it
  bool requires_grad = false;
  // Set when an op recorded on a tape produced this tensor.
  const GradTape* tape = nullptr;
  std::int64_t node = -1;

  bool is_leaf() const { return tape == nullptr; }
  std::vector<real>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), real(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor. Copies share the underlying buffer; use clone() for
/// an independent copy. Values are treated as immutable once an op produced
/// them, except parameters which optimizers update in place.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<real> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  /// Extent of an axis; negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const real> data() const;
  std::span<real> mutable_data();
  real item() const;
  real at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const real> grad() const;
  std::span<real> mutable_grad();
  void zero_grad();

  /// Same values, no history, independent buffer.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_tensor(std::shared_ptr<detail::TensorImpl>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

Tensor make_tensor(std::shared_ptr<detail::TensorImpl> impl);

/// Throws NumericError naming `where` if any value is NaN or infinite.
void check_finite(std::span<const real> values, const std::string& where);

bool bit_equal(const Tensor& a, const Tensor& b);
real max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace yoloe::inline YOLOE_PRECISION_NS
