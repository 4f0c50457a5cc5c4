#include "icd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "icd/error.hpp"

namespace icd {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_to_string(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on && grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  if (!on) grad_.clear();
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_to_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, Padding padding) {
  if (x.rank() != 2 || w.rank() != 3 || bias.rank() != 1 || w.dim(1) != x.dim(1) || w.dim(2) != bias.dim(0)) {
    throw DimensionError("conv1d shape mismatch: x " + shape_to_string(x.shape()) + ", w " +
                         shape_to_string(w.shape()) + ", bias " + shape_to_string(bias.shape()));
  }
  const std::size_t len = x.dim(0), cin = x.dim(1), k = w.dim(0), cout = w.dim(2);
  std::size_t pad = 0;
  if (padding == Padding::kSame) {
    if (k % 2 == 0) throw DimensionError("same padding needs an odd kernel, got k=" + std::to_string(k));
    pad = (k - 1) / 2;
  }
  if (k > len + 2 * pad) {
    throw DimensionError("kernel of length " + std::to_string(k) + " exceeds padded input of length " +
                         std::to_string(len + 2 * pad));
  }
  const std::size_t out_len = len + 2 * pad - k + 1;
  Tensor out({out_len, cout});
  const double* px = x.data().data();
  const double* pw = w.data().data();
  const double* pb = bias.data().data();
  double* po = out.data().data();
  for (std::size_t t = 0; t < out_len; ++t) {
    double* orow = po + t * cout;
    std::copy(pb, pb + cout, orow);
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      const double* xrow = px + static_cast<std::size_t>(src) * cin;
      const double* wj = pw + j * cin * cout;
      for (std::size_t c = 0; c < cin; ++c) {
        const double xv = xrow[c];
        if (xv == 0.0) continue;
        const double* wrow = wj + c * cout;
        for (std::size_t o = 0; o < cout; ++o) orow[o] += xv * wrow[o];
      }
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out(x.shape());
  const std::size_t c = x.rank() == 1 ? x.size() : x.shape().back();
  const std::size_t r = x.size() / c;
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.data().data() + i * c;
    double* o = out.data().data() + i * c;
    const double mx = *std::max_element(in, in + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= s;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add shape mismatch: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t c = x.rank() == 1 ? x.size() : x.shape().back();
  if (bias.rank() != 1 || bias.dim(0) != c) {
    throw DimensionError("bias shape " + shape_to_string(bias.shape()) + " does not match " +
                         shape_to_string(x.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % c];
  return out;
}

double sigmoid(double x) {
  // Clamped so the result stays strictly inside (0, 1) in double precision.
  const double z = std::clamp(x, -36.0, 36.0);
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace kernels

}  // namespace icd
