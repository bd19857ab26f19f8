#pragma once

// Dense rank-4 (batch, channel, height, width) tensors with reverse-mode
// automatic differentiation. Primitives record backward closures on a
// GradientTape; replaying the tape in reverse accumulates gradients into
// every requires_grad leaf reachable from the loss.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "msfs/common.hpp"

namespace msfs {

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // empty until first accumulation

  explicit TensorImpl(Shape s, bool rg = false)
      : shape(s), data(static_cast<std::size_t>(s.numel()), T(0)), requires_grad(rg) {}

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x;
  }
  T& at(int n, int c, int y, int x) { return data[index(n, c, y, x)]; }
  T at(int n, int c, int y, int x) const { return data[index(n, c, y, x)]; }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  }
  bool scalar() const { return shape.numel() == 1; }
};

template <typename T>
using Tensor = std::shared_ptr<TensorImpl<T>>;

template <typename T>
Tensor<T> make_tensor(Shape s, bool requires_grad = false) {
  return std::make_shared<TensorImpl<T>>(s, requires_grad);
}

template <typename T>
Tensor<T> full(Shape s, T value, bool requires_grad = false) {
  auto t = make_tensor<T>(s, requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

template <typename T>
Tensor<T> scalar_tensor(T value, bool requires_grad = false) {
  return full<T>({1, 1, 1, 1}, value, requires_grad);
}

template <typename T, typename Rng>
Tensor<T> uniform_tensor(Shape s, Rng& rng, T lo, T hi, bool requires_grad = false) {
  auto t = make_tensor<T>(s, requires_grad);
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t->data) v = static_cast<T>(dist(rng));
  return t;
}

// Copy of the values with no gradient link to the source.
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  auto t = make_tensor<T>(x->shape, false);
  t->data = x->data;
  return t;
}

template <typename T>
class Tape {
 public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
  bool empty() const { return steps_.empty(); }
  std::size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays recorded ops in reverse.
  // The tape is cleared afterwards; a second call without a new forward
  // pass is a contract violation.
  void backward(const Tensor<T>& loss) {
    if (!loss->scalar()) throw ContractError("backward: loss must be a scalar tensor");
    if (steps_.empty()) throw ContractError("backward: tape is empty (already consumed?)");
    loss->ensure_grad();
    loss->grad[0] += T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    steps_.clear();
  }

 private:
  std::vector<std::function<void()>> steps_;
};

namespace detail {

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a->shape != b->shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + a->shape.str() + " vs " +
                     b->shape.str());
}

template <typename T>
inline void mark_output(Tape<T>* tape, const Tensor<T>& out) {
  if (tape) out->requires_grad = true;
}

template <typename T>
inline bool wants_grad(const Tensor<T>& t) {
  return t->requires_grad;
}

}  // namespace detail

// --- convolution -----------------------------------------------------------

// Direct 2-D convolution (cross-correlation form), zero padding.
// w: (c_out, c_in, k, k), b: (1, c_out, 1, 1).
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int padding) {
  const Shape xs = x->shape, ws = w->shape;
  if (ws.h != ws.w || ws.h % 2 == 0)
    throw ShapeError("conv2d: kernel must be square with odd size, got " + ws.str());
  if (ws.c != xs.c)
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                     std::to_string(ws.c));
  if (b->shape.numel() != ws.n)
    throw ShapeError("conv2d: bias size " + std::to_string(b->shape.numel()) +
                     " != c_out " + std::to_string(ws.n));
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
  const int k = ws.h;
  const int out_h = (xs.h + 2 * padding - k) / stride + 1;
  const int out_w = (xs.w + 2 * padding - k) / stride + 1;
  if (out_h < 1 || out_w < 1)
    throw ShapeError("conv2d: output would be empty for input " + xs.str());

  auto out = make_tensor<T>({xs.n, ws.n, out_h, out_w});

  const T* xd = x->data.data();
  const T* wd = w->data.data();
  const T* bd = b->data.data();
  T* od = out->data.data();

  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < ws.n; ++co) {
      T* oplane = od + (static_cast<std::size_t>(n) * ws.n + co) * out_h * out_w;
      std::fill(oplane, oplane + static_cast<std::size_t>(out_h) * out_w, bd[co]);
      for (int ci = 0; ci < xs.c; ++ci) {
        const T* xplane = xd + (static_cast<std::size_t>(n) * xs.c + ci) * xs.h * xs.w;
        const T* wplane = wd + (static_cast<std::size_t>(co) * xs.c + ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const T wv = wplane[ky * k + kx];
            if (wv == T(0)) continue;
            for (int oy = 0; oy < out_h; ++oy) {
              const int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= xs.h) continue;
              const T* xrow = xplane + static_cast<std::size_t>(iy) * xs.w;
              T* orow = oplane + static_cast<std::size_t>(oy) * out_w;
              // valid ox range so that ix = ox*stride - padding + kx is in bounds
              int ox_lo = 0, ox_hi = out_w - 1;
              while (ox_lo <= ox_hi && ox_lo * stride - padding + kx < 0) ++ox_lo;
              while (ox_hi >= ox_lo && ox_hi * stride - padding + kx >= xs.w) --ox_hi;
              const T* xr = xrow - padding + kx;
              if (stride == 1) {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * xr[ox];
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * xr[ox * stride];
              }
            }
          }
        }
      }
    }
  }

  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, w, b, out, stride, padding, k]() {
      if (out->grad.empty()) return;
      const Shape xs = x->shape, ws = w->shape;
      const int out_h = out->shape.h, out_w = out->shape.w;
      const T* gd = out->grad.data();
      if (detail::wants_grad(b)) {
        b->ensure_grad();
        for (int n = 0; n < xs.n; ++n)
          for (int co = 0; co < ws.n; ++co) {
            const T* gp = gd + (static_cast<std::size_t>(n) * ws.n + co) * out_h * out_w;
            T acc = T(0);
            for (std::size_t i = 0; i < static_cast<std::size_t>(out_h) * out_w; ++i) acc += gp[i];
            b->grad[co] += acc;
          }
      }
      const bool gx = detail::wants_grad(x), gw = detail::wants_grad(w);
      if (!gx && !gw) return;
      if (gx) x->ensure_grad();
      if (gw) w->ensure_grad();
      for (int n = 0; n < xs.n; ++n) {
        for (int co = 0; co < ws.n; ++co) {
          const T* gplane = gd + (static_cast<std::size_t>(n) * ws.n + co) * out_h * out_w;
          for (int ci = 0; ci < xs.c; ++ci) {
            const std::size_t xoff = (static_cast<std::size_t>(n) * xs.c + ci) * xs.h * xs.w;
            const std::size_t woff = (static_cast<std::size_t>(co) * xs.c + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const T wv = w->data[woff + ky * k + kx];
                T wacc = T(0);
                for (int oy = 0; oy < out_h; ++oy) {
                  const int iy = oy * stride - padding + ky;
                  if (iy < 0 || iy >= xs.h) continue;
                  const T* grow = gplane + static_cast<std::size_t>(oy) * out_w;
                  const std::size_t xrow = xoff + static_cast<std::size_t>(iy) * xs.w;
                  int ox_lo = 0, ox_hi = out_w - 1;
                  while (ox_lo <= ox_hi && ox_lo * stride - padding + kx < 0) ++ox_lo;
                  while (ox_hi >= ox_lo && ox_hi * stride - padding + kx >= xs.w) --ox_hi;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                    const int ix = ox * stride - padding + kx;
                    const T g = grow[ox];
                    if (gx) x->grad[xrow + ix] += wv * g;
                    if (gw) wacc += x->data[xrow + ix] * g;
                  }
                }
                if (gw) w->grad[woff + ky * k + kx] += wacc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// --- resampling ------------------------------------------------------------

enum class Resample { pool_avg, up_nearest };

template <typename T>
Tensor<T> resample2(Tape<T>* tape, const Tensor<T>& x, Resample mode) {
  const Shape s = x->shape;
  if (mode == Resample::pool_avg) {
    if (s.h % 2 != 0 || s.w % 2 != 0)
      throw ShapeError("resample2(pool_avg): spatial extents must be even, got " + s.str());
    auto out = make_tensor<T>({s.n, s.c, s.h / 2, s.w / 2});
    const int oh = s.h / 2, ow = s.w / 2;
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      const T* xp = x->data.data() + static_cast<std::size_t>(nc) * s.h * s.w;
      T* op = out->data.data() + static_cast<std::size_t>(nc) * oh * ow;
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx)
          op[y * ow + xx] = (xp[(2 * y) * s.w + 2 * xx] + xp[(2 * y) * s.w + 2 * xx + 1] +
                             xp[(2 * y + 1) * s.w + 2 * xx] + xp[(2 * y + 1) * s.w + 2 * xx + 1]) *
                            T(0.25);
    }
    detail::mark_output(tape, out);
    if (tape) {
      tape->record([x, out]() {
        if (out->grad.empty() || !detail::wants_grad(x)) return;
        x->ensure_grad();
        const Shape s = x->shape;
        const int oh = s.h / 2, ow = s.w / 2;
        for (int nc = 0; nc < s.n * s.c; ++nc) {
          T* xg = x->grad.data() + static_cast<std::size_t>(nc) * s.h * s.w;
          const T* og = out->grad.data() + static_cast<std::size_t>(nc) * oh * ow;
          for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
              const T g = og[y * ow + xx] * T(0.25);
              xg[(2 * y) * s.w + 2 * xx] += g;
              xg[(2 * y) * s.w + 2 * xx + 1] += g;
              xg[(2 * y + 1) * s.w + 2 * xx] += g;
              xg[(2 * y + 1) * s.w + 2 * xx + 1] += g;
            }
        }
      });
    }
    return out;
  }

  // up_nearest
  auto out = make_tensor<T>({s.n, s.c, s.h * 2, s.w * 2});
  const int oh = s.h * 2, ow = s.w * 2;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const T* xp = x->data.data() + static_cast<std::size_t>(nc) * s.h * s.w;
    T* op = out->data.data() + static_cast<std::size_t>(nc) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) op[y * ow + xx] = xp[(y / 2) * s.w + xx / 2];
  }
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, out]() {
      if (out->grad.empty() || !detail::wants_grad(x)) return;
      x->ensure_grad();
      const Shape s = x->shape;
      const int oh = s.h * 2, ow = s.w * 2;
      for (int nc = 0; nc < s.n * s.c; ++nc) {
        T* xg = x->grad.data() + static_cast<std::size_t>(nc) * s.h * s.w;
        const T* og = out->grad.data() + static_cast<std::size_t>(nc) * oh * ow;
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx) xg[(y / 2) * s.w + xx / 2] += og[y * ow + xx];
      }
    });
  }
  return out;
}

// --- pixel shuffle ---------------------------------------------------------

// Sub-pixel rearrangement: (n, c, h, w) -> (n, c/r^2, r*h, r*w) with
// out[n][co][y][x] = in[n][co*r^2 + (y%r)*r + (x%r)][y/r][x/r].
template <typename T>
Tensor<T> pixel_shuffle(Tape<T>* tape, const Tensor<T>& x, int r) {
  const Shape s = x->shape;
  if (r < 1 || s.c % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels " + std::to_string(s.c) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  const int oc = s.c / (r * r), oh = s.h * r, ow = s.w * r;
  auto out = make_tensor<T>({s.n, oc, oh, ow});
  for (int n = 0; n < s.n; ++n)
    for (int co = 0; co < oc; ++co)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx)
          out->at(n, co, y, xx) = x->at(n, co * r * r + (y % r) * r + (xx % r), y / r, xx / r);
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, out, r, oc, oh, ow]() {
      if (out->grad.empty() || !detail::wants_grad(x)) return;
      x->ensure_grad();
      const Shape s = x->shape;
      for (int n = 0; n < s.n; ++n)
        for (int co = 0; co < oc; ++co)
          for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx)
              x->grad[x->index(n, co * r * r + (y % r) * r + (xx % r), y / r, xx / r)] +=
                  out->grad[out->index(n, co, y, xx)];
    });
  }
  return out;
}

// Inverse rearrangement, (n, c, r*h, r*w) -> (n, c*r^2, h, w).
template <typename T>
Tensor<T> pixel_unshuffle(Tape<T>* tape, const Tensor<T>& x, int r) {
  const Shape s = x->shape;
  if (r < 1 || s.h % r != 0 || s.w % r != 0)
    throw ShapeError("pixel_unshuffle: spatial extents not divisible by r");
  auto out = make_tensor<T>({s.n, s.c * r * r, s.h / r, s.w / r});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx)
          out->at(n, c * r * r + (y % r) * r + (xx % r), y / r, xx / r) = x->at(n, c, y, xx);
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, out, r]() {
      if (out->grad.empty() || !detail::wants_grad(x)) return;
      x->ensure_grad();
      const Shape s = x->shape;
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx)
              x->grad[x->index(n, c, y, xx)] +=
                  out->grad[out->index(n, c * r * r + (y % r) * r + (xx % r), y / r, xx / r)];
    });
  }
  return out;
}

// --- pointwise -------------------------------------------------------------

template <typename T>
Tensor<T> leaky_relu(Tape<T>* tape, const Tensor<T>& x, T slope) {
  auto out = make_tensor<T>(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i) {
    const T v = x->data[i];
    out->data[i] = v > T(0) ? v : slope * v;
  }
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, out, slope]() {
      if (out->grad.empty() || !detail::wants_grad(x)) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < x->data.size(); ++i)
        x->grad[i] += out->grad[i] * (x->data[i] > T(0) ? T(1) : slope);
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  auto out = make_tensor<T>(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i)
    out->data[i] = T(1) / (T(1) + std::exp(-x->data[i]));
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, out]() {
      if (out->grad.empty() || !detail::wants_grad(x)) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < x->data.size(); ++i) {
        const T s = out->data[i];
        x->grad[i] += out->grad[i] * s * (T(1) - s);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  auto out = make_tensor<T>(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([a, b, out]() {
      if (out->grad.empty()) return;
      if (detail::wants_grad(a)) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (detail::wants_grad(b)) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  auto out = make_tensor<T>(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([a, b, out]() {
      if (out->grad.empty()) return;
      if (detail::wants_grad(a)) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (detail::wants_grad(b)) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] -= out->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  auto out = make_tensor<T>(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([a, b, out]() {
      if (out->grad.empty()) return;
      if (detail::wants_grad(a)) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
      }
      if (detail::wants_grad(b)) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
      }
    });
  }
  return out;
}

// Elementwise quotient; both operands same shape.
template <typename T>
Tensor<T> div(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "div");
  auto out = make_tensor<T>(a->shape);
  for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] / b->data[i];
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([a, b, out]() {
      if (out->grad.empty()) return;
      if (detail::wants_grad(a)) {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i] / b->data[i];
      }
      if (detail::wants_grad(b)) {
        b->ensure_grad();
        for (std::size_t i = 0; i < b->data.size(); ++i)
          b->grad[i] -= out->grad[i] * a->data[i] / (b->data[i] * b->data[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T s) {
  auto out = make_tensor<T>(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = x->data[i] * s;
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, out, s]() {
      if (out->grad.empty() || !detail::wants_grad(x)) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += out->grad[i] * s;
    });
  }
  return out;
}

template <typename T>
Tensor<T> shift(Tape<T>* tape, const Tensor<T>& x, T c) {
  auto out = make_tensor<T>(x->shape);
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = x->data[i] + c;
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, out]() {
      if (out->grad.empty() || !detail::wants_grad(x)) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape sa = a->shape, sb = b->shape;
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw ShapeError("concat_channels: non-channel dims differ, " + sa.str() + " vs " + sb.str());
  auto out = make_tensor<T>({sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t plane = static_cast<std::size_t>(sa.h) * sa.w;
  for (int n = 0; n < sa.n; ++n) {
    std::memcpy(out->data.data() + (static_cast<std::size_t>(n) * (sa.c + sb.c)) * plane,
                a->data.data() + static_cast<std::size_t>(n) * sa.c * plane,
                sizeof(T) * sa.c * plane);
    std::memcpy(out->data.data() + (static_cast<std::size_t>(n) * (sa.c + sb.c) + sa.c) * plane,
                b->data.data() + static_cast<std::size_t>(n) * sb.c * plane,
                sizeof(T) * sb.c * plane);
  }
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([a, b, out, plane]() {
      if (out->grad.empty()) return;
      const Shape sa = a->shape, sb = b->shape;
      for (int n = 0; n < sa.n; ++n) {
        const T* og = out->grad.data() + static_cast<std::size_t>(n) * (sa.c + sb.c) * plane;
        if (detail::wants_grad(a)) {
          a->ensure_grad();
          T* ag = a->grad.data() + static_cast<std::size_t>(n) * sa.c * plane;
          for (std::size_t i = 0; i < sa.c * plane; ++i) ag[i] += og[i];
        }
        if (detail::wants_grad(b)) {
          b->ensure_grad();
          T* bg = b->grad.data() + static_cast<std::size_t>(n) * sb.c * plane;
          for (std::size_t i = 0; i < sb.c * plane; ++i) bg[i] += og[sa.c * plane + i];
        }
      }
    });
  }
  return out;
}

// Broadcast multiply by a scalar tensor s (1,1,1,1).
template <typename T>
Tensor<T> mul_bscalar(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s) {
  if (!s->scalar()) throw ShapeError("mul_bscalar: multiplier must be scalar");
  auto out = make_tensor<T>(x->shape);
  const T sv = s->data[0];
  for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = x->data[i] * sv;
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, s, out]() {
      if (out->grad.empty()) return;
      if (detail::wants_grad(x)) {
        x->ensure_grad();
        const T sv = s->data[0];
        for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += out->grad[i] * sv;
      }
      if (detail::wants_grad(s)) {
        s->ensure_grad();
        double acc = 0;
        for (std::size_t i = 0; i < x->data.size(); ++i)
          acc += static_cast<double>(out->grad[i]) * static_cast<double>(x->data[i]);
        s->grad[0] += static_cast<T>(acc);
      }
    });
  }
  return out;
}

// Per-channel broadcast multiply: x (n,c,h,w) * a (n,c,1,1).
template <typename T>
Tensor<T> mul_channel(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& a) {
  const Shape s = x->shape, sa = a->shape;
  if (sa.n != s.n || sa.c != s.c || sa.h != 1 || sa.w != 1)
    throw ShapeError("mul_channel: scale must be (n,c,1,1), got " + sa.str());
  auto out = make_tensor<T>(s);
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T av = a->data[static_cast<std::size_t>(n) * s.c + c];
      const T* xp = x->data.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      T* op = out->data.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) op[i] = xp[i] * av;
    }
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, a, out, plane]() {
      if (out->grad.empty()) return;
      const Shape s = x->shape;
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
          const T av = a->data[static_cast<std::size_t>(n) * s.c + c];
          if (detail::wants_grad(x)) {
            x->ensure_grad();
            for (std::size_t i = 0; i < plane; ++i) x->grad[off + i] += out->grad[off + i] * av;
          }
          if (detail::wants_grad(a)) {
            a->ensure_grad();
            T acc = T(0);
            for (std::size_t i = 0; i < plane; ++i) acc += out->grad[off + i] * x->data[off + i];
            a->grad[static_cast<std::size_t>(n) * s.c + c] += acc;
          }
        }
    });
  }
  return out;
}

// Spatial mean per channel: (n,c,h,w) -> (n,c,1,1).
template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x) {
  const Shape s = x->shape;
  auto out = make_tensor<T>({s.n, s.c, 1, 1});
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* xp = x->data.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      double acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(xp[i]);
      out->data[static_cast<std::size_t>(n) * s.c + c] = static_cast<T>(acc / plane);
    }
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, out, plane]() {
      if (out->grad.empty() || !detail::wants_grad(x)) return;
      x->ensure_grad();
      const Shape s = x->shape;
      const T inv = T(1) / static_cast<T>(plane);
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T g = out->grad[static_cast<std::size_t>(n) * s.c + c] * inv;
          T* xg = x->grad.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) xg[i] += g;
        }
    });
  }
  return out;
}

// --- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
  double acc = 0;
  for (const T v : x->data) acc += static_cast<double>(v);
  auto out = scalar_tensor<T>(static_cast<T>(acc));
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([x, out]() {
      if (out->grad.empty() || !detail::wants_grad(x)) return;
      x->ensure_grad();
      const T g = out->grad[0];
      for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += g;
    });
  }
  return out;
}

// Mean absolute difference over all elements. Subgradient of |.| at 0 is 0.
template <typename T>
Tensor<T> l1_mean(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "l1_mean");
  double acc = 0;
  for (std::size_t i = 0; i < a->data.size(); ++i)
    acc += std::abs(static_cast<double>(a->data[i]) - static_cast<double>(b->data[i]));
  auto out = scalar_tensor<T>(static_cast<T>(acc / a->data.size()));
  detail::mark_output(tape, out);
  if (tape) {
    tape->record([a, b, out]() {
      if (out->grad.empty()) return;
      const T g = out->grad[0] / static_cast<T>(a->data.size());
      const bool ga = detail::wants_grad(a), gb = detail::wants_grad(b);
      if (ga) a->ensure_grad();
      if (gb) b->ensure_grad();
      for (std::size_t i = 0; i < a->data.size(); ++i) {
        const T d = a->data[i] - b->data[i];
        const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        if (ga) a->grad[i] += g * s;
        if (gb) b->grad[i] -= g * s;
      }
    });
  }
  return out;
}

}  // namespace msfs
