#include "spd/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace spd::nn {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

struct ConvGeometry {
  int cin, h, w, kh, kw, ho, wo;
  ConvSpec spec;
  [[nodiscard]] int rows() const { return cin * kh * kw; }
  [[nodiscard]] int cols() const { return ho * wo; }
  [[nodiscard]] bool pointwise() const {
    return kh == 1 && kw == 1 && spec.stride == 1 && spec.pad == 0;
  }
};

template <typename T>
void im2col(const T* src, const ConvGeometry& g, T* cols) {
  const int s = g.spec.stride;
  const int d = g.spec.dilation;
  const int p = g.spec.pad;
  for (int c = 0; c < g.cin; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        T* row = cols + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * s - p + ki * d;
          T* out = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.wo, T(0));
            continue;
          }
          const T* in_row = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * s - p + kj * d;
            out[ox] = (ix >= 0 && ix < g.w) ? in_row[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* dst) {
  const int s = g.spec.stride;
  const int d = g.spec.dilation;
  const int p = g.spec.pad;
  for (int c = 0; c < g.cin; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * s - p + ki * d;
          if (iy < 0 || iy >= g.h) continue;
          const T* in = row + static_cast<std::size_t>(oy) * g.wo;
          T* out_row = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * s - p + kj * d;
            if (ix >= 0 && ix < g.w) out_row[ix] += in[ox];
          }
        }
      }
    }
  }
}

// Half-pixel bilinear taps along one axis.
struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<double> frac;
};

AxisTaps bilinear_taps(int in, int out) {
  AxisTaps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    t.i0[o] = lo;
    t.i1[o] = hi;
    t.frac[o] = src - lo;
    if (hi == lo) t.frac[o] = 0;
  }
  return t;
}

template <typename T>
T grid_coord(int i, int extent) {
  return extent > 1 ? static_cast<T>(i) / static_cast<T>(extent - 1) : T(0.5);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
void backward(const Var<T>& root) {
  require(root && root->value.size() == 1, "backward requires a scalar root");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  std::unordered_set<Node<T>*> marks;
  stack.emplace_back(root.get(), 0);
  marks.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child && child->requires_grad && marks.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvSpec spec) {
  const Shape& xs = x->value.shape();
  const Shape& ws = weight->value.shape();
  require(xs.c == ws.c, "conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                            std::to_string(ws.c));
  require(spec.stride >= 1 && spec.dilation >= 1 && spec.pad >= 0, "conv2d: invalid spec");
  ConvGeometry g{xs.c, xs.h, xs.w, ws.h, ws.w, 0, 0, spec};
  const int eff_kh = (ws.h - 1) * spec.dilation + 1;
  const int eff_kw = (ws.w - 1) * spec.dilation + 1;
  g.ho = (xs.h + 2 * spec.pad - eff_kh) / spec.stride + 1;
  g.wo = (xs.w + 2 * spec.pad - eff_kw) / spec.stride + 1;
  require(g.ho > 0 && g.wo > 0, "conv2d: output would be empty for input " + to_string(xs));
  if (bias) require(static_cast<int>(bias->value.size()) == ws.n, "conv2d: bias size mismatch");

  const int cout = ws.n;
  Tensor<T> out(Shape{xs.n, cout, g.ho, g.wo});
  const bool keep = grad_enabled() && (x->requires_grad || weight->requires_grad ||
                                       (bias && bias->requires_grad));
  auto cols_cache = std::make_shared<std::vector<Tensor<T>>>();
  CMapMat<T> wmat(weight->value.data(), cout, g.rows());
  Tensor<T> scratch;
  for (int n = 0; n < xs.n; ++n) {
    const T* src = x->value.data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
    const T* cols_ptr = src;
    if (!g.pointwise()) {
      Tensor<T> cols(Shape{1, 1, g.rows(), g.cols()});
      im2col(src, g, cols.data());
      if (keep) {
        cols_cache->push_back(std::move(cols));
        cols_ptr = cols_cache->back().data();
      } else {
        scratch = std::move(cols);
        cols_ptr = scratch.data();
      }
    }
    CMapMat<T> cmat(cols_ptr, g.rows(), g.cols());
    MapMat<T> omat(out.data() + static_cast<std::size_t>(n) * cout * g.cols(), cout, g.cols());
    omat.noalias() = wmat * cmat;
    if (bias) {
      for (int co = 0; co < cout; ++co) omat.row(co).array() += bias->value[co];
    }
  }

  return make_result<T>(std::move(out), {x, weight, bias}, [x, weight, bias, g, cols_cache](Node<T>& self) {
    const Shape& xs = x->value.shape();
    const int cout = weight->value.shape().n;
    const Tensor<T>& dy = self.grad;
    CMapMat<T> wmat(weight->value.data(), cout, g.rows());
    Tensor<T> dcols;
    if (x->requires_grad && !g.pointwise()) dcols = Tensor<T>(Shape{1, 1, g.rows(), g.cols()});
    for (int n = 0; n < xs.n; ++n) {
      CMapMat<T> dymat(dy.data() + static_cast<std::size_t>(n) * cout * g.cols(), cout, g.cols());
      const T* cols_ptr = g.pointwise()
                              ? x->value.data() + static_cast<std::size_t>(n) * xs.c * xs.plane()
                              : (*cols_cache)[n].data();
      if (weight->requires_grad) {
        CMapMat<T> cmat(cols_ptr, g.rows(), g.cols());
        MapMat<T> dw(weight->grad_buffer().data(), cout, g.rows());
        dw.noalias() += dymat * cmat.transpose();
      }
      if (bias && bias->requires_grad) {
        auto& db = bias->grad_buffer();
        for (int co = 0; co < cout; ++co) db[co] += dymat.row(co).sum();
      }
      if (x->requires_grad) {
        T* dx = x->grad_buffer().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
        if (g.pointwise()) {
          MapMat<T> dxmat(dx, g.rows(), g.cols());
          dxmat.noalias() += wmat.transpose() * dymat;
        } else {
          MapMat<T> dc(dcols.data(), g.rows(), g.cols());
          dc.noalias() = wmat.transpose() * dymat;
          col2im(dcols.data(), g, dx);
        }
      }
    }
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, bool training, T momentum,
                  T eps) {
  const Shape s = x->value.shape();
  require(static_cast<int>(gamma->value.size()) == s.c && static_cast<int>(beta->value.size()) == s.c,
          "batch_norm: parameter size mismatch for " + to_string(s));
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  std::vector<T> mean(s.c), inv_std(s.c);
  if (training) {
    for (int c = 0; c < s.c; ++c) {
      double sum = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = &x->value.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / count;
      double sq = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = &x->value.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / count;
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * static_cast<T>(mu);
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * static_cast<T>(unbiased);
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }
  Tensor<T> xhat(s);
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = &x->value.at(n, c, 0, 0);
      T* q = &xhat.at(n, c, 0, 0);
      T* o = &out.at(n, c, 0, 0);
      const T g = gamma->value[c];
      const T b = beta->value[c];
      for (std::size_t i = 0; i < plane; ++i) {
        q[i] = (p[i] - mean[c]) * inv_std[c];
        o[i] = q[i] * g + b;
      }
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, xhat = std::move(xhat), inv_std, training](Node<T>& self) {
    const Shape s = x->value.shape();
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * plane;
    const Tensor<T>& dy = self.grad;
    for (int c = 0; c < s.c; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* g = &dy.at(n, c, 0, 0);
        const T* q = &xhat.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += g[i];
          sum_dy_xhat += static_cast<double>(g[i]) * q[i];
        }
      }
      if (gamma->requires_grad) gamma->grad_buffer()[c] += static_cast<T>(sum_dy_xhat);
      if (beta->requires_grad) beta->grad_buffer()[c] += static_cast<T>(sum_dy);
      if (!x->requires_grad) continue;
      const T scale = gamma->value[c] * inv_std[c];
      auto& dx = x->grad_buffer();
      for (int n = 0; n < s.n; ++n) {
        const T* g = &dy.at(n, c, 0, 0);
        const T* q = &xhat.at(n, c, 0, 0);
        T* d = &dx.at(n, c, 0, 0);
        if (training) {
          const T mdy = static_cast<T>(sum_dy / count);
          const T mdyx = static_cast<T>(sum_dy_xhat / count);
          for (std::size_t i = 0; i < plane; ++i) d[i] += scale * (g[i] - mdy - q[i] * mdyx);
        } else {
          for (std::size_t i = 0; i < plane; ++i) d[i] += scale * g[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
  return make_result<T>(std::move(out), {x}, [x](Node<T>& self) {
    auto& dx = x->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (x->value[i] > T(0)) dx[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x->value[i]));
  auto keep = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {x}, [x, keep](Node<T>& self) {
    auto& dx = x->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T y = (*keep)[i];
      dx[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a->value.shape() == b->value.shape(),
          "add: shape mismatch " + to_string(a->value.shape()) + " vs " + to_string(b->value.shape()));
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_result<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    for (const auto& in : {a, b}) {
      if (!in->requires_grad) continue;
      auto& d = in->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * factor;
  return make_result<T>(std::move(out), {x}, [x, factor](Node<T>& self) {
    auto& d = x->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * factor;
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape first = parts.front()->value.shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p->value.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            "concat_channels: spatial mismatch " + to_string(s) + " vs " + to_string(first));
    channels += s.c;
  }
  Tensor<T> out(Shape{first.n, channels, first.h, first.w});
  const std::size_t plane = first.plane();
  for (int n = 0; n < first.n; ++n) {
    int offset = 0;
    for (const auto& p : parts) {
      const int c = p->value.shape().c;
      std::copy_n(&p->value.at(n, 0, 0, 0), c * plane, &out.at(n, offset, 0, 0));
      offset += c;
    }
  }
  return make_result<T>(std::move(out), parts, [parts](Node<T>& self) {
    const Shape s = self.value.shape();
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
      int offset = 0;
      for (const auto& p : parts) {
        const int c = p->value.shape().c;
        if (p->requires_grad) {
          T* d = &p->grad_buffer().at(n, 0, 0, 0);
          const T* g = &self.grad.at(n, offset, 0, 0);
          for (std::size_t i = 0; i < c * plane; ++i) d[i] += g[i];
        }
        offset += c;
      }
    }
  });
}

template <typename T>
Var<T> avg_pool(const Var<T>& x, int k) {
  const Shape s = x->value.shape();
  require(k >= 1 && s.h % k == 0 && s.w % k == 0,
          "avg_pool: " + to_string(s) + " not divisible by " + std::to_string(k));
  if (k == 1) return x;
  const int ho = s.h / k, wo = s.w / k;
  Tensor<T> out(Shape{s.n, s.c, ho, wo});
  const T inv = T(1) / static_cast<T>(k * k);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) out.at(n, c, y / k, xx / k) += x->value.at(n, c, y, xx) * inv;
  return make_result<T>(std::move(out), {x}, [x, k, inv](Node<T>& self) {
    const Shape s = x->value.shape();
    auto& d = x->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
          for (int xx = 0; xx < s.w; ++xx) d.at(n, c, y, xx) += self.grad.at(n, c, y / k, xx / k) * inv;
  });
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w) {
  const Shape s = x->value.shape();
  require(out_h > 0 && out_w > 0, "resize_bilinear: empty target");
  if (s.h == out_h && s.w == out_w) return x;
  auto ty = std::make_shared<AxisTaps>(bilinear_taps(s.h, out_h));
  auto tx = std::make_shared<AxisTaps>(bilinear_taps(s.w, out_w));
  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = &x->value.at(n, c, 0, 0);
      T* dst = &out.at(n, c, 0, 0);
      for (int oy = 0; oy < out_h; ++oy) {
        const T fy = static_cast<T>(ty->frac[oy]);
        const T* r0 = src + static_cast<std::size_t>(ty->i0[oy]) * s.w;
        const T* r1 = src + static_cast<std::size_t>(ty->i1[oy]) * s.w;
        for (int ox = 0; ox < out_w; ++ox) {
          const T fx = static_cast<T>(tx->frac[ox]);
          const int a = tx->i0[ox], b = tx->i1[ox];
          const T top = r0[a] * (T(1) - fx) + r0[b] * fx;
          const T bot = r1[a] * (T(1) - fx) + r1[b] * fx;
          dst[static_cast<std::size_t>(oy) * out_w + ox] = top * (T(1) - fy) + bot * fy;
        }
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [x, ty, tx](Node<T>& self) {
    const Shape s = x->value.shape();
    const Shape o = self.value.shape();
    auto& d = x->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        T* dst = &d.at(n, c, 0, 0);
        const T* g = &self.grad.at(n, c, 0, 0);
        for (int oy = 0; oy < o.h; ++oy) {
          const T fy = static_cast<T>(ty->frac[oy]);
          T* r0 = dst + static_cast<std::size_t>(ty->i0[oy]) * s.w;
          T* r1 = dst + static_cast<std::size_t>(ty->i1[oy]) * s.w;
          for (int ox = 0; ox < o.w; ++ox) {
            const T fx = static_cast<T>(tx->frac[ox]);
            const int a = tx->i0[ox], b = tx->i1[ox];
            const T v = g[static_cast<std::size_t>(oy) * o.w + ox];
            r0[a] += v * (T(1) - fx) * (T(1) - fy);
            r0[b] += v * fx * (T(1) - fy);
            r1[a] += v * (T(1) - fx) * fy;
            r1[b] += v * fx * fy;
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> soft_argmax(const Var<T>& logits) {
  const Shape s = logits->value.shape();
  const std::size_t plane = s.plane();
  auto probs = std::make_shared<Tensor<T>>(s);
  Tensor<T> out(Shape{s.n, s.c, 1, 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* l = &logits->value.at(n, c, 0, 0);
      T* p = &probs->at(n, c, 0, 0);
      T mx = *std::max_element(l, l + plane);
      T z = 0;
      for (std::size_t i = 0; i < plane; ++i) z += (p[i] = std::exp(l[i] - mx));
      T ex = 0, ey = 0;
      for (int y = 0; y < s.h; ++y) {
        for (int xx = 0; xx < s.w; ++xx) {
          T& pi = p[static_cast<std::size_t>(y) * s.w + xx];
          pi /= z;
          ex += pi * grid_coord<T>(xx, s.w);
          ey += pi * grid_coord<T>(y, s.h);
        }
      }
      out.at(n, c, 0, 0) = ex;
      out.at(n, c, 0, 1) = ey;
    }
  }
  auto coords = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {logits}, [logits, probs, coords](Node<T>& self) {
    const Shape s = logits->value.shape();
    auto& d = logits->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const T gx = self.grad.at(n, c, 0, 0);
        const T gy = self.grad.at(n, c, 0, 1);
        const T ex = coords->at(n, c, 0, 0);
        const T ey = coords->at(n, c, 0, 1);
        const T* p = &probs->at(n, c, 0, 0);
        T* dl = &d.at(n, c, 0, 0);
        for (int y = 0; y < s.h; ++y) {
          for (int xx = 0; xx < s.w; ++xx) {
            const std::size_t i = static_cast<std::size_t>(y) * s.w + xx;
            dl[i] += p[i] * (gx * (grid_coord<T>(xx, s.w) - ex) + gy * (grid_coord<T>(y, s.h) - ey));
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> render_gaussians(const Var<T>& coords, int h, int w, T sigma) {
  const Shape s = coords->value.shape();
  require(s.h == 1 && s.w == 2, "render_gaussians: coords must be (B, N, 1, 2)");
  require(sigma > T(0), "render_gaussians: sigma must be positive");
  const T sx = static_cast<T>(std::max(w - 1, 1));
  const T sy = static_cast<T>(std::max(h - 1, 1));
  Tensor<T> out(Shape{s.n, s.c, h, w});
  const T inv2s2 = T(1) / (T(2) * sigma * sigma);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T cx = coords->value.at(n, c, 0, 0) * sx;
      const T cy = coords->value.at(n, c, 0, 1) * sy;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const T dx = x - cx, dy = y - cy;
          out.at(n, c, y, x) = std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
  }
  auto maps = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {coords}, [coords, maps, sigma, sx, sy](Node<T>& self) {
    const Shape s = coords->value.shape();
    const Shape m = maps->shape();
    auto& d = coords->grad_buffer();
    const T inv_s2 = T(1) / (sigma * sigma);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const T cx = coords->value.at(n, c, 0, 0) * sx;
        const T cy = coords->value.at(n, c, 0, 1) * sy;
        T gx = 0, gy = 0;
        for (int y = 0; y < m.h; ++y)
          for (int x = 0; x < m.w; ++x) {
            const T g = self.grad.at(n, c, y, x) * maps->at(n, c, y, x) * inv_s2;
            gx += g * (x - cx);
            gy += g * (y - cy);
          }
        d.at(n, c, 0, 0) += gx * sx;
        d.at(n, c, 0, 1) += gy * sy;
      }
    }
  });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<T>& weights) {
  require(scalars.size() == weights.size(), "weighted_sum: size mismatch");
  std::vector<Var<T>> used;
  std::vector<T> used_w;
  T total = 0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (!scalars[i]) continue;
    require(scalars[i]->value.size() == 1, "weighted_sum: inputs must be scalars");
    total += weights[i] * scalars[i]->value[0];
    used.push_back(scalars[i]);
    used_w.push_back(weights[i]);
  }
  Tensor<T> out(Shape{1, 1, 1, 1}, total);
  return make_result<T>(std::move(out), used, [used, used_w](Node<T>& self) {
    for (std::size_t i = 0; i < used.size(); ++i) {
      if (used[i]->requires_grad) used[i]->grad_buffer()[0] += self.grad[0] * used_w[i];
    }
  });
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        T mx = -std::numeric_limits<T>::infinity();
        for (int c = 0; c < s.c; ++c) mx = std::max(mx, logits.at(n, c, y, x));
        T z = 0;
        for (int c = 0; c < s.c; ++c) z += (out.at(n, c, y, x) = std::exp(logits.at(n, c, y, x) - mx));
        for (int c = 0; c < s.c; ++c) out.at(n, c, y, x) /= z;
      }
    }
  }
  return out;
}

template <typename T>
std::vector<int> argmax_channels(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  std::vector<int> out(static_cast<std::size_t>(s.n) * s.plane(), 0);
  for (int n = 0; n < s.n; ++n) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        int best = 0;
        T best_v = logits.at(n, 0, y, x);
        for (int c = 1; c < s.c; ++c) {
          if (logits.at(n, c, y, x) > best_v) {
            best_v = logits.at(n, c, y, x);
            best = c;
          }
        }
        out[(static_cast<std::size_t>(n) * s.h + y) * s.w + x] = best;
      }
    }
  }
  return out;
}

#define SPD_INSTANTIATE_OPS(T)                                                                    \
  template void backward<T>(const Var<T>&);                                                       \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, ConvSpec);               \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&,          \
                                Tensor<T>&, bool, T, T);                                          \
  template Var<T> relu<T>(const Var<T>&);                                                         \
  template Var<T> sigmoid<T>(const Var<T>&);                                                      \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                           \
  template Var<T> scale<T>(const Var<T>&, T);                                                     \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                 \
  template Var<T> avg_pool<T>(const Var<T>&, int);                                                \
  template Var<T> resize_bilinear<T>(const Var<T>&, int, int);                                    \
  template Var<T> soft_argmax<T>(const Var<T>&);                                                  \
  template Var<T> render_gaussians<T>(const Var<T>&, int, int, T);                                \
  template Var<T> weighted_sum<T>(const std::vector<Var<T>>&, const std::vector<T>&);             \
  template Tensor<T> softmax_channels<T>(const Tensor<T>&);                                       \
  template std::vector<int> argmax_channels<T>(const Tensor<T>&);

SPD_INSTANTIATE_OPS(float)
SPD_INSTANTIATE_OPS(double)

}  // namespace spd::nn
