#include "spd/objectives/losses.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "spd/nn/ops.hpp"

namespace spd::objectives {

namespace {

using nn::Shape;
using nn::Tensor;


template <typename T>
Var<T> scalar_result(double value, std::vector<Var<T>> inputs, std::function<void(nn::Node<T>&)> fn) {
  return nn::make_result<T>(Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(value)), std::move(inputs), std::move(fn));
}

/// Per-pixel log-softmax pieces: returns -log p[target] and writes the
/// softmax probabilities (channel stride `plane`) into `prob`.
template <typename T>
double pixel_cse(const T* logits, std::size_t plane, int channels, int target, double* prob) {
  double mx = logits[0];
  for (int c = 1; c < channels; ++c) mx = std::max(mx, static_cast<double>(logits[c * plane]));
  double z = 0;
  for (int c = 0; c < channels; ++c) {
    prob[c] = std::exp(static_cast<double>(logits[c * plane]) - mx);
    z += prob[c];
  }
  for (int c = 0; c < channels; ++c) prob[c] /= z;
  return -(static_cast<double>(logits[target * plane]) - mx - std::log(z));
}

double huber_grad(double r, double delta) {
  if (std::abs(r) <= delta) return r;
  return r > 0 ? delta : -delta;
}

}  // namespace

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

template <typename T>
Var<T> seg_loss(const Var<T>& logits, const std::vector<SegMask>& targets) {
  const Shape s = logits->value.shape();
  if (static_cast<int>(targets.size()) != s.n) {
    throw std::invalid_argument("seg_loss: " + std::to_string(targets.size()) + " targets for batch " +
                                std::to_string(s.n));
  }
  for (const SegMask& m : targets) {
    if (m.labels.height != s.h || m.labels.width != s.w) {
      throw std::invalid_argument("seg_loss: target dims differ from logits " + nn::to_string(s));
    }
    for (std::uint8_t c : m.labels.data) {
      if (c >= s.c) throw std::invalid_argument("seg_loss: class index " + std::to_string(c) + " >= K");
    }
  }
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  std::vector<double> prob(s.c);
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const T* base = logits->value.data() + static_cast<std::size_t>(n) * s.c * plane + i;
      total += pixel_cse(base, plane, s.c, targets[n].labels.data[i], prob.data());
    }
  }
  return scalar_result<T>(total / count, {logits}, [logits, targets, s](nn::Node<T>& self) {
    const std::size_t plane = s.plane();
    const double g = static_cast<double>(self.grad[0]) / (static_cast<double>(s.n) * plane);
    std::vector<double> prob(s.c);
    Tensor<T>& d = logits->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t off = static_cast<std::size_t>(n) * s.c * plane + i;
        const int t = targets[n].labels.data[i];
        pixel_cse(logits->value.data() + off, plane, s.c, t, prob.data());
        for (int c = 0; c < s.c; ++c) d[off + c * plane] += static_cast<T>(g * (prob[c] - (c == t ? 1.0 : 0.0)));
      }
    }
  });
}

template <typename T>
PoseLoss<T> pose_loss(const Var<T>& coords, const std::vector<Skeleton>& targets, int height, int width) {
  const Shape s = coords->value.shape();
  if (static_cast<int>(targets.size()) != s.n || s.h != 1 || s.w != 2) {
    throw std::invalid_argument("pose_loss: coords " + nn::to_string(s) + " vs " + std::to_string(targets.size()) +
                                " targets");
  }
  // Normalised residuals for visible joints, zero elsewhere.
  Tensor<double> resid(s);
  Tensor<double> mask(s);
  int visible = 0;
  for (int b = 0; b < s.n; ++b) {
    if (targets[b].size() != s.c) {
      throw std::invalid_argument("pose_loss: skeleton has " + std::to_string(targets[b].size()) +
                                  " joints, expected " + std::to_string(s.c));
    }
    for (int j = 0; j < s.c; ++j) {
      const Joint& jt = targets[b].joints[j];
      if (!jt.visible) continue;
      ++visible;
      resid.at(b, j, 0, 0) = coords->value.at(b, j, 0, 0) - jt.x / (width - 1);
      resid.at(b, j, 0, 1) = coords->value.at(b, j, 0, 1) - jt.y / (height - 1);
      mask.at(b, j, 0, 0) = mask.at(b, j, 0, 1) = 1.0;
    }
  }
  PoseLoss<T> out;
  out.supervised = visible > 0;
  if (!out.supervised) {
    out.value = nn::constant(Tensor<T>(Shape{1, 1, 1, 1}));
    return out;
  }
  double sq = 0;
  for (std::size_t i = 0; i < resid.size(); ++i) sq += resid[i] * resid[i];
  const double inv = 1.0 / (2.0 * visible);
  out.value = scalar_result<T>(sq * inv, {coords}, [coords, resid, inv](nn::Node<T>& self) {
    Tensor<T>& d = coords->grad_buffer();
    const double g = static_cast<double>(self.grad[0]) * 2.0 * inv;
    for (std::size_t i = 0; i < resid.size(); ++i) d[i] += static_cast<T>(g * resid[i]);
  });
  return out;
}

template <typename T>
Var<T> dense_loss(const Var<T>& part_logits, const Var<T>& uv, const std::vector<const DensePoseMap*>& targets,
                  DenseLossForm form, double delta) {
  const Shape s = part_logits->value.shape();
  const Shape us = uv->value.shape();
  if (static_cast<int>(targets.size()) != s.n || us.n != s.n || us.c != 2 || us.h != s.h || us.w != s.w) {
    throw std::invalid_argument("dense_loss: shapes " + nn::to_string(s) + " / " + nn::to_string(us) + " vs " +
                                std::to_string(targets.size()) + " targets");
  }
  const std::size_t plane = s.plane();
  std::size_t fg = 0, bg = 0;
  for (const DensePoseMap* t : targets) {
    if (!t) continue;
    if (t->part_index.height != s.h || t->part_index.width != s.w) {
      throw std::invalid_argument("dense_loss: target dims differ from logits " + nn::to_string(s));
    }
    for (std::uint8_t p : t->part_index.data) {
      if (p >= s.c) throw std::invalid_argument("dense_loss: part index " + std::to_string(p) + " out of range");
      (p > 0 ? fg : bg) += 1;
    }
  }
  if (fg + bg == 0) return nn::constant(Tensor<T>(Shape{1, 1, 1, 1}));
  const double wf = fg ? 1.0 / fg : 0.0;
  const double wb = bg ? 1.0 / bg : 0.0;
  const bool product = form == DenseLossForm::kProduct;

  // One pass computes the value; with `grad` set it accumulates gradients.
  auto sweep = [=](const Tensor<T>& lv, const Tensor<T>& uvv, Tensor<T>* dl, Tensor<T>* du, double g) {
    std::vector<double> prob(s.c);
    double total = 0;
    for (int n = 0; n < s.n; ++n) {
      const DensePoseMap* t = targets[n];
      if (!t) continue;
      for (std::size_t i = 0; i < plane; ++i) {
        const int part = t->part_index.data[i];
        const std::size_t off = static_cast<std::size_t>(n) * s.c * plane + i;
        const double cse = pixel_cse(lv.data() + off, plane, s.c, part, prob.data());
        double cse_scale;
        if (part == 0) {
          total += wb * cse;
          cse_scale = wb;
        } else {
          const std::size_t uoff = static_cast<std::size_t>(n) * 2 * plane + i;
          const double ru = uvv[uoff] - t->u.data[i];
          const double rv = uvv[uoff + plane] - t->v.data[i];
          const double h = huber(ru, delta) + huber(rv, delta);
          total += wf * (product ? cse * h : cse + h);
          cse_scale = wf * (product ? h : 1.0);
          if (du) {
            const double hs = g * wf * (product ? cse : 1.0);
            (*du)[uoff] += static_cast<T>(hs * huber_grad(ru, delta));
            (*du)[uoff + plane] += static_cast<T>(hs * huber_grad(rv, delta));
          }
        }
        if (dl) {
          for (int c = 0; c < s.c; ++c) {
            (*dl)[off + c * plane] += static_cast<T>(g * cse_scale * (prob[c] - (c == part ? 1.0 : 0.0)));
          }
        }
      }
    }
    return total;
  };
  const double value = sweep(part_logits->value, uv->value, nullptr, nullptr, 0.0);
  return scalar_result<T>(value, {part_logits, uv}, [=](nn::Node<T>& self) {
    Tensor<T>* dl = part_logits->requires_grad ? &part_logits->grad_buffer() : nullptr;
    Tensor<T>* du = uv->requires_grad ? &uv->grad_buffer() : nullptr;
    sweep(part_logits->value, uv->value, dl, du, static_cast<double>(self.grad[0]));
  });
}

LossWeights weights_for(const ModelConfig& c) {
  return LossWeights{c.lambda_s, c.effective_lambda_p(), c.effective_lambda_d()};
}

LossBreakdown joint_loss(double l_seg, std::optional<double> l_pose, std::optional<double> l_dense,
                         const LossWeights& w) {
  if (w.lambda_s < 0 || w.lambda_p < 0 || w.lambda_d < 0) {
    throw std::invalid_argument("joint_loss: lambda weights must be non-negative");
  }
  LossBreakdown b;
  b.weights = w;
  b.l_seg = l_seg;
  b.l_pose = l_pose && w.lambda_p > 0 ? *l_pose : 0.0;
  b.l_dense = l_dense && w.lambda_d > 0 ? *l_dense : 0.0;
  b.total = w.lambda_s * b.l_seg + w.lambda_p * b.l_pose + w.lambda_d * b.l_dense;
  return b;
}

template <typename T>
Var<T> joint_loss_graph(const Var<T>& l_seg, const Var<T>& l_pose, const Var<T>& l_dense, const LossWeights& w) {
  return nn::weighted_sum<T>({l_seg, w.lambda_p > 0 ? l_pose : nullptr, w.lambda_d > 0 ? l_dense : nullptr},
                             {static_cast<T>(w.lambda_s), static_cast<T>(w.lambda_p), static_cast<T>(w.lambda_d)});
}

std::string format_log_line(long iteration, const LossBreakdown& b) {
  auto num = [](double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  return "iteration=" + std::to_string(iteration) + " l_seg=" + num(b.l_seg) + " l_pose=" + num(b.l_pose) +
         " l_dense=" + num(b.l_dense) + " total=" + num(b.total);
}

#define SPD_INSTANTIATE_LOSSES(T)                                                                     \
  template Var<T> seg_loss<T>(const Var<T>&, const std::vector<SegMask>&);                            \
  template PoseLoss<T> pose_loss<T>(const Var<T>&, const std::vector<Skeleton>&, int, int);           \
  template Var<T> dense_loss<T>(const Var<T>&, const Var<T>&, const std::vector<const DensePoseMap*>&, \
                                DenseLossForm, double);                                               \
  template Var<T> joint_loss_graph<T>(const Var<T>&, const Var<T>&, const Var<T>&, const LossWeights&);

SPD_INSTANTIATE_LOSSES(float)
SPD_INSTANTIATE_LOSSES(double)

}  // namespace spd::objectives
