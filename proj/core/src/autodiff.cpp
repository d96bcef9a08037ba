#include "latent_shield/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lshield {

const Tensor& Var::value() const { return tape().value(id_); }

bool Var::requires_grad() const { return tape().requires_grad(id_); }

Tape& Var::tape() const {
  if (!tape_) throw std::logic_error("use of an unbound Var");
  return *tape_;
}

void Tape::check_owned(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::logic_error("Var belongs to a different tape");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_accumulator(std::size_t node) {
  Node& n = nodes_[node];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var output) {
  check_owned(output);
  if (output.value().size() != 1) {
    throw ShapeError("backward() needs a scalar output, got shape " + to_string(output.shape()));
  }
  for (Node& n : nodes_) n.grad.clear();
  grad_accumulator(output.id_)[0] = 1.0;
  for (std::size_t i = output.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id_];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return Tensor(n.value.shape(), n.grad);
}

// ---------------------------------------------------------------------------

namespace {

Tape& common_tape(const Var& a, const Var& b) {
  Tape& t = a.tape();
  if (&t != &b.tape()) throw std::logic_error("operands live on different tapes");
  return t;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var conv2d(Var input, Var kernel, std::optional<Var> bias, Conv2dOptions opts) {
  Tape& tape = common_tape(input, kernel);
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 4 || ks.size() != 4) {
    throw ShapeError("conv2d expects rank-4 input and kernel, got " + to_string(is) + " and " +
                     to_string(ks));
  }
  if (ks[1] != is[1]) {
    throw ShapeError("conv2d kernel in-channels " + std::to_string(ks[1]) +
                     " != input channels " + std::to_string(is[1]) + " (input " + to_string(is) +
                     ", kernel " + to_string(ks) + ")");
  }
  if (ks[2] != ks[3]) throw ShapeError("conv2d expects square kernels, got " + to_string(ks));
  if (opts.stride == 0) throw ShapeError("conv2d stride must be positive");
  const std::size_t n_batch = is[0], channels = is[1], height = is[2], width = is[3];
  const std::size_t out_ch = ks[0], k = ks[2], stride = opts.stride, pad = opts.padding;
  if (height + 2 * pad < k || width + 2 * pad < k) {
    throw ShapeError("conv2d output would be empty: input " + to_string(is) + ", kernel " +
                     to_string(ks) + ", padding " + std::to_string(pad));
  }
  const std::size_t oh_n = (height + 2 * pad - k) / stride + 1;
  const std::size_t ow_n = (width + 2 * pad - k) / stride + 1;
  if (bias) {
    if (&bias->tape() != &tape) throw std::logic_error("conv2d bias lives on a different tape");
    if (bias->shape() != Shape{out_ch}) {
      throw ShapeError("conv2d bias shape " + to_string(bias->shape()) + " does not match " +
                       std::to_string(out_ch) + " output channels");
    }
  }

  Tensor out(Shape{n_batch, out_ch, oh_n, ow_n}, 0.0);
  {
    const auto in = input.value().data();
    const auto w = kernel.value().data();
    auto o = out.data();
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t oc = 0; oc < out_ch; ++oc) {
        double* out_plane = o.data() + (n * out_ch + oc) * oh_n * ow_n;
        if (bias) {
          const double b = bias->value()[oc];
          for (std::size_t i = 0; i < oh_n * ow_n; ++i) out_plane[i] = b;
        }
        for (std::size_t c = 0; c < channels; ++c) {
          const double* in_plane = in.data() + (n * channels + c) * height * width;
          for (std::size_t kh = 0; kh < k; ++kh) {
            for (std::size_t kw = 0; kw < k; ++kw) {
              const double wv = w[((oc * channels + c) * k + kh) * k + kw];
              for (std::size_t oh = 0; oh < oh_n; ++oh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
                const double* in_row = in_plane + ih * width;
                double* out_row = out_plane + oh * ow_n;
                for (std::size_t ow = 0; ow < ow_n; ++ow) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                            static_cast<std::ptrdiff_t>(pad);
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width)) continue;
                  out_row[ow] += wv * in_row[iw];
                }
              }
            }
          }
        }
      }
    }
  }

  std::vector<Var> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  const std::size_t in_id = input.id(), k_id = kernel.id();
  const std::optional<std::size_t> b_id = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;

  return tape.record(std::move(out), std::move(inputs), [=](Tape& t, std::size_t self) {
    const std::vector<double>& g = t.grad_of(self);
    const auto in = t.value(in_id).data();
    const auto w = t.value(k_id).data();
    const bool want_in = t.requires_grad(in_id);
    const bool want_k = t.requires_grad(k_id);
    double* gin = want_in ? t.grad_accumulator(in_id).data() : nullptr;
    double* gk = want_k ? t.grad_accumulator(k_id).data() : nullptr;
    if (b_id && t.requires_grad(*b_id)) {
      std::vector<double>& gb = t.grad_accumulator(*b_id);
      for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t oc = 0; oc < out_ch; ++oc) {
          const double* gp = g.data() + (n * out_ch + oc) * oh_n * ow_n;
          double s = 0.0;
          for (std::size_t i = 0; i < oh_n * ow_n; ++i) s += gp[i];
          gb[oc] += s;
        }
      }
    }
    if (!gin && !gk) return;
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t oc = 0; oc < out_ch; ++oc) {
        const double* g_plane = g.data() + (n * out_ch + oc) * oh_n * ow_n;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t plane_off = (n * channels + c) * height * width;
          for (std::size_t kh = 0; kh < k; ++kh) {
            for (std::size_t kw = 0; kw < k; ++kw) {
              const std::size_t widx = ((oc * channels + c) * k + kh) * k + kw;
              const double wv = w[widx];
              double gw = 0.0;
              for (std::size_t oh = 0; oh < oh_n; ++oh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
                const std::size_t row_off = plane_off + static_cast<std::size_t>(ih) * width;
                const double* g_row = g_plane + oh * ow_n;
                for (std::size_t ow = 0; ow < ow_n; ++ow) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                            static_cast<std::ptrdiff_t>(pad);
                  if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width)) continue;
                  const std::size_t idx = row_off + static_cast<std::size_t>(iw);
                  if (gin) gin[idx] += g_row[ow] * wv;
                  gw += g_row[ow] * in[idx];
                }
              }
              if (gk) gk[widx] += gw;
            }
          }
        }
      }
    }
  });
}

Var elementwise(Var x, Elementwise kind, double constant) {
  Tape& tape = x.tape();
  const Tensor& xv = x.value();
  Tensor out = xv;
  auto o = out.data();
  switch (kind) {
    case Elementwise::silu:
      for (double& v : o) v = v * sigmoid(v);
      break;
    case Elementwise::square:
      for (double& v : o) v = v * v;
      break;
    case Elementwise::log:
      for (std::size_t i = 0; i < o.size(); ++i) {
        if (!(o[i] > 0.0)) {
          throw std::domain_error("log of non-positive value " + std::to_string(o[i]) +
                                  " at flat index " + std::to_string(i) + " of tensor " +
                                  to_string(xv.shape()));
        }
        o[i] = std::log(o[i]);
      }
      break;
    case Elementwise::exp:
      for (double& v : o) v = std::exp(v);
      break;
    case Elementwise::add_const:
      for (double& v : o) v += constant;
      break;
    case Elementwise::mul_const:
      for (double& v : o) v *= constant;
      break;
  }
  const std::size_t in_id = x.id();
  return tape.record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const std::vector<double>& g = t.grad_of(self);
    const auto in = t.value(in_id).data();
    const auto y = t.value(self).data();
    std::vector<double>& gi = t.grad_accumulator(in_id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case Elementwise::silu: {
          const double s = sigmoid(in[i]);
          d = s * (1.0 + in[i] * (1.0 - s));
          break;
        }
        case Elementwise::square: d = 2.0 * in[i]; break;
        case Elementwise::log: d = 1.0 / in[i]; break;
        case Elementwise::exp: d = y[i]; break;
        case Elementwise::add_const: d = 1.0; break;
        case Elementwise::mul_const: d = constant; break;
      }
      gi[i] += g[i] * d;
    }
  });
}

Var reduce(Var x, Reduction kind) {
  Tape& tape = x.tape();
  const auto xs = x.value().data();
  double s = 0.0;
  for (double v : xs) s += v;
  const double n = static_cast<double>(xs.size());
  if (kind == Reduction::mean) s /= n;
  const std::size_t in_id = x.id();
  return tape.record(Tensor::scalar(s), {x}, [=](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    const double d = kind == Reduction::mean ? g / n : g;
    for (double& v : t.grad_accumulator(in_id)) v += d;
  });
}

namespace {

enum class Binary { add, sub, mul };

Var binary(Var a, Var b, Binary kind) {
  Tape& tape = common_tape(a, b);
  require_same_shape(a.value(), b.value(), kind == Binary::mul ? "mul" : "add/sub");
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    switch (kind) {
      case Binary::add: o[i] += bv[i]; break;
      case Binary::sub: o[i] -= bv[i]; break;
      case Binary::mul: o[i] *= bv[i]; break;
    }
  }
  const std::size_t a_id = a.id(), b_id = b.id();
  return tape.record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const std::vector<double>& g = t.grad_of(self);
    if (t.requires_grad(a_id)) {
      std::vector<double>& ga = t.grad_accumulator(a_id);
      if (kind == Binary::mul) {
        const auto bv2 = t.value(b_id).data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (t.requires_grad(b_id)) {
      std::vector<double>& gb = t.grad_accumulator(b_id);
      switch (kind) {
        case Binary::add:
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
          break;
        case Binary::sub:
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
          break;
        case Binary::mul: {
          const auto av = t.value(a_id).data();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
          break;
        }
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, Binary::add); }
Var sub(Var a, Var b) { return binary(a, b, Binary::sub); }
Var mul(Var a, Var b) { return binary(a, b, Binary::mul); }

Var reshape(Var x, Shape shape) {
  Tape& tape = x.tape();
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t in_id = x.id();
  return tape.record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const std::vector<double>& g = t.grad_of(self);
    std::vector<double>& gi = t.grad_accumulator(in_id);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
  });
}

Var concat_channels(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3]) {
    throw ShapeError("concat_channels: incompatible shapes " + to_string(as) + " and " +
                     to_string(bs));
  }
  const std::size_t n_batch = as[0], ca = as[1], cb = bs[1], plane = as[2] * as[3];
  Tensor out(Shape{n_batch, ca + cb, as[2], as[3]});
  const auto av = a.value().data();
  const auto bv = b.value().data();
  auto o = out.data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    std::copy_n(av.data() + n * ca * plane, ca * plane, o.data() + n * (ca + cb) * plane);
    std::copy_n(bv.data() + n * cb * plane, cb * plane, o.data() + (n * (ca + cb) + ca) * plane);
  }
  const std::size_t a_id = a.id(), b_id = b.id();
  return tape.record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const std::vector<double>& g = t.grad_of(self);
    if (t.requires_grad(a_id)) {
      std::vector<double>& ga = t.grad_accumulator(a_id);
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t i = 0; i < ca * plane; ++i) ga[n * ca * plane + i] += g[n * (ca + cb) * plane + i];
    }
    if (t.requires_grad(b_id)) {
      std::vector<double>& gb = t.grad_accumulator(b_id);
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t i = 0; i < cb * plane; ++i)
          gb[n * cb * plane + i] += g[(n * (ca + cb) + ca) * plane + i];
    }
  });
}

}  // namespace lshield
