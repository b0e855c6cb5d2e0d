#include "core/ops.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace aseg {

namespace {

template <class S>
bool any_tracked(const TensorT<S>& a) {
  return a.tracked();
}

template <class S>
bool any_tracked(const TensorT<S>& a, const TensorT<S>& b) {
  return a.tracked() || b.tracked();
}

template <class S>
bool any_tracked(const TensorT<S>& a, const TensorT<S>& b, const TensorT<S>& c) {
  return a.tracked() || b.tracked() || c.tracked();
}

// Second operand of a binary op: either identical dims or a broadcast scalar.
template <class S>
bool check_binary_dims(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (b.numel() == 1) return true;
  require_arg(a.same_dims(b), std::string(op) + ": dims mismatch");
  return false;
}

template <class S>
TensorT<S> finish(std::vector<int> dims, std::vector<S> values, TapeT<S>* tape, bool tracked,
                  typename TapeT<S>::BackwardFn backward_fn) {
  if (tape != nullptr && tracked) {
    const int node = tape->record(values.size(), std::move(backward_fn));
    return TensorT<S>::with_node(std::move(dims), std::move(values), node);
  }
  return TensorT<S>(std::move(dims), std::move(values));
}

}  // namespace

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
  const bool broadcast = check_binary_dims(a, b, "add");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<S> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[broadcast ? 0 : i];
  const int na = a.node(), nb = b.node();
  const size_t n = av.size(), nbn = bv.size();
  return finish(
      a.dims(), std::move(out), tape, any_tracked(a, b),
      [na, nb, n, nbn, broadcast](const std::vector<S>& gout, typename TapeT<S>::Grads& grads) {
        if (na >= 0) {
          auto& ga = TapeT<S>::slot(grads, na, n);
          for (size_t i = 0; i < n; ++i) ga[i] += gout[i];
        }
        if (nb >= 0) {
          auto& gb = TapeT<S>::slot(grads, nb, nbn);
          if (broadcast) {
            S sum = 0;
            for (size_t i = 0; i < n; ++i) sum += gout[i];
            gb[0] += sum;
          } else {
            for (size_t i = 0; i < n; ++i) gb[i] += gout[i];
          }
        }
      });
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
  const bool broadcast = check_binary_dims(a, b, "sub");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<S> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[broadcast ? 0 : i];
  const int na = a.node(), nb = b.node();
  const size_t n = av.size(), nbn = bv.size();
  return finish(
      a.dims(), std::move(out), tape, any_tracked(a, b),
      [na, nb, n, nbn, broadcast](const std::vector<S>& gout, typename TapeT<S>::Grads& grads) {
        if (na >= 0) {
          auto& ga = TapeT<S>::slot(grads, na, n);
          for (size_t i = 0; i < n; ++i) ga[i] += gout[i];
        }
        if (nb >= 0) {
          auto& gb = TapeT<S>::slot(grads, nb, nbn);
          if (broadcast) {
            S sum = 0;
            for (size_t i = 0; i < n; ++i) sum += gout[i];
            gb[0] -= sum;
          } else {
            for (size_t i = 0; i < n; ++i) gb[i] -= gout[i];
          }
        }
      });
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
  const bool broadcast = check_binary_dims(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<S> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[broadcast ? 0 : i];
  const int na = a.node(), nb = b.node();
  TensorT<S> ac = a.detached(), bc = b.detached();
  return finish(a.dims(), std::move(out), tape, any_tracked(a, b),
                [na, nb, ac, bc, broadcast](const std::vector<S>& gout,
                                            typename TapeT<S>::Grads& grads) {
                  const auto& av2 = ac.values();
                  const auto& bv2 = bc.values();
                  if (na >= 0) {
                    auto& ga = TapeT<S>::slot(grads, na, av2.size());
                    for (size_t i = 0; i < av2.size(); ++i)
                      ga[i] += gout[i] * bv2[broadcast ? 0 : i];
                  }
                  if (nb >= 0) {
                    auto& gb = TapeT<S>::slot(grads, nb, bv2.size());
                    if (broadcast) {
                      S sum = 0;
                      for (size_t i = 0; i < av2.size(); ++i) sum += gout[i] * av2[i];
                      gb[0] += sum;
                    } else {
                      for (size_t i = 0; i < av2.size(); ++i) gb[i] += gout[i] * av2[i];
                    }
                  }
                });
}

template <class S>
TensorT<S> scalar_mul(const TensorT<S>& a, S scalar, TapeT<S>* tape) {
  const auto& av = a.values();
  std::vector<S> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * scalar;
  const int na = a.node();
  const size_t n = av.size();
  return finish(a.dims(), std::move(out), tape, any_tracked(a),
                [na, n, scalar](const std::vector<S>& gout, typename TapeT<S>::Grads& grads) {
                  if (na < 0) return;
                  auto& ga = TapeT<S>::slot(grads, na, n);
                  for (size_t i = 0; i < n; ++i) ga[i] += gout[i] * scalar;
                });
}

namespace {

// Shared shape for the pointwise unary ops: forward map plus a derivative
// expressed in terms of the saved input and output.
template <class S, class Fwd, class Drv>
TensorT<S> pointwise_unary(const TensorT<S>& a, TapeT<S>* tape, Fwd fwd, Drv derivative) {
  const auto& av = a.values();
  std::vector<S> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const int na = a.node();
  TensorT<S> saved_in = a.detached();
  std::vector<S> saved_out = out;
  return finish(a.dims(), std::move(out), tape, any_tracked(a),
                [na, saved_in, saved_out = std::move(saved_out), derivative](
                    const std::vector<S>& gout, typename TapeT<S>::Grads& grads) {
                  if (na < 0) return;
                  const auto& xv = saved_in.values();
                  auto& ga = TapeT<S>::slot(grads, na, xv.size());
                  for (size_t i = 0; i < xv.size(); ++i)
                    ga[i] += gout[i] * derivative(xv[i], saved_out[i]);
                });
}

template <class S>
S sigmoid_scalar(S x) {
  if (x >= 0) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
S softplus_scalar(S x) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  const S m = x > 0 ? x : S(0);
  return m + std::log1p(std::exp(-std::fabs(x)));
}

}  // namespace

template <class S>
TensorT<S> neg(const TensorT<S>& a, TapeT<S>* tape) {
  return pointwise_unary(
      a, tape, [](S x) { return -x; }, [](S, S) { return S(-1); });
}

template <class S>
TensorT<S> abs(const TensorT<S>& a, TapeT<S>* tape) {
  // Subgradient 0 at the origin.
  return pointwise_unary(
      a, tape, [](S x) { return std::fabs(x); },
      [](S x, S) { return x > 0 ? S(1) : (x < 0 ? S(-1) : S(0)); });
}

template <class S>
TensorT<S> log(const TensorT<S>& a, TapeT<S>* tape) {
  for (S v : a.values()) require_arg(v > 0, "log: non-positive input");
  return pointwise_unary(
      a, tape, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <class S>
TensorT<S> softplus(const TensorT<S>& a, TapeT<S>* tape) {
  return pointwise_unary(
      a, tape, [](S x) { return softplus_scalar(x); },
      [](S x, S) { return sigmoid_scalar(x); });
}

template <class S>
TensorT<S> relu(const TensorT<S>& a, TapeT<S>* tape) {
  return pointwise_unary(
      a, tape, [](S x) { return x > 0 ? x : S(0); },
      [](S x, S) { return x > 0 ? S(1) : S(0); });
}

template <class S>
TensorT<S> leaky_relu(const TensorT<S>& a, S alpha, TapeT<S>* tape) {
  return pointwise_unary(
      a, tape, [alpha](S x) { return x > 0 ? x : alpha * x; },
      [alpha](S x, S) { return x > 0 ? S(1) : alpha; });
}

template <class S>
TensorT<S> tanh(const TensorT<S>& a, TapeT<S>* tape) {
  return pointwise_unary(
      a, tape, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& a, TapeT<S>* tape) {
  return pointwise_unary(
      a, tape, [](S x) { return sigmoid_scalar(x); }, [](S, S y) { return y * (S(1) - y); });
}

template <class S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& kernel, const TensorT<S>& bias,
                  int stride, int padding, TapeT<S>* tape) {
  require_arg(input.rank() == 4, "conv2d: input must be [N,C,H,W]");
  require_arg(kernel.rank() == 4, "conv2d: kernel must be [out_ch,in_ch,kh,kw]");
  require_arg(stride >= 1, "conv2d: stride must be >= 1");
  require_arg(padding >= 0, "conv2d: padding must be >= 0");
  const int batch = input.dim(0), in_ch = input.dim(1), in_h = input.dim(2), in_w = input.dim(3);
  const int out_ch = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  require_arg(kernel.dim(1) == in_ch, "conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                                          " input channels, got " + std::to_string(in_ch));
  require_arg(bias.numel() == static_cast<size_t>(out_ch), "conv2d: bias size mismatch");
  require_arg(kh <= in_h + 2 * padding && kw <= in_w + 2 * padding,
              "conv2d: kernel larger than padded input");
  const int out_h = conv_output_extent(in_h, kh, stride, padding);
  const int out_w = conv_output_extent(in_w, kw, stride, padding);

  const auto& x = input.values();
  const auto& k = kernel.values();
  const auto& b = bias.values();
  std::vector<S> out(static_cast<size_t>(batch) * out_ch * out_h * out_w);
  for (int n = 0; n < batch; ++n) {
    for (int oc = 0; oc < out_ch; ++oc) {
      for (int oh = 0; oh < out_h; ++oh) {
        for (int ow = 0; ow < out_w; ++ow) {
          S acc = b[oc];
          for (int ic = 0; ic < in_ch; ++ic) {
            const S* krow = &k[((static_cast<size_t>(oc) * in_ch + ic) * kh) * kw];
            for (int fy = 0; fy < kh; ++fy) {
              const int ih = oh * stride - padding + fy;
              if (ih < 0 || ih >= in_h) continue;
              const S* xrow = &x[((static_cast<size_t>(n) * in_ch + ic) * in_h + ih) * in_w];
              for (int fx = 0; fx < kw; ++fx) {
                const int iw = ow * stride - padding + fx;
                if (iw < 0 || iw >= in_w) continue;
                acc += xrow[iw] * krow[fy * kw + fx];
              }
            }
          }
          out[((static_cast<size_t>(n) * out_ch + oc) * out_h + oh) * out_w + ow] = acc;
        }
      }
    }
  }

  const int nx = input.node(), nk = kernel.node(), nb = bias.node();
  TensorT<S> xin = input.detached(), kin = kernel.detached();
  return finish(
      {batch, out_ch, out_h, out_w}, std::move(out), tape, any_tracked(input, kernel, bias),
      [nx, nk, nb, xin, kin, stride, padding, batch, in_ch, in_h, in_w, out_ch, kh, kw, out_h,
       out_w](const std::vector<S>& gout, typename TapeT<S>::Grads& grads) {
        const auto& x = xin.values();
        const auto& k = kin.values();
        std::vector<S>* gx = nx >= 0 ? &TapeT<S>::slot(grads, nx, x.size()) : nullptr;
        std::vector<S>* gk = nk >= 0 ? &TapeT<S>::slot(grads, nk, k.size()) : nullptr;
        std::vector<S>* gb =
            nb >= 0 ? &TapeT<S>::slot(grads, nb, static_cast<size_t>(out_ch)) : nullptr;
        for (int n = 0; n < batch; ++n) {
          for (int oc = 0; oc < out_ch; ++oc) {
            for (int oh = 0; oh < out_h; ++oh) {
              for (int ow = 0; ow < out_w; ++ow) {
                const S g =
                    gout[((static_cast<size_t>(n) * out_ch + oc) * out_h + oh) * out_w + ow];
                if (gb) (*gb)[oc] += g;
                if (!gx && !gk) continue;
                for (int ic = 0; ic < in_ch; ++ic) {
                  const size_t kbase = (static_cast<size_t>(oc) * in_ch + ic) * kh * kw;
                  const size_t xbase = (static_cast<size_t>(n) * in_ch + ic) * in_h * in_w;
                  for (int fy = 0; fy < kh; ++fy) {
                    const int ih = oh * stride - padding + fy;
                    if (ih < 0 || ih >= in_h) continue;
                    for (int fx = 0; fx < kw; ++fx) {
                      const int iw = ow * stride - padding + fx;
                      if (iw < 0 || iw >= in_w) continue;
                      const size_t xi = xbase + static_cast<size_t>(ih) * in_w + iw;
                      const size_t ki = kbase + static_cast<size_t>(fy) * kw + fx;
                      if (gx) (*gx)[xi] += g * k[ki];
                      if (gk) (*gk)[ki] += g * x[xi];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

template <class S>
TensorT<S> conv_transpose2d(const TensorT<S>& input, const TensorT<S>& kernel,
                            const TensorT<S>& bias, int stride, int padding, TapeT<S>* tape) {
  require_arg(input.rank() == 4, "conv_transpose2d: input must be [N,C,H,W]");
  require_arg(kernel.rank() == 4, "conv_transpose2d: kernel must be [in_ch,out_ch,kh,kw]");
  require_arg(stride >= 1, "conv_transpose2d: stride must be >= 1");
  require_arg(padding >= 0, "conv_transpose2d: padding must be >= 0");
  const int batch = input.dim(0), in_ch = input.dim(1), in_h = input.dim(2), in_w = input.dim(3);
  const int out_ch = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  require_arg(kernel.dim(0) == in_ch, "conv_transpose2d: kernel expects " +
                                          std::to_string(kernel.dim(0)) +
                                          " input channels, got " + std::to_string(in_ch));
  require_arg(bias.numel() == static_cast<size_t>(out_ch), "conv_transpose2d: bias size mismatch");
  const int out_h = conv_transpose_output_extent(in_h, kh, stride, padding);
  const int out_w = conv_transpose_output_extent(in_w, kw, stride, padding);
  require_arg(out_h >= 1 && out_w >= 1, "conv_transpose2d: non-positive output extent");

  const auto& x = input.values();
  const auto& k = kernel.values();
  const auto& b = bias.values();
  std::vector<S> out(static_cast<size_t>(batch) * out_ch * out_h * out_w);
  for (int n = 0; n < batch; ++n)
    for (int oc = 0; oc < out_ch; ++oc) {
      S* orow = &out[(static_cast<size_t>(n) * out_ch + oc) * out_h * out_w];
      for (int i = 0; i < out_h * out_w; ++i) orow[i] = b[oc];
    }
  for (int n = 0; n < batch; ++n) {
    for (int ic = 0; ic < in_ch; ++ic) {
      const S* xplane = &x[(static_cast<size_t>(n) * in_ch + ic) * in_h * in_w];
      for (int oc = 0; oc < out_ch; ++oc) {
        const S* kplane = &k[(static_cast<size_t>(ic) * out_ch + oc) * kh * kw];
        S* oplane = &out[(static_cast<size_t>(n) * out_ch + oc) * out_h * out_w];
        for (int ih = 0; ih < in_h; ++ih) {
          for (int iw = 0; iw < in_w; ++iw) {
            const S v = xplane[ih * in_w + iw];
            for (int fy = 0; fy < kh; ++fy) {
              const int oh = ih * stride - padding + fy;
              if (oh < 0 || oh >= out_h) continue;
              for (int fx = 0; fx < kw; ++fx) {
                const int ow = iw * stride - padding + fx;
                if (ow < 0 || ow >= out_w) continue;
                oplane[oh * out_w + ow] += v * kplane[fy * kw + fx];
              }
            }
          }
        }
      }
    }
  }

  const int nx = input.node(), nk = kernel.node(), nb = bias.node();
  TensorT<S> xin = input.detached(), kin = kernel.detached();
  return finish(
      {batch, out_ch, out_h, out_w}, std::move(out), tape, any_tracked(input, kernel, bias),
      [nx, nk, nb, xin, kin, stride, padding, batch, in_ch, in_h, in_w, out_ch, kh, kw, out_h,
       out_w](const std::vector<S>& gout, typename TapeT<S>::Grads& grads) {
        const auto& x = xin.values();
        const auto& k = kin.values();
        std::vector<S>* gx = nx >= 0 ? &TapeT<S>::slot(grads, nx, x.size()) : nullptr;
        std::vector<S>* gk = nk >= 0 ? &TapeT<S>::slot(grads, nk, k.size()) : nullptr;
        std::vector<S>* gb =
            nb >= 0 ? &TapeT<S>::slot(grads, nb, static_cast<size_t>(out_ch)) : nullptr;
        if (gb) {
          for (int n = 0; n < batch; ++n)
            for (int oc = 0; oc < out_ch; ++oc) {
              const S* gplane = &gout[(static_cast<size_t>(n) * out_ch + oc) * out_h * out_w];
              for (int i = 0; i < out_h * out_w; ++i) (*gb)[oc] += gplane[i];
            }
        }
        if (!gx && !gk) return;
        for (int n = 0; n < batch; ++n) {
          for (int ic = 0; ic < in_ch; ++ic) {
            const S* xplane = &x[(static_cast<size_t>(n) * in_ch + ic) * in_h * in_w];
            S* gxplane =
                gx ? &(*gx)[(static_cast<size_t>(n) * in_ch + ic) * in_h * in_w] : nullptr;
            for (int oc = 0; oc < out_ch; ++oc) {
              const S* kplane = &k[(static_cast<size_t>(ic) * out_ch + oc) * kh * kw];
              S* gkplane = gk ? &(*gk)[(static_cast<size_t>(ic) * out_ch + oc) * kh * kw] : nullptr;
              const S* gplane = &gout[(static_cast<size_t>(n) * out_ch + oc) * out_h * out_w];
              for (int ih = 0; ih < in_h; ++ih) {
                for (int iw = 0; iw < in_w; ++iw) {
                  const S v = xplane[ih * in_w + iw];
                  S acc = 0;
                  for (int fy = 0; fy < kh; ++fy) {
                    const int oh = ih * stride - padding + fy;
                    if (oh < 0 || oh >= out_h) continue;
                    for (int fx = 0; fx < kw; ++fx) {
                      const int ow = iw * stride - padding + fx;
                      if (ow < 0 || ow >= out_w) continue;
                      const S g = gplane[oh * out_w + ow];
                      acc += g * kplane[fy * kw + fx];
                      if (gkplane) gkplane[fy * kw + fx] += g * v;
                    }
                  }
                  if (gxplane) gxplane[ih * in_w + iw] += acc;
                }
              }
            }
          }
        }
      });
}

template <class S>
TensorT<S> channel_norm(const TensorT<S>& input, const TensorT<S>& gain, const TensorT<S>& shift,
                        NormMode mode, RunningStatsT<S>* running, TapeT<S>* tape, S momentum,
                        S epsilon) {
  require_arg(input.rank() == 4, "channel_norm: input must be [N,C,H,W]");
  const int batch = input.dim(0), channels = input.dim(1);
  const int plane = input.dim(2) * input.dim(3);
  require_arg(gain.numel() == static_cast<size_t>(channels), "channel_norm: gain size mismatch");
  require_arg(shift.numel() == static_cast<size_t>(channels), "channel_norm: shift size mismatch");

  const auto& x = input.values();
  const auto& g = gain.values();
  const auto& s = shift.values();
  const size_t count = static_cast<size_t>(batch) * plane;

  std::vector<S> mean(channels), inv_std(channels);
  if (mode == NormMode::train) {
    for (int c = 0; c < channels; ++c) {
      double sum = 0;
      for (int n = 0; n < batch; ++n) {
        const S* row = &x[(static_cast<size_t>(n) * channels + c) * plane];
        for (int i = 0; i < plane; ++i) sum += row[i];
      }
      const double mu = sum / static_cast<double>(count);
      double sq = 0;
      for (int n = 0; n < batch; ++n) {
        const S* row = &x[(static_cast<size_t>(n) * channels + c) * plane];
        for (int i = 0; i < plane; ++i) {
          const double d = row[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = static_cast<S>(mu);
      inv_std[c] = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));
      if (running != nullptr) {
        if (running->mean.empty()) {
          running->mean.assign(channels, S(0));
          running->var.assign(channels, S(1));
        }
        running->mean[c] = (S(1) - momentum) * running->mean[c] + momentum * static_cast<S>(mu);
        running->var[c] = (S(1) - momentum) * running->var[c] + momentum * static_cast<S>(var);
      }
    }
  } else {
    require_arg(running != nullptr && running->mean.size() == static_cast<size_t>(channels),
                "channel_norm: eval mode needs populated running stats");
    for (int c = 0; c < channels; ++c) {
      mean[c] = running->mean[c];
      inv_std[c] =
          static_cast<S>(1.0 / std::sqrt(static_cast<double>(running->var[c]) +
                                         static_cast<double>(epsilon)));
    }
  }

  std::vector<S> xhat(x.size());
  std::vector<S> out(x.size());
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < channels; ++c) {
      const size_t base = (static_cast<size_t>(n) * channels + c) * plane;
      for (int i = 0; i < plane; ++i) {
        const S h = (x[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = g[c] * h + s[c];
      }
    }
  }

  const int nx = input.node(), ng = gain.node(), ns = shift.node();
  const bool train_stats = mode == NormMode::train;
  TensorT<S> gin = gain.detached();
  return finish(
      input.dims(), std::move(out), tape, any_tracked(input, gain, shift),
      [nx, ng, ns, gin, xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels,
       plane, count, train_stats](const std::vector<S>& gout, typename TapeT<S>::Grads& grads) {
        const auto& gv = gin.values();
        std::vector<S>* gx = nx >= 0 ? &TapeT<S>::slot(grads, nx, xhat.size()) : nullptr;
        std::vector<S>* gg =
            ng >= 0 ? &TapeT<S>::slot(grads, ng, static_cast<size_t>(channels)) : nullptr;
        std::vector<S>* gs =
            ns >= 0 ? &TapeT<S>::slot(grads, ns, static_cast<size_t>(channels)) : nullptr;
        for (int c = 0; c < channels; ++c) {
          double sum_g = 0, sum_gh = 0;
          for (int n = 0; n < batch; ++n) {
            const size_t base = (static_cast<size_t>(n) * channels + c) * plane;
            for (int i = 0; i < plane; ++i) {
              sum_g += gout[base + i];
              sum_gh += static_cast<double>(gout[base + i]) * xhat[base + i];
            }
          }
          if (gg) (*gg)[c] += static_cast<S>(sum_gh);
          if (gs) (*gs)[c] += static_cast<S>(sum_g);
          if (!gx) continue;
          const S scale = gv[c] * inv_std[c];
          if (train_stats) {
            // Batch statistics depend on the input, so their derivatives
            // contribute the centering terms.
            const S mean_g = static_cast<S>(sum_g / static_cast<double>(count));
            const S mean_gh = static_cast<S>(sum_gh / static_cast<double>(count));
            for (int n = 0; n < batch; ++n) {
              const size_t base = (static_cast<size_t>(n) * channels + c) * plane;
              for (int i = 0; i < plane; ++i) {
                (*gx)[base + i] +=
                    scale * (gout[base + i] - mean_g - xhat[base + i] * mean_gh);
              }
            }
          } else {
            for (int n = 0; n < batch; ++n) {
              const size_t base = (static_cast<size_t>(n) * channels + c) * plane;
              for (int i = 0; i < plane; ++i) (*gx)[base + i] += scale * gout[base + i];
            }
          }
        }
      });
}

template <class S>
TensorT<S> dropout(const TensorT<S>& input, double p, Rng& rng, bool active, TapeT<S>* tape) {
  require_arg(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (!active || p == 0.0) return input;
  const auto& x = input.values();
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  std::vector<S> mask(x.size());
  std::vector<S> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.next_uniform() >= p ? keep_scale : S(0);
    out[i] = x[i] * mask[i];
  }
  const int nx = input.node();
  return finish(input.dims(), std::move(out), tape, any_tracked(input),
                [nx, mask = std::move(mask)](const std::vector<S>& gout,
                                             typename TapeT<S>::Grads& grads) {
                  if (nx < 0) return;
                  auto& gx = TapeT<S>::slot(grads, nx, mask.size());
                  for (size_t i = 0; i < mask.size(); ++i) gx[i] += gout[i] * mask[i];
                });
}

template <class S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b, TapeT<S>* tape) {
  require_arg(a.rank() == 4 && b.rank() == 4, "concat_channels: inputs must be [N,C,H,W]");
  require_arg(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
              "concat_channels: batch/spatial dims mismatch");
  const int batch = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const int plane = a.dim(2) * a.dim(3);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<S> out(static_cast<size_t>(batch) * (ca + cb) * plane);
  for (int n = 0; n < batch; ++n) {
    const size_t obase = static_cast<size_t>(n) * (ca + cb) * plane;
    std::copy(av.begin() + static_cast<size_t>(n) * ca * plane,
              av.begin() + static_cast<size_t>(n + 1) * ca * plane, out.begin() + obase);
    std::copy(bv.begin() + static_cast<size_t>(n) * cb * plane,
              bv.begin() + static_cast<size_t>(n + 1) * cb * plane,
              out.begin() + obase + static_cast<size_t>(ca) * plane);
  }
  const int na = a.node(), nb = b.node();
  const size_t an = av.size(), bn = bv.size();
  return finish({batch, ca + cb, a.dim(2), a.dim(3)}, std::move(out), tape, any_tracked(a, b),
                [na, nb, an, bn, batch, ca, cb, plane](const std::vector<S>& gout,
                                                       typename TapeT<S>::Grads& grads) {
                  std::vector<S>* ga = na >= 0 ? &TapeT<S>::slot(grads, na, an) : nullptr;
                  std::vector<S>* gb = nb >= 0 ? &TapeT<S>::slot(grads, nb, bn) : nullptr;
                  for (int n = 0; n < batch; ++n) {
                    const size_t obase = static_cast<size_t>(n) * (ca + cb) * plane;
                    if (ga) {
                      const size_t abase = static_cast<size_t>(n) * ca * plane;
                      for (size_t i = 0; i < static_cast<size_t>(ca) * plane; ++i)
                        (*ga)[abase + i] += gout[obase + i];
                    }
                    if (gb) {
                      const size_t bbase = static_cast<size_t>(n) * cb * plane;
                      const size_t off = obase + static_cast<size_t>(ca) * plane;
                      for (size_t i = 0; i < static_cast<size_t>(cb) * plane; ++i)
                        (*gb)[bbase + i] += gout[off + i];
                    }
                  }
                });
}

template <class S>
TensorT<S> slice_channels(const TensorT<S>& input, int begin, int end, TapeT<S>* tape) {
  require_arg(input.rank() == 4, "slice_channels: input must be [N,C,H,W]");
  const int channels = input.dim(1);
  require_arg(begin >= 0 && begin <= end && end <= channels, "slice_channels: bad channel range");
  const int batch = input.dim(0);
  const int plane = input.dim(2) * input.dim(3);
  const int width = end - begin;
  const auto& x = input.values();
  std::vector<S> out(static_cast<size_t>(batch) * width * plane);
  for (int n = 0; n < batch; ++n) {
    const size_t src = (static_cast<size_t>(n) * channels + begin) * plane;
    std::copy(x.begin() + src, x.begin() + src + static_cast<size_t>(width) * plane,
              out.begin() + static_cast<size_t>(n) * width * plane);
  }
  const int nx = input.node();
  const size_t xn = x.size();
  return finish({batch, width, input.dim(2), input.dim(3)}, std::move(out), tape,
                any_tracked(input),
                [nx, xn, batch, channels, begin, width, plane](const std::vector<S>& gout,
                                                               typename TapeT<S>::Grads& grads) {
                  if (nx < 0) return;
                  auto& gx = TapeT<S>::slot(grads, nx, xn);
                  for (int n = 0; n < batch; ++n) {
                    const size_t dst = (static_cast<size_t>(n) * channels + begin) * plane;
                    const size_t src = static_cast<size_t>(n) * width * plane;
                    for (size_t i = 0; i < static_cast<size_t>(width) * plane; ++i)
                      gx[dst + i] += gout[src + i];
                  }
                });
}

template <class S>
TensorT<S> reduce_mean(const TensorT<S>& input, TapeT<S>* tape) {
  const auto& x = input.values();
  require_arg(!x.empty(), "reduce_mean: empty tensor");
  double sum = 0;
  for (S v : x) sum += v;
  const S mean = static_cast<S>(sum / static_cast<double>(x.size()));
  const int nx = input.node();
  const size_t n = x.size();
  return finish({1}, std::vector<S>{mean}, tape, any_tracked(input),
                [nx, n](const std::vector<S>& gout, typename TapeT<S>::Grads& grads) {
                  if (nx < 0) return;
                  auto& gx = TapeT<S>::slot(grads, nx, n);
                  const S g = gout[0] / static_cast<S>(n);
                  for (size_t i = 0; i < n; ++i) gx[i] += g;
                });
}

double grad_check(const GradCheckFn& fn, const std::vector<TensorT<double>>& inputs) {
  TapeT<double> tape;
  std::vector<TensorT<double>> tracked;
  tracked.reserve(inputs.size());
  for (const auto& t : inputs) tracked.push_back(tape.leaf(t));
  const TensorT<double> out = fn(tracked, tape);
  require_arg(out.numel() == 1, "grad_check: function output must be scalar");
  const GradientMapT<double> grads = backward(out, tape);

  const auto eval = [&fn](const std::vector<TensorT<double>>& xs) {
    TapeT<double> scratch;
    const TensorT<double> y = fn(xs, scratch);
    require_arg(y.numel() == 1, "grad_check: function output must be scalar");
    return y.value();
  };

  double max_rel_err = 0.0;
  std::vector<TensorT<double>> probe;
  for (size_t which = 0; which < inputs.size(); ++which) {
    const TensorT<double> analytic = grads.grad_or_zero(tracked[which]);
    const auto& base = inputs[which].values();
    for (size_t i = 0; i < base.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::fabs(base[i]));
      probe = inputs;
      std::vector<double> bumped = base;
      bumped[i] = base[i] + h;
      probe[which] = TensorT<double>(inputs[which].dims(), bumped);
      const double up = eval(probe);
      bumped[i] = base[i] - h;
      probe[which] = TensorT<double>(inputs[which].dims(), std::move(bumped));
      const double down = eval(probe);
      const double fd = (up - down) / (2.0 * h);
      const double ad = analytic.at(i);
      const double denom = std::max(1e-8, std::fabs(ad) + std::fabs(fd));
      max_rel_err = std::max(max_rel_err, std::fabs(ad - fd) / denom);
    }
  }
  return max_rel_err;
}

#define ASEG_INSTANTIATE_OPS(S)                                                                  \
  template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);                   \
  template TensorT<S> sub<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);                   \
  template TensorT<S> mul<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);                   \
  template TensorT<S> scalar_mul<S>(const TensorT<S>&, S, TapeT<S>*);                           \
  template TensorT<S> neg<S>(const TensorT<S>&, TapeT<S>*);                                      \
  template TensorT<S> abs<S>(const TensorT<S>&, TapeT<S>*);                                      \
  template TensorT<S> log<S>(const TensorT<S>&, TapeT<S>*);                                      \
  template TensorT<S> softplus<S>(const TensorT<S>&, TapeT<S>*);                                 \
  template TensorT<S> relu<S>(const TensorT<S>&, TapeT<S>*);                                     \
  template TensorT<S> leaky_relu<S>(const TensorT<S>&, S, TapeT<S>*);                            \
  template TensorT<S> tanh<S>(const TensorT<S>&, TapeT<S>*);                                     \
  template TensorT<S> sigmoid<S>(const TensorT<S>&, TapeT<S>*);                                  \
  template TensorT<S> conv2d<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&, int,    \
                                int, TapeT<S>*);                                                 \
  template TensorT<S> conv_transpose2d<S>(const TensorT<S>&, const TensorT<S>&,                  \
                                          const TensorT<S>&, int, int, TapeT<S>*);               \
  template TensorT<S> channel_norm<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,   \
                                      NormMode, RunningStatsT<S>*, TapeT<S>*, S, S);             \
  template TensorT<S> dropout<S>(const TensorT<S>&, double, Rng&, bool, TapeT<S>*);              \
  template TensorT<S> concat_channels<S>(const TensorT<S>&, const TensorT<S>&, TapeT<S>*);       \
  template TensorT<S> slice_channels<S>(const TensorT<S>&, int, int, TapeT<S>*);                 \
  template TensorT<S> reduce_mean<S>(const TensorT<S>&, TapeT<S>*);

ASEG_INSTANTIATE_OPS(float)
ASEG_INSTANTIATE_OPS(double)

#undef ASEG_INSTANTIATE_OPS

}  // namespace aseg
