#include "choreo/nn/ops.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "choreo/error.h"

namespace choreo::nn {

namespace {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<Matrix<S>>;
template <typename S>
using MapCM = Eigen::Map<const Matrix<S>>;

template <typename S>
MapCM<S> as_matrix(const BasicTensor<S>& t) {
  return MapCM<S>(t.data(), t.rows(), t.cols());
}

template <typename S>
MapM<S> as_matrix(BasicTensor<S>& t) {
  return MapM<S>(t.data(), t.rows(), t.cols());
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_rank(const char* op, const Shape& s, int rank) {
  if (static_cast<int>(s.size()) != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

constexpr double kProbClamp = 1e-7;

template <typename S>
S sigmoid_value(S z) {
  if (z >= 0) return S(1) / (S(1) + std::exp(-z));
  const S e = std::exp(z);
  return e / (S(1) + e);
}

/// Shared body of elementwise unary ops: forward f(x), backward uses y and x.
template <typename S, typename F, typename D>
Var unary(BasicTape<S>& tape, Var x, F f, D dfdx) {
  const BasicTensor<S>& xv = tape.value(x);
  BasicTensor<S> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return tape.record(std::move(out), {x}, [x, dfdx](BasicTape<S>& t, int self) {
    if (!t.requires_grad(x)) return;
    const BasicTensor<S>& g = t.grad(Var{self});
    const BasicTensor<S>& y = t.value(Var{self});
    const BasicTensor<S>& xv = t.value(x);
    BasicTensor<S>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], y[i]);
  });
}

}  // namespace

template <typename S>
Var matmul(BasicTape<S>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_mismatch("matmul", av.shape(), bv.shape());
  BasicTensor<S> out({av.dim(0), bv.dim(1)});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  return tape.record(std::move(out), {a, b}, [a, b](BasicTape<S>& t, int self) {
    const auto g = as_matrix(t.grad(Var{self}));
    if (t.requires_grad(a)) as_matrix(t.grad(a)).noalias() += g * as_matrix(t.value(b)).transpose();
    if (t.requires_grad(b)) as_matrix(t.grad(b)).noalias() += as_matrix(t.value(a)).transpose() * g;
  });
}

template <typename S>
Var dense(BasicTape<S>& tape, Var x, Var w, Var b) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(w);
  const auto& bv = tape.value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(0)) shape_mismatch("dense", xv.shape(), wv.shape());
  if (bv.rank() != 1 || bv.dim(0) != wv.dim(1)) shape_mismatch("dense bias", wv.shape(), bv.shape());
  BasicTensor<S> out({xv.dim(0), wv.dim(1)});
  auto o = as_matrix(out);
  o.noalias() = as_matrix(xv) * as_matrix(wv);
  const auto bias = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(bv.data(), bv.dim(0));
  o.rowwise() += bias;
  return tape.record(std::move(out), {x, w, b}, [x, w, b](BasicTape<S>& t, int self) {
    const auto g = as_matrix(t.grad(Var{self}));
    if (t.requires_grad(x)) as_matrix(t.grad(x)).noalias() += g * as_matrix(t.value(w)).transpose();
    if (t.requires_grad(w)) as_matrix(t.grad(w)).noalias() += as_matrix(t.value(x)).transpose() * g;
    if (t.requires_grad(b)) {
      auto& gb = t.grad(b);
      Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(gb.data(), gb.dim(0)) += g.colwise().sum();
    }
  });
}

template <typename S>
Var add(BasicTape<S>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.shape() != bv.shape()) shape_mismatch("add", av.shape(), bv.shape());
  BasicTensor<S> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](BasicTape<S>& t, int self) {
    const auto& g = t.grad(Var{self});
    for (Var p : {a, b}) {
      if (!t.requires_grad(p)) continue;
      auto& gp = t.grad(p);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

template <typename S>
Var add_bias(BasicTape<S>& tape, Var x, Var b) {
  const auto& xv = tape.value(x);
  const auto& bv = tape.value(b);
  if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) shape_mismatch("add_bias", xv.shape(), bv.shape());
  BasicTensor<S> out = xv;
  const int rows = xv.dim(0), cols = xv.dim(1);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) += bv[static_cast<std::size_t>(c)];
  return tape.record(std::move(out), {x, b}, [x, b, rows, cols](BasicTape<S>& t, int self) {
    const auto& g = t.grad(Var{self});
    if (t.requires_grad(x)) {
      auto& gx = t.grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad(b);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) gb[static_cast<std::size_t>(c)] += g.at(r, c);
    }
  });
}

template <typename S>
Var mul(BasicTape<S>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.shape() != bv.shape()) shape_mismatch("mul", av.shape(), bv.shape());
  BasicTensor<S> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](BasicTape<S>& t, int self) {
    const auto& g = t.grad(Var{self});
    if (t.requires_grad(a)) {
      auto& ga = t.grad(a);
      const auto& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad(b);
      const auto& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename S>
Var scale(BasicTape<S>& tape, Var x, S factor) {
  return unary(
      tape, x, [factor](S v) { return v * factor; }, [factor](S, S) { return factor; });
}

template <typename S>
Var relu(BasicTape<S>& tape, Var x) {
  return unary(
      tape, x, [](S v) { return v > S(0) ? v : S(0); }, [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
Var sigmoid(BasicTape<S>& tape, Var x) {
  return unary(
      tape, x, [](S v) { return sigmoid_value(v); }, [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Var tanh(BasicTape<S>& tape, Var x) {
  return unary(
      tape, x, [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Var softmax(BasicTape<S>& tape, Var x) {
  const auto& xv = tape.value(x);
  if (xv.rank() != 2) require_rank("softmax", xv.shape(), 2);
  BasicTensor<S> out(xv.shape());
  const int rows = xv.dim(0), cols = xv.dim(1);
  for (int r = 0; r < rows; ++r) {
    S mx = -std::numeric_limits<S>::infinity();
    for (int c = 0; c < cols; ++c) mx = std::max(mx, xv.at(r, c));
    double total = 0.0;
    for (int c = 0; c < cols; ++c) {
      out.at(r, c) = std::exp(xv.at(r, c) - mx);
      total += out.at(r, c);
    }
    for (int c = 0; c < cols; ++c) out.at(r, c) = static_cast<S>(out.at(r, c) / total);
  }
  return tape.record(std::move(out), {x}, [x, rows, cols](BasicTape<S>& t, int self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.grad(Var{self});
    const auto& y = t.value(Var{self});
    auto& gx = t.grad(x);
    for (int r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += static_cast<double>(g.at(r, c)) * y.at(r, c);
      for (int c = 0; c < cols; ++c) gx.at(r, c) += y.at(r, c) * static_cast<S>(g.at(r, c) - dot);
    }
  });
}

template <typename S>
Var dropout(BasicTape<S>& tape, Var x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw Error("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  const auto& xv = tape.value(x);
  BasicTensor<S> mask(xv.shape());
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < p ? S(0) : keep_scale;
  BasicTensor<S> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return tape.record(std::move(out), {x}, [x, mask = std::move(mask)](BasicTape<S>& t, int self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.grad(Var{self});
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

template <typename S>
Var conv2d(BasicTape<S>& tape, Var x, Var kernels, Var bias) {
  const auto& xv = tape.value(x);
  const auto& kv = tape.value(kernels);
  const auto& bv = tape.value(bias);
  require_rank("conv2d input", xv.shape(), 4);
  require_rank("conv2d kernels", kv.shape(), 4);
  const int batch = xv.dim(0), in_ch = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int out_ch = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
  if (kv.dim(1) != in_ch || kh > h || kw > w) shape_mismatch("conv2d", xv.shape(), kv.shape());
  if (bv.rank() != 1 || bv.dim(0) != out_ch) shape_mismatch("conv2d bias", kv.shape(), bv.shape());
  const int oh = h - kh + 1, ow = w - kw + 1;

  BasicTensor<S> out({batch, out_ch, oh, ow});
  const S* xd = xv.data();
  const S* kd = kv.data();
  S* od = out.data();
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < out_ch; ++o) {
      S* oplane = od + (static_cast<std::size_t>(n) * out_ch + o) * oh * ow;
      std::fill(oplane, oplane + oh * ow, bv[static_cast<std::size_t>(o)]);
      for (int c = 0; c < in_ch; ++c) {
        const S* xplane = xd + (static_cast<std::size_t>(n) * in_ch + c) * h * w;
        for (int i = 0; i < kh; ++i) {
          for (int j = 0; j < kw; ++j) {
            const S kval = kd[((static_cast<std::size_t>(o) * in_ch + c) * kh + i) * kw + j];
            for (int r = 0; r < oh; ++r) {
              S* __restrict orow = oplane + r * ow;
              const S* __restrict xrow = xplane + (r + i) * w + j;
              for (int col = 0; col < ow; ++col) orow[col] += kval * xrow[col];
            }
          }
        }
      }
    }
  }

  return tape.record(std::move(out), {x, kernels, bias},
                     [=](BasicTape<S>& t, int self) {
                       const S* gd = t.grad(Var{self}).data();
                       const S* xd = t.value(x).data();
                       const S* kd = t.value(kernels).data();
                       if (t.requires_grad(bias)) {
                         auto& gb = t.grad(bias);
                         for (int n = 0; n < batch; ++n)
                           for (int o = 0; o < out_ch; ++o) {
                             const S* gplane = gd + (static_cast<std::size_t>(n) * out_ch + o) * oh * ow;
                             double acc = 0.0;
                             for (int k = 0; k < oh * ow; ++k) acc += gplane[k];
                             gb[static_cast<std::size_t>(o)] += static_cast<S>(acc);
                           }
                       }
                       if (t.requires_grad(kernels)) {
                         S* gk = t.grad(kernels).data();
                         std::vector<S> lanes(static_cast<std::size_t>(ow));
                         for (int o = 0; o < out_ch; ++o)
                           for (int c = 0; c < in_ch; ++c)
                             for (int i = 0; i < kh; ++i)
                               for (int j = 0; j < kw; ++j) {
                                 std::fill(lanes.begin(), lanes.end(), S(0));
                                 S* __restrict lane = lanes.data();
                                 for (int n = 0; n < batch; ++n) {
                                   const S* gplane = gd + (static_cast<std::size_t>(n) * out_ch + o) * oh * ow;
                                   const S* xplane = xd + (static_cast<std::size_t>(n) * in_ch + c) * h * w;
                                   for (int r = 0; r < oh; ++r) {
                                     const S* __restrict grow = gplane + r * ow;
                                     const S* __restrict xrow = xplane + (r + i) * w + j;
                                     for (int col = 0; col < ow; ++col) lane[col] += grow[col] * xrow[col];
                                   }
                                 }
                                 double acc = 0.0;
                                 for (int col = 0; col < ow; ++col) acc += lane[col];
                                 gk[((static_cast<std::size_t>(o) * in_ch + c) * kh + i) * kw + j] += static_cast<S>(acc);
                               }
                       }
                       if (t.requires_grad(x)) {
                         S* gx = t.grad(x).data();
                         for (int n = 0; n < batch; ++n)
                           for (int o = 0; o < out_ch; ++o) {
                             const S* gplane = gd + (static_cast<std::size_t>(n) * out_ch + o) * oh * ow;
                             for (int c = 0; c < in_ch; ++c) {
                               S* xplane = gx + (static_cast<std::size_t>(n) * in_ch + c) * h * w;
                               for (int i = 0; i < kh; ++i)
                                 for (int j = 0; j < kw; ++j) {
                                   const S kval = kd[((static_cast<std::size_t>(o) * in_ch + c) * kh + i) * kw + j];
                                   for (int r = 0; r < oh; ++r) {
                                     const S* __restrict grow = gplane + r * ow;
                                     S* __restrict xrow = xplane + (r + i) * w + j;
                                     for (int col = 0; col < ow; ++col) xrow[col] += kval * grow[col];
                                   }
                                 }
                             }
                           }
                       }
                     });
}

template <typename S>
Var maxpool_freq(BasicTape<S>& tape, Var x, int width, int stride) {
  const auto& xv = tape.value(x);
  require_rank("maxpool_freq", xv.shape(), 4);
  if (width < 1 || stride < 1) throw Error("maxpool_freq: width and stride must be positive");
  const int planes = xv.dim(0) * xv.dim(1) * xv.dim(2);
  const int w = xv.dim(3);
  if (w < width) throw ShapeError("maxpool_freq: width " + std::to_string(width) + " exceeds input " + shape_string(xv.shape()));
  const int ow = (w - width) / stride + 1;
  BasicTensor<S> out({xv.dim(0), xv.dim(1), xv.dim(2), ow});
  std::vector<int> argmax(out.size());
  for (int p = 0; p < planes; ++p) {
    const S* row = xv.data() + static_cast<std::size_t>(p) * w;
    for (int j = 0; j < ow; ++j) {
      int best = j * stride;
      for (int k = 1; k < width; ++k)
        if (row[j * stride + k] > row[best]) best = j * stride + k;
      const std::size_t at = static_cast<std::size_t>(p) * ow + j;
      out[at] = row[best];
      argmax[at] = p * w + best;
    }
  }
  return tape.record(std::move(out), {x}, [x, argmax = std::move(argmax)](BasicTape<S>& t, int self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.grad(Var{self});
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[static_cast<std::size_t>(argmax[i])] += g[i];
  });
}

template <typename S>
Var reshape(BasicTape<S>& tape, Var x, Shape shape) {
  BasicTensor<S> out = tape.value(x);
  out.reshape(std::move(shape));
  return tape.record(std::move(out), {x}, [x](BasicTape<S>& t, int self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.grad(Var{self});
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename S>
Var concat_cols(BasicTape<S>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_cols of nothing");
  const int rows = tape.value(parts[0]).rows();
  std::vector<int> widths;
  int total = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    if (v.rank() != 2 || v.dim(0) != rows) shape_mismatch("concat_cols", tape.value(parts[0]).shape(), v.shape());
    widths.push_back(v.dim(1));
    total += v.dim(1);
  }
  BasicTensor<S> out({rows, total});
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = tape.value(parts[k]);
    for (int r = 0; r < rows; ++r) std::copy_n(v.data() + static_cast<std::size_t>(r) * widths[k], widths[k], &out.at(r, offset));
    offset += widths[k];
  }
  return tape.record(std::move(out), parts, [parts, widths, rows](BasicTape<S>& t, int self) {
    const auto& g = t.grad(Var{self});
    int offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (t.requires_grad(parts[k])) {
        auto& gp = t.grad(parts[k]);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < widths[k]; ++c) gp.at(r, c) += g.at(r, offset + c);
      }
      offset += widths[k];
    }
  });
}

template <typename S>
Var slice_cols(BasicTape<S>& tape, Var x, int start, int count) {
  const auto& xv = tape.value(x);
  if (xv.rank() != 2 || start < 0 || count < 0 || start + count > xv.dim(1)) {
    throw ShapeError("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of " + shape_string(xv.shape()));
  }
  const int rows = xv.dim(0);
  BasicTensor<S> out({rows, count});
  for (int r = 0; r < rows; ++r) std::copy_n(&xv.at(r, start), count, &out.at(r, 0));
  return tape.record(std::move(out), {x}, [x, rows, start, count](BasicTape<S>& t, int self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.grad(Var{self});
    auto& gx = t.grad(x);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < count; ++c) gx.at(r, start + c) += g.at(r, c);
  });
}

template <typename S>
Var concat_rows(BasicTape<S>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat_rows of nothing");
  const int cols = tape.value(parts[0]).dim(1);
  int rows = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    if (v.rank() != 2 || v.dim(1) != cols) shape_mismatch("concat_rows", tape.value(parts[0]).shape(), v.shape());
    rows += v.dim(0);
  }
  BasicTensor<S> out({rows, cols});
  std::size_t at = 0;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    std::copy(v.data(), v.data() + v.size(), out.data() + at);
    at += v.size();
  }
  return tape.record(std::move(out), parts, [parts](BasicTape<S>& t, int self) {
    const auto& g = t.grad(Var{self});
    std::size_t at = 0;
    for (Var p : parts) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        auto& gp = t.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[at + i];
      }
      at += n;
    }
  });
}

template <typename S>
Var slice_rows(BasicTape<S>& tape, Var x, int start, int count) {
  const auto& xv = tape.value(x);
  if (xv.rank() != 2 || start < 0 || count < 0 || start + count > xv.dim(0)) {
    throw ShapeError("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of " + shape_string(xv.shape()));
  }
  const int cols = xv.dim(1);
  const std::size_t begin = static_cast<std::size_t>(start) * cols;
  BasicTensor<S> out({count, cols},
                     std::vector<S>(xv.data() + begin, xv.data() + begin + static_cast<std::size_t>(count) * cols));
  return tape.record(std::move(out), {x}, [x, begin](BasicTape<S>& t, int self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.grad(Var{self});
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin + i] += g[i];
  });
}

template <typename S>
Var gather_rows(BasicTape<S>& tape, Var x, const std::vector<int>& indices) {
  const auto& xv = tape.value(x);
  const int rows = xv.rows(), cols = xv.cols();
  BasicTensor<S> out({static_cast<int>(indices.size()), cols});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int src = indices[r];
    if (src < 0 || src >= rows) throw ShapeError("gather_rows index " + std::to_string(src) + " out of " + shape_string(xv.shape()));
    std::copy_n(xv.data() + static_cast<std::size_t>(src) * cols, cols, out.data() + r * cols);
  }
  return tape.record(std::move(out), {x}, [x, indices, cols](BasicTape<S>& t, int self) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.grad(Var{self});
    auto& gx = t.grad(x);
    for (std::size_t r = 0; r < indices.size(); ++r) {
      S* dst = gx.data() + static_cast<std::size_t>(indices[r]) * cols;
      const S* src = g.data() + r * cols;
      for (int c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
}

template <typename S>
Var sum(BasicTape<S>& tape, Var x) {
  const auto& xv = tape.value(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  return tape.record(BasicTensor<S>({1}, {static_cast<S>(acc)}), {x}, [x](BasicTape<S>& t, int self) {
    if (!t.requires_grad(x)) return;
    const S g = t.grad(Var{self})[0];
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

namespace {

template <typename S>
double weight_total(const std::vector<S>& weights, std::size_t n) {
  if (weights.empty()) return static_cast<double>(n);
  double total = 0.0;
  for (S w : weights) total += w;
  return total;
}

}  // namespace

template <typename S>
Var binary_cross_entropy(BasicTape<S>& tape, Var probs, const std::vector<S>& labels) {
  const auto& pv = tape.value(probs);
  if (pv.size() != labels.size()) throw ShapeError("binary_cross_entropy: " + std::to_string(pv.size()) + " probabilities vs " + std::to_string(labels.size()) + " labels");
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pv[i]), kProbClamp, 1.0 - kProbClamp);
    acc -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  const double n = static_cast<double>(pv.size());
  return tape.record(BasicTensor<S>({1}, {static_cast<S>(acc / n)}), {probs}, [probs, labels, n](BasicTape<S>& t, int self) {
    if (!t.requires_grad(probs)) return;
    const double g = t.grad(Var{self})[0];
    const auto& pv = t.value(probs);
    auto& gp = t.grad(probs);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double raw = pv[i];
      if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) continue;
      gp[i] += static_cast<S>(g * (-labels[i] / raw + (1.0 - labels[i]) / (1.0 - raw)) / n);
    }
  });
}

template <typename S>
Var sigmoid_bce_with_logits(BasicTape<S>& tape, Var logits, const std::vector<S>& labels, const std::vector<S>& weights) {
  const auto& zv = tape.value(logits);
  if (zv.size() != labels.size() || (!weights.empty() && weights.size() != labels.size())) {
    throw ShapeError("sigmoid_bce_with_logits: " + std::to_string(zv.size()) + " logits vs " + std::to_string(labels.size()) + " labels");
  }
  const double total = weight_total(weights, labels.size());
  if (!(total > 0.0)) throw Error("sigmoid_bce_with_logits: weights sum to zero");
  double acc = 0.0;
  for (std::size_t i = 0; i < zv.size(); ++i) {
    const double z = zv[i];
    const double w = weights.empty() ? 1.0 : weights[i];
    acc += w * (std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z))));
  }
  return tape.record(BasicTensor<S>({1}, {static_cast<S>(acc / total)}), {logits},
                     [logits, labels, weights, total](BasicTape<S>& t, int self) {
                       if (!t.requires_grad(logits)) return;
                       const double g = t.grad(Var{self})[0];
                       const auto& zv = t.value(logits);
                       auto& gz = t.grad(logits);
                       for (std::size_t i = 0; i < zv.size(); ++i) {
                         const double w = weights.empty() ? 1.0 : weights[i];
                         gz[i] += static_cast<S>(g * w * (sigmoid_value(static_cast<double>(zv[i])) - labels[i]) / total);
                       }
                     });
}

template <typename S>
Var categorical_cross_entropy(BasicTape<S>& tape, Var dist, const std::vector<int>& labels) {
  const auto& dv = tape.value(dist);
  if (dv.rank() != 2 || static_cast<std::size_t>(dv.dim(0)) != labels.size()) {
    throw ShapeError("categorical_cross_entropy: distribution " + shape_string(dv.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  }
  double acc = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    acc -= std::log(std::max(static_cast<double>(dv.at(static_cast<int>(r), labels[r])), kProbClamp));
  }
  const double n = static_cast<double>(labels.size());
  return tape.record(BasicTensor<S>({1}, {static_cast<S>(acc / n)}), {dist}, [dist, labels, n](BasicTape<S>& t, int self) {
    if (!t.requires_grad(dist)) return;
    const double g = t.grad(Var{self})[0];
    const auto& dv = t.value(dist);
    auto& gd = t.grad(dist);
    for (std::size_t r = 0; r < labels.size(); ++r) {
      const double p = dv.at(static_cast<int>(r), labels[r]);
      if (p > kProbClamp) gd.at(static_cast<int>(r), labels[r]) += static_cast<S>(-g / (p * n));
    }
  });
}

template <typename S>
Var softmax_cross_entropy(BasicTape<S>& tape, Var logits, const std::vector<int>& labels, const std::vector<S>& weights) {
  const auto& zv = tape.value(logits);
  if (zv.rank() != 2 || static_cast<std::size_t>(zv.dim(0)) != labels.size() ||
      (!weights.empty() && weights.size() != labels.size())) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_string(zv.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  }
  const int rows = zv.dim(0), cols = zv.dim(1);
  const double total = weight_total(weights, labels.size());
  if (!(total > 0.0)) throw Error("softmax_cross_entropy: weights sum to zero");
  BasicTensor<S> probs(zv.shape());
  double acc = 0.0;
  for (int r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cols; ++c) mx = std::max(mx, static_cast<double>(zv.at(r, c)));
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(zv.at(r, c) - mx);
    const double lse = mx + std::log(z);
    for (int c = 0; c < cols; ++c) probs.at(r, c) = static_cast<S>(std::exp(zv.at(r, c) - lse));
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(r)];
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= cols) throw Error("softmax_cross_entropy: label out of range");
    acc += w * (lse - zv.at(r, label));
  }
  return tape.record(BasicTensor<S>({1}, {static_cast<S>(acc / total)}), {logits},
                     [logits, labels, weights, total, probs = std::move(probs), rows, cols](BasicTape<S>& t, int self) {
                       if (!t.requires_grad(logits)) return;
                       const double g = t.grad(Var{self})[0];
                       auto& gz = t.grad(logits);
                       for (int r = 0; r < rows; ++r) {
                         const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(r)];
                         const double k = g * w / total;
                         for (int c = 0; c < cols; ++c) {
                           const double target = c == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
                           gz.at(r, c) += static_cast<S>(k * (probs.at(r, c) - target));
                         }
                       }
                     });
}

template <typename S>
LstmState lstm_step_projected(BasicTape<S>& tape, Var x_projected, LstmState prev, Var wh, Var b) {
  const int hidden = tape.value(wh).dim(0);
  if (tape.value(x_projected).rank() != 2 || tape.value(x_projected).dim(1) != 4 * hidden) {
    shape_mismatch("lstm_step", tape.value(x_projected).shape(), tape.value(wh).shape());
  }
  const Var z = dense(tape, prev.h, wh, b);
  const Var gates = add(tape, z, x_projected);
  const Var i = sigmoid(tape, slice_cols(tape, gates, 0, hidden));
  const Var f = sigmoid(tape, slice_cols(tape, gates, hidden, hidden));
  const Var o = sigmoid(tape, slice_cols(tape, gates, 2 * hidden, hidden));
  const Var g = tanh(tape, slice_cols(tape, gates, 3 * hidden, hidden));
  const Var c = add(tape, mul(tape, f, prev.c), mul(tape, i, g));
  const Var h = mul(tape, o, tanh(tape, c));
  return {h, c};
}

template <typename S>
LstmState lstm_step(BasicTape<S>& tape, Var x, LstmState prev, Var wx, Var wh, Var b) {
  return lstm_step_projected(tape, matmul(tape, x, wx), prev, wh, b);
}

#define CHOREO_INSTANTIATE_OPS(S)                                                                              \
  template Var matmul<S>(BasicTape<S>&, Var, Var);                                                            \
  template Var dense<S>(BasicTape<S>&, Var, Var, Var);                                                        \
  template Var add<S>(BasicTape<S>&, Var, Var);                                                               \
  template Var add_bias<S>(BasicTape<S>&, Var, Var);                                                          \
  template Var mul<S>(BasicTape<S>&, Var, Var);                                                               \
  template Var scale<S>(BasicTape<S>&, Var, S);                                                               \
  template Var relu<S>(BasicTape<S>&, Var);                                                                   \
  template Var sigmoid<S>(BasicTape<S>&, Var);                                                                \
  template Var tanh<S>(BasicTape<S>&, Var);                                                                   \
  template Var softmax<S>(BasicTape<S>&, Var);                                                                \
  template Var dropout<S>(BasicTape<S>&, Var, double, bool, Rng&);                                            \
  template Var conv2d<S>(BasicTape<S>&, Var, Var, Var);                                                       \
  template Var maxpool_freq<S>(BasicTape<S>&, Var, int, int);                                                 \
  template Var reshape<S>(BasicTape<S>&, Var, Shape);                                                         \
  template Var concat_cols<S>(BasicTape<S>&, const std::vector<Var>&);                                        \
  template Var slice_cols<S>(BasicTape<S>&, Var, int, int);                                                   \
  template Var concat_rows<S>(BasicTape<S>&, const std::vector<Var>&);                                        \
  template Var slice_rows<S>(BasicTape<S>&, Var, int, int);                                                   \
  template Var gather_rows<S>(BasicTape<S>&, Var, const std::vector<int>&);                                   \
  template Var sum<S>(BasicTape<S>&, Var);                                                                    \
  template Var binary_cross_entropy<S>(BasicTape<S>&, Var, const std::vector<S>&);                            \
  template Var sigmoid_bce_with_logits<S>(BasicTape<S>&, Var, const std::vector<S>&, const std::vector<S>&);  \
  template Var categorical_cross_entropy<S>(BasicTape<S>&, Var, const std::vector<int>&);                     \
  template Var softmax_cross_entropy<S>(BasicTape<S>&, Var, const std::vector<int>&, const std::vector<S>&);  \
  template LstmState lstm_step<S>(BasicTape<S>&, Var, LstmState, Var, Var, Var);                              \
  template LstmState lstm_step_projected<S>(BasicTape<S>&, Var, LstmState, Var, Var);

CHOREO_INSTANTIATE_OPS(float)
CHOREO_INSTANTIATE_OPS(double)

}  // namespace choreo::nn
