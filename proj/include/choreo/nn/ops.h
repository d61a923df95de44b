#pragma once

#include <vector>

#include "choreo/nn/rng.h"
#include "choreo/nn/tape.h"

namespace choreo::nn {

// Differentiable ops. Every op validates shapes and throws ShapeError naming both operands.
// Unless noted, 2-D operands are [rows, cols] and rank-1 biases broadcast over rows.

template <typename S> Var matmul(BasicTape<S>& tape, Var a, Var b);
/// x[m,k] * w[k,n] + b[n].
template <typename S> Var dense(BasicTape<S>& tape, Var x, Var w, Var b);
template <typename S> Var add(BasicTape<S>& tape, Var a, Var b);
template <typename S> Var add_bias(BasicTape<S>& tape, Var x, Var b);
template <typename S> Var mul(BasicTape<S>& tape, Var a, Var b);
template <typename S> Var scale(BasicTape<S>& tape, Var x, S factor);

template <typename S> Var relu(BasicTape<S>& tape, Var x);
template <typename S> Var sigmoid(BasicTape<S>& tape, Var x);
template <typename S> Var tanh(BasicTape<S>& tape, Var x);
/// Row-wise softmax.
template <typename S> Var softmax(BasicTape<S>& tape, Var x);

/// Inverted dropout: in training each value is zeroed with probability p and survivors are
/// scaled by 1/(1-p); otherwise identity.
template <typename S> Var dropout(BasicTape<S>& tape, Var x, double p, bool training, Rng& rng);

/// Valid 2-D convolution. x[batch, in, h, w], kernels[out, in, kh, kw], bias[out]
/// -> [batch, out, h-kh+1, w-kw+1].
template <typename S> Var conv2d(BasicTape<S>& tape, Var x, Var kernels, Var bias);
/// Max-pooling along the last axis only: [b, c, h, w] -> [b, c, h, (w-width)/stride+1].
template <typename S> Var maxpool_freq(BasicTape<S>& tape, Var x, int width = 3, int stride = 3);

template <typename S> Var reshape(BasicTape<S>& tape, Var x, Shape shape);
template <typename S> Var concat_cols(BasicTape<S>& tape, const std::vector<Var>& parts);
template <typename S> Var slice_cols(BasicTape<S>& tape, Var x, int start, int count);
template <typename S> Var concat_rows(BasicTape<S>& tape, const std::vector<Var>& parts);
template <typename S> Var slice_rows(BasicTape<S>& tape, Var x, int start, int count);
/// Rows of x[n, k] picked by index (repeats allowed) -> [indices.size(), k].
template <typename S> Var gather_rows(BasicTape<S>& tape, Var x, const std::vector<int>& indices);
template <typename S> Var sum(BasicTape<S>& tape, Var x);

/// Mean binary cross-entropy of probabilities clamped to [1e-7, 1-1e-7]. Natural log.
template <typename S> Var binary_cross_entropy(BasicTape<S>& tape, Var probs, const std::vector<S>& labels);
/// Same loss computed from logits; numerically stable. `weights` (optional) scale each term
/// and the mean divides by their sum.
template <typename S>
Var sigmoid_bce_with_logits(BasicTape<S>& tape, Var logits, const std::vector<S>& labels,
                            const std::vector<S>& weights = {});
/// Mean -ln p[label] over rows of a probability matrix (clamped at 1e-7).
template <typename S> Var categorical_cross_entropy(BasicTape<S>& tape, Var dist, const std::vector<int>& labels);
/// Softmax followed by categorical cross-entropy, fused.
template <typename S>
Var softmax_cross_entropy(BasicTape<S>& tape, Var logits, const std::vector<int>& labels,
                          const std::vector<S>& weights = {});

struct LstmState {
  Var h;
  Var c;
};

/// One LSTM step without peepholes. Gate blocks in the packed weights are ordered
/// input, forget, output, candidate: z = x*wx + h*wh + b, c' = f*c + i*g, h' = o*tanh(c').
template <typename S>
LstmState lstm_step(BasicTape<S>& tape, Var x, LstmState prev, Var wx, Var wh, Var b);
/// lstm_step with x*wx already computed (lets a layer project all timesteps in one product).
template <typename S>
LstmState lstm_step_projected(BasicTape<S>& tape, Var x_projected, LstmState prev, Var wh, Var b);

}  // namespace choreo::nn
