#include "choreo/nn/layers.h"

#include <cmath>

#include "choreo/error.h"

namespace choreo::nn {

Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
  if (fan_in <= 0 || fan_out <= 0) throw Error("glorot_init needs positive fans");
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

Tensor glorot_init(int fan_in, int fan_out, Rng& rng) { return glorot_uniform({fan_in, fan_out}, fan_in, fan_out, rng); }

Parameter& ParameterStore::add(std::string name, Tensor init) {
  for (const Parameter& p : params_) {
    if (p.name == name) throw Error("duplicate parameter '" + name + "'");
  }
  return params_.emplace_back(std::move(name), std::move(init));
}

Parameter& ParameterStore::get(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw Error("no parameter named '" + name + "'");
}

const Parameter& ParameterStore::get(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const Parameter& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) p.zero_grad();
}

std::vector<Tensor> ParameterStore::snapshot() const {
  std::vector<Tensor> out;
  for (const Parameter& p : params_) out.push_back(p.value);
  return out;
}

void ParameterStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw Error("snapshot does not match parameter count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i].value.shape()) {
      throw ShapeError("snapshot shape " + shape_string(values[i].shape()) + " for '" + params_[i].name + "' " +
                       shape_string(params_[i].value.shape()));
    }
    params_[i].value = values[i];
  }
}

Dense::Dense(ParameterStore& store, const std::string& name, int in, int out, Rng& rng)
    : w_(&store.add(name + ".w", glorot_init(in, out, rng))),
      b_(&store.add(name + ".b", Tensor({out}))),
      in_(in),
      out_(out) {}

Var Dense::operator()(Tape& tape, Var x) const { return dense(tape, x, tape.parameter(*w_), tape.parameter(*b_)); }

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kh, int kw,
               Rng& rng)
    : k_(&store.add(name + ".k", glorot_uniform({out_channels, in_channels, kh, kw}, in_channels * kh * kw,
                                                 out_channels * kh * kw, rng))),
      b_(&store.add(name + ".b", Tensor({out_channels}))) {}

Var Conv2d::operator()(Tape& tape, Var x) const { return conv2d(tape, x, tape.parameter(*k_), tape.parameter(*b_)); }

Lstm::Lstm(ParameterStore& store, const std::string& name, int input, int hidden, Rng& rng)
    : input_(input), hidden_(hidden) {
  wx_ = &store.add(name + ".wx", glorot_init(input, 4 * hidden, rng));
  wh_ = &store.add(name + ".wh", glorot_init(hidden, 4 * hidden, rng));
  Tensor bias({4 * hidden});
  for (int j = hidden; j < 2 * hidden; ++j) bias[static_cast<std::size_t>(j)] = 1.0f;
  b_ = &store.add(name + ".b", std::move(bias));
}

LstmState Lstm::zero_state(Tape& tape, int batch) const {
  return {tape.constant(Tensor({batch, hidden_})), tape.constant(Tensor({batch, hidden_}))};
}

Var Lstm::run(Tape& tape, Var x, int steps, LstmState& state) const {
  const auto& xv = tape.value(x);
  if (xv.rank() != 2 || xv.dim(1) != input_ || steps <= 0 || xv.dim(0) % steps != 0) {
    throw ShapeError("lstm input " + shape_string(xv.shape()) + " for " + std::to_string(steps) + " steps of width " +
                     std::to_string(input_));
  }
  const int batch = xv.dim(0) / steps;
  const Var projected = matmul(tape, x, tape.parameter(*wx_));
  const Var wh = tape.parameter(*wh_);
  const Var b = tape.parameter(*b_);
  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    state = lstm_step_projected(tape, slice_rows(tape, projected, t * batch, batch), state, wh, b);
    outputs.push_back(state.h);
  }
  return concat_rows(tape, outputs);
}

}  // namespace choreo::nn
