#pragma once

#include <deque>
#include <string>
#include <vector>

#include "choreo/nn/ops.h"
#include "choreo/nn/rng.h"
#include "choreo/nn/tape.h"

namespace choreo::nn {

/// Uniform on +-sqrt(6 / (fan_in + fan_out)), filled in row-major order.
Tensor glorot_init(int fan_in, int fan_out, Rng& rng);
Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng);

/// Owns every parameter of a model. Addresses stay stable as parameters are added.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t count() const;
  void zero_grad();

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::deque<Parameter> params_;
};

class Dense {
 public:
  Dense() = default;
  Dense(ParameterStore& store, const std::string& name, int in, int out, Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  int in() const { return in_; }
  int out() const { return out_; }
  Parameter& bias() { return *b_; }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  int in_ = 0;
  int out_ = 0;
};

class Conv2d {
 public:
  Conv2d() = default;
  /// Kernel height runs along time, width along frequency.
  Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kh, int kw, Rng& rng);

  Var operator()(Tape& tape, Var x) const;

 private:
  Parameter* k_ = nullptr;
  Parameter* b_ = nullptr;
};

/// One LSTM layer with packed gate weights (i, f, o, g). The forget-gate bias starts at 1.
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParameterStore& store, const std::string& name, int input, int hidden, Rng& rng);

  int hidden() const { return hidden_; }
  LstmState zero_state(Tape& tape, int batch) const;

  /// Runs the layer over a time-major block x[T*batch, input] and returns h[T*batch, hidden].
  /// `state` is read as the initial state and updated to the final one.
  Var run(Tape& tape, Var x, int steps, LstmState& state) const;

 private:
  Parameter* wx_ = nullptr;
  Parameter* wh_ = nullptr;
  Parameter* b_ = nullptr;
  int input_ = 0;
  int hidden_ = 0;
};

}  // namespace choreo::nn
