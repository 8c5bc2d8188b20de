#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hetsched/rng.hpp"

namespace hetsched::nn {

enum class Activation { identity, relu, tanh };

Activation parse_activation(std::string_view name);
const char* to_string(Activation a);

/// Row-major dense matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor2 identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  Tensor2 transposed() const;
  bool all_finite() const;
  bool operator==(const Tensor2&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor2 glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct Param {
  std::string name;
  Tensor2 value;
  Tensor2 grad;
};

/// Named learnable tensors with gradient buffers of matching shape.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor2 value);
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;
  Param& operator[](std::size_t i) { return params_.at(i); }
  const Param& operator[](std::size_t i) const { return params_.at(i); }
  Param& at(std::string_view name) { return params_[index(name)]; }
  const Param& at(std::string_view name) const { return params_[index(name)]; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;
  void zero_grad();
  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

 private:
  std::vector<Param> params_;
};

struct Var {
  std::size_t id = 0;
};

struct RowRef {
  std::size_t source = 0;  // index into the sources span
  std::size_t row = 0;
  auto operator<=>(const RowRef&) const = default;
};

/// Reverse-mode recorder. Every op appends a node; backward() walks them in
/// reverse. Parameter leaves read from a ParamSet and their gradients can be
/// added back with accumulate_into().
class Tape {
 public:
  explicit Tape(const ParamSet* params = nullptr) : params_(params) {}

  Var constant(Tensor2 value);
  Var param(std::size_t index);
  Var param(std::string_view name);

  const Tensor2& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor2& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates.
  void backward(Var loss);
  void accumulate_into(ParamSet& params) const;

  Var matmul(Var a, Var b);
  /// a + broadcast of the 1 x cols bias row.
  Var add_bias(Var a, Var bias);
  Var add(Var a, Var b);
  Var activate(Var a, Activation act);
  Var concat_cols(std::span<const Var> parts);
  Var broadcast_rows(Var row, std::size_t n);
  Var gather_rows(Var a, std::vector<std::size_t> rows);
  /// Output row g is the sum of the listed source rows (zero when empty),
  /// always accumulated in ascending RowRef order.
  Var aggregate(std::span<const Var> sources, std::vector<std::vector<RowRef>> groups, std::size_t cols);
  Var sum(Var a);
  Var scale(Var a, double c);
  /// Sum over sequential sub-selections of the permutation of
  /// advantage[k] * log p_k(perm[k]) + beta * H(p_k), where p_k is the softmax
  /// of the n x 1 logits restricted to perm[k..].
  Var plackett_luce(Var logits, std::vector<std::size_t> permutation, std::vector<double> advantages, double beta);
  /// 0.5 * sum (pred - target)^2 for an n x 1 prediction.
  Var half_squared_error(Var pred, std::vector<double> target);

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    std::function<void(Tape&, std::size_t)> backward;
    std::ptrdiff_t param = -1;
  };
  Var push(Tensor2 value, std::function<void(Tape&, std::size_t)> backward = {});
  Tensor2& grad_ref(std::size_t id);

  const ParamSet* params_;
  std::vector<Node> nodes_;
  std::map<std::size_t, std::size_t> param_nodes_;
};

/// activation(x W + b) without recording.
Tensor2 dense_forward(const Tensor2& x, const Tensor2& weight, const Tensor2& bias, Activation act);

/// Probabilities over unmasked entries (mask[i] true = selectable); masked entries are exactly 0.
std::vector<double> softmax_masked(std::span<const double> logits, std::span<const bool> mask);
double entropy(std::span<const double> probs);

/// A stack of dense layers; hidden layers use `hidden`, the last uses `output`.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamSet& params, const std::string& prefix, std::vector<std::size_t> sizes, Activation hidden,
      Activation output, Rng& rng);
  Var forward(Tape& tape, Var x) const;
  std::size_t in_dim() const noexcept { return sizes_.front(); }
  std::size_t out_dim() const noexcept { return sizes_.back(); }
  /// (weight index, bias index) per layer.
  const std::vector<std::pair<std::size_t, std::size_t>>& layers() const noexcept { return layers_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::pair<std::size_t, std::size_t>> layers_;
  Activation hidden_ = Activation::relu;
  Activation output_ = Activation::identity;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  /// Descends along the gradients stored in `params`.
  void step(ParamSet& params);
  std::uint64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

  // Moment buffers, exposed for checkpointing.
  std::vector<Tensor2>& first_moments() noexcept { return m_; }
  std::vector<Tensor2>& second_moments() noexcept { return v_; }
  const std::vector<Tensor2>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor2>& second_moments() const noexcept { return v_; }
  void set_steps(std::uint64_t t) noexcept { t_ = t; }

 private:
  AdamConfig config_;
  std::vector<Tensor2> m_, v_;
  std::uint64_t t_ = 0;
};

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr int kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor2>>;

/// Text format: "hetsched-checkpoint <version>", then per tensor a
/// "tensor <name> <rows> <cols>" line followed by one line of values per row.
/// Values use shortest round-trip formatting, so output is byte-stable.
void write_tensors(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_tensors(std::istream& in);
void save_tensors(const std::string& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::string& path);

NamedTensors export_params(const ParamSet& params, const std::string& prefix = "");
/// Overwrites values of params present in `tensors` (matched by prefix + name).
/// Throws CheckpointError on a missing name or shape mismatch.
void import_params(ParamSet& params, const NamedTensors& tensors, const std::string& prefix = "");

struct GradCheckReport {
  std::map<std::string, double> max_rel_error;  // parameter name -> worst entry
  double worst = 0;
  bool pass = false;
};

/// Computes the loss and writes analytic gradients into params' grad buffers
/// (the callee zeroes them first).
using LossWithGrad = std::function<double(ParamSet&)>;

/// Compares analytic gradients with central differences of step h. Relative
/// error per entry is |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport grad_check(ParamSet& params, const LossWithGrad& loss, double h, double tol, double abs_floor = 1e-6);

}  // namespace hetsched::nn
