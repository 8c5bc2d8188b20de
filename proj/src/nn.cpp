#include "hetsched/nn.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "hetsched/kernels.hpp"

namespace hetsched::nn {

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "?";
}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) throw std::invalid_argument("Tensor2: value count does not match shape");
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor2 Tensor2::transposed() const {
  Tensor2 t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2 glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor2 t(fan_in, fan_out);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// ---------------------------------------------------------------------------
// ParamSet

std::size_t ParamSet::add(std::string name, Tensor2 value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Tensor2 grad(value.rows(), value.cols());
  params_.push_back({std::move(name), std::move(value), std::move(grad)});
  return params_.size() - 1;
}

std::size_t ParamSet::index(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Param& p) { return p.name == name; });
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Tensor2 value, std::function<void(Tape&, std::size_t)> backward) {
  nodes_.push_back({std::move(value), Tensor2(), std::move(backward), -1});
  return {nodes_.size() - 1};
}

Tensor2& Tape::grad_ref(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows())
    n.grad = Tensor2(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Tensor2 value) { return push(std::move(value)); }

Var Tape::param(std::size_t index) {
  if (!params_) throw std::logic_error("tape has no parameter set");
  if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return {it->second};
  Var v = push((*params_)[index].value);
  nodes_[v.id].param = static_cast<std::ptrdiff_t>(index);
  param_nodes_.emplace(index, v.id);
  return v;
}

Var Tape::param(std::string_view name) {
  if (!params_) throw std::logic_error("tape has no parameter set");
  return param(params_->index(name));
}

void Tape::backward(Var loss) {
  const auto& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  grad_ref(loss.id)(0, 0) += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.backward && n.grad.size() == n.value.size() && n.grad.rows() == n.value.rows()) n.backward(*this, i);
  }
}

void Tape::accumulate_into(ParamSet& params) const {
  const auto& k = kernels::active();
  for (const auto& [index, node] : param_nodes_) {
    const auto& g = nodes_[node].grad;
    if (g.size() == 0) continue;
    auto& dst = params[index].grad;
    k.add(g.size(), g.data(), dst.data());
  }
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// C += A * B, each row of C built from axpy over rows of B.
void gemm_acc(const Tensor2& a, const Tensor2& b, Tensor2& c) {
  const auto& k = kernels::active();
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = c.data() + i * m;
    for (std::size_t kk = 0; kk < a.cols(); ++kk) k.axpy(m, a(i, kk), b.data() + kk * m, crow);
  }
}

}  // namespace

Var Tape::matmul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require(av.cols() == bv.rows(), "matmul: inner dimensions differ");
  Tensor2 out(av.rows(), bv.cols());
  gemm_acc(av, bv, out);
  return push(std::move(out), [a, b](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    const Tensor2& av = t.nodes_[a.id].value;
    const Tensor2& bv = t.nodes_[b.id].value;
    // dA += dC * B^T ; dB += A^T * dC, both as row-wise axpy.
    gemm_acc(g, bv.transposed(), t.grad_ref(a.id));
    gemm_acc(av.transposed(), g, t.grad_ref(b.id));
  });
}

Var Tape::add_bias(Var a, Var bias) {
  const auto& av = value(a);
  const auto& bv = value(bias);
  require(bv.rows() == 1 && bv.cols() == av.cols(), "add_bias: bias must be 1 x cols");
  Tensor2 out = av;
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < out.rows(); ++r) k.add(out.cols(), bv.data(), out.data() + r * out.cols());
  return push(std::move(out), [a, bias](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    const auto& k = kernels::active();
    Tensor2& ga = t.grad_ref(a.id);
    k.add(g.size(), g.data(), ga.data());
    Tensor2& gb = t.grad_ref(bias.id);
    for (std::size_t r = 0; r < g.rows(); ++r) k.add(g.cols(), g.data() + r * g.cols(), gb.data());
  });
}

Var Tape::add(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "add: shapes differ");
  Tensor2 out = av;
  kernels::active().add(out.size(), bv.data(), out.data());
  return push(std::move(out), [a, b](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    const auto& k = kernels::active();
    k.add(g.size(), g.data(), t.grad_ref(a.id).data());
    k.add(g.size(), g.data(), t.grad_ref(b.id).data());
  });
}

Var Tape::activate(Var a, Activation act) {
  if (act == Activation::identity) return a;
  const auto& av = value(a);
  Tensor2 out(av.rows(), av.cols());
  if (act == Activation::relu) {
    kernels::active().relu(av.size(), av.data(), out.data());
    return push(std::move(out), [a](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      kernels::active().relu_backward(g.size(), t.nodes_[a.id].value.data(), g.data(), t.grad_ref(a.id).data());
    });
  }
  for (std::size_t i = 0; i < av.size(); ++i) out.data()[i] = std::tanh(av.data()[i]);
  return push(std::move(out), [a](Tape& t, std::size_t self) {
    const auto& node = t.nodes_[self];
    kernels::active().tanh_backward(node.grad.size(), node.value.data(), node.grad.data(), t.grad_ref(a.id).data());
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    require(value(p).rows() == rows, "concat_cols: row counts differ");
    cols += value(p).cols();
  }
  Tensor2 out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& pv = value(p);
    for (std::size_t r = 0; r < rows; ++r) std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    offset += pv.cols();
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return push(std::move(out), [ids](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    const auto& k = kernels::active();
    std::size_t offset = 0;
    for (Var p : ids) {
      Tensor2& gp = t.grad_ref(p.id);
      for (std::size_t r = 0; r < g.rows(); ++r) k.add(gp.cols(), g.data() + r * g.cols() + offset, gp.data() + r * gp.cols());
      offset += gp.cols();
    }
  });
}

Var Tape::broadcast_rows(Var row, std::size_t n) {
  const auto& rv = value(row);
  require(rv.rows() == 1, "broadcast_rows: input must be a single row");
  Tensor2 out(n, rv.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy(rv.values().begin(), rv.values().end(), out.row(r).begin());
  return push(std::move(out), [row](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    const auto& k = kernels::active();
    Tensor2& gr = t.grad_ref(row.id);
    for (std::size_t r = 0; r < g.rows(); ++r) k.add(g.cols(), g.data() + r * g.cols(), gr.data());
  });
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> rows) {
  const auto& av = value(a);
  Tensor2 out(rows.size(), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < av.rows(), "gather_rows: row out of range");
    std::copy(av.row(rows[i]).begin(), av.row(rows[i]).end(), out.row(i).begin());
  }
  return push(std::move(out), [a, rows = std::move(rows)](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    const auto& k = kernels::active();
    Tensor2& ga = t.grad_ref(a.id);
    for (std::size_t i = 0; i < rows.size(); ++i) k.add(g.cols(), g.data() + i * g.cols(), ga.data() + rows[i] * ga.cols());
  });
}

Var Tape::aggregate(std::span<const Var> sources, std::vector<std::vector<RowRef>> groups, std::size_t cols) {
  for (Var s : sources) require(value(s).cols() == cols, "aggregate: source width differs");
  for (auto& grp : groups) {
    std::sort(grp.begin(), grp.end());
    for (const auto& ref : grp)
      require(ref.source < sources.size() && ref.row < value(sources[ref.source]).rows(), "aggregate: bad row reference");
  }
  const auto& k = kernels::active();
  Tensor2 out(groups.size(), cols);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (const auto& ref : groups[g]) k.add(cols, value(sources[ref.source]).row(ref.row).data(), out.data() + g * cols);
  std::vector<Var> src(sources.begin(), sources.end());
  return push(std::move(out), [src, groups = std::move(groups)](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    const auto& k = kernels::active();
    for (std::size_t gi = 0; gi < groups.size(); ++gi)
      for (const auto& ref : groups[gi]) {
        Tensor2& gs = t.grad_ref(src[ref.source].id);
        k.add(g.cols(), g.data() + gi * g.cols(), gs.data() + ref.row * gs.cols());
      }
  });
}

Var Tape::sum(Var a) {
  const auto& av = value(a);
  double s = 0;
  for (double v : av.values()) s += v;
  return push(Tensor2(1, 1, s), [a](Tape& t, std::size_t self) {
    double g = t.nodes_[self].grad(0, 0);
    for (auto& v : t.grad_ref(a.id).values()) v += g;
  });
}

Var Tape::scale(Var a, double c) {
  Tensor2 out = value(a);
  for (auto& v : out.values()) v *= c;
  return push(std::move(out), [a, c](Tape& t, std::size_t self) {
    const Tensor2& g = t.nodes_[self].grad;
    kernels::active().axpy(g.size(), c, g.data(), t.grad_ref(a.id).data());
  });
}

namespace {

// Log-probabilities of the softmax restricted to `active` indices.
void restricted_log_softmax(const Tensor2& logits, std::span<const std::size_t> active, std::vector<double>& logp) {
  double m = -std::numeric_limits<double>::infinity();
  for (auto i : active) m = std::max(m, logits(i, 0));
  double z = 0;
  for (auto i : active) z += std::exp(logits(i, 0) - m);
  double lz = std::log(z);
  logp.resize(active.size());
  for (std::size_t j = 0; j < active.size(); ++j) logp[j] = logits(active[j], 0) - m - lz;
}

}  // namespace

Var Tape::plackett_luce(Var logits, std::vector<std::size_t> permutation, std::vector<double> advantages, double beta) {
  const auto& lv = value(logits);
  require(lv.cols() == 1, "plackett_luce: logits must be n x 1");
  require(permutation.size() == lv.rows() && advantages.size() == lv.rows(), "plackett_luce: size mismatch");
  {
    std::vector<bool> seen(lv.rows(), false);
    for (auto i : permutation) {
      require(i < lv.rows() && !seen[i], "plackett_luce: not a permutation");
      seen[i] = true;
    }
  }
  double total = 0;
  std::vector<double> logp;
  for (std::size_t k = 0; k < permutation.size(); ++k) {
    std::span<const std::size_t> rest(permutation.data() + k, permutation.size() - k);
    restricted_log_softmax(lv, rest, logp);
    double h = 0;
    for (double l : logp) h -= std::exp(l) * l;
    total += advantages[k] * logp[0] + beta * h;
  }
  return push(Tensor2(1, 1, total), [logits, permutation = std::move(permutation), advantages = std::move(advantages),
                                     beta](Tape& t, std::size_t self) {
    double g = t.nodes_[self].grad(0, 0);
    const Tensor2& lv = t.nodes_[logits.id].value;
    Tensor2& gl = t.grad_ref(logits.id);
    std::vector<double> logp;
    for (std::size_t k = 0; k < permutation.size(); ++k) {
      std::span<const std::size_t> rest(permutation.data() + k, permutation.size() - k);
      restricted_log_softmax(lv, rest, logp);
      double h = 0;
      for (double l : logp) h -= std::exp(l) * l;
      for (std::size_t j = 0; j < rest.size(); ++j) {
        double p = std::exp(logp[j]);
        double d_logp = (j == 0 ? 1.0 : 0.0) - p;
        double d_entropy = -p * (logp[j] + h);
        gl(rest[j], 0) += g * (advantages[k] * d_logp + beta * d_entropy);
      }
    }
  });
}

Var Tape::half_squared_error(Var pred, std::vector<double> target) {
  const auto& pv = value(pred);
  require(pv.cols() == 1 && pv.rows() == target.size(), "half_squared_error: size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < target.size(); ++i) s += 0.5 * (pv(i, 0) - target[i]) * (pv(i, 0) - target[i]);
  return push(Tensor2(1, 1, s), [pred, target = std::move(target)](Tape& t, std::size_t self) {
    double g = t.nodes_[self].grad(0, 0);
    const Tensor2& pv = t.nodes_[pred.id].value;
    Tensor2& gp = t.grad_ref(pred.id);
    for (std::size_t i = 0; i < target.size(); ++i) gp(i, 0) += g * (pv(i, 0) - target[i]);
  });
}

// ---------------------------------------------------------------------------

Tensor2 dense_forward(const Tensor2& x, const Tensor2& weight, const Tensor2& bias, Activation act) {
  Tape tape;
  Var out = tape.activate(tape.add_bias(tape.matmul(tape.constant(x), tape.constant(weight)), tape.constant(bias)), act);
  return tape.value(out);
}

std::vector<double> softmax_masked(std::span<const double> logits, std::span<const bool> mask) {
  if (logits.size() != mask.size()) throw std::invalid_argument("softmax_masked: mask size differs");
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) m = std::max(m, logits[i]);
  if (!std::isfinite(m)) throw std::invalid_argument("softmax_masked: every entry is masked");
  std::vector<double> p(logits.size(), 0.0);
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) z += p[i] = std::exp(logits[i] - m);
  for (auto& v : p) v /= z;
  return p;
}

double entropy(std::span<const double> probs) {
  double h = 0;
  for (double p : probs)
    if (p > 0) h -= p * std::log(p);
  return h;
}

Mlp::Mlp(ParamSet& params, const std::string& prefix, std::vector<std::size_t> sizes, Activation hidden,
         Activation output, Rng& rng)
    : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    auto w = params.add(prefix + ".w" + std::to_string(l), glorot_uniform(sizes_[l], sizes_[l + 1], rng));
    auto b = params.add(prefix + ".b" + std::to_string(l), Tensor2(1, sizes_[l + 1]));
    layers_.emplace_back(w, b);
  }
}

Var Mlp::forward(Tape& tape, Var x) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto [w, b] = layers_[l];
    x = tape.add_bias(tape.matmul(x, tape.param(w)), tape.param(b));
    x = tape.activate(x, l + 1 == layers_.size() ? output_ : hidden_);
  }
  return x;
}

void Adam::step(ParamSet& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.emplace_back(p.value.rows(), p.value.cols());
      v_.emplace_back(p.value.rows(), p.value.cols());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = m_[i].values();
    auto& v = v_[i].values();
    auto& w = p.value.values();
    const auto& g = p.grad.values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      w[j] -= config_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void write_tensors(std::ostream& out, const NamedTensors& tensors) {
  out << "hetsched-checkpoint " << kCheckpointVersion << '\n';
  for (const auto& [name, t] : tensors) {
    out << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) out << (c ? " " : "") << format_double(t(r, c));
      out << '\n';
    }
  }
}

NamedTensors read_tensors(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "hetsched-checkpoint") throw CheckpointError("not a checkpoint file");
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  NamedTensors out;
  std::string word;
  while (in >> word) {
    if (word != "tensor") throw CheckpointError("expected 'tensor', got '" + word + "'");
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) throw CheckpointError("truncated tensor header");
    Tensor2 t(rows, cols);
    for (auto& v : t.values()) {
      std::string tok;
      if (!(in >> tok)) throw CheckpointError("truncated values for tensor " + name);
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) throw CheckpointError("bad value '" + tok + "' in " + name);
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void save_tensors(const std::string& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  write_tensors(out, tensors);
}

NamedTensors load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path);
  return read_tensors(in);
}

NamedTensors export_params(const ParamSet& params, const std::string& prefix) {
  NamedTensors out;
  for (const auto& p : params) out.emplace_back(prefix + p.name, p.value);
  return out;
}

void import_params(ParamSet& params, const NamedTensors& tensors, const std::string& prefix) {
  for (auto& p : params) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& nt) { return nt.first == prefix + p.name; });
    if (it == tensors.end()) throw CheckpointError("checkpoint lacks tensor " + prefix + p.name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw CheckpointError("shape mismatch for tensor " + prefix + p.name);
    p.value = it->second;
  }
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(ParamSet& params, const LossWithGrad& loss, double h, double tol, double abs_floor) {
  loss(params);
  std::vector<Tensor2> analytic;
  for (const auto& p : params) analytic.push_back(p.grad);

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double worst = 0;
    auto& values = params[i].value.values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + h;
      double up = loss(params);
      values[j] = saved - h;
      double down = loss(params);
      values[j] = saved;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[i].values()[j];
      double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    report.max_rel_error[params[i].name] = worst;
    report.worst = std::max(report.worst, worst);
  }
  // Leave the analytic gradients in place for the caller.
  for (std::size_t i = 0; i < params.size(); ++i) params[i].grad = analytic[i];
  report.pass = report.worst < tol;
  return report;
}

}  // namespace hetsched::nn
