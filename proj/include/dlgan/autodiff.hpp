#pragma once

// Minimal reverse-mode automatic differentiation over row-major double
// matrices. A Tape records every operation of one forward pass; backward()
// walks it in reverse and accumulates gradients into Parameters.
//
// Batched sequence data uses two layouts throughout the library:
//   time-major   (T*B) x C, row t*B + b
//   group-major  (G*L) x C, row g*L + l   (attention groups)

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace dlgan {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Parameters are held at single precision (values are always exactly
// representable as float) so checkpoints store them losslessly as float32.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v);

  void zero_grad();
  void round_to_float();
  bool finite() const;
};

using ParamList = std::vector<Parameter*>;

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the gradient and the value of the node being back-propagated.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out, const Matrix& out)>;

  // Parameters not in `trainable` enter the tape as constants. An empty set
  // with all_trainable=false gives a pure inference tape.
  Tape() = default;
  explicit Tape(const ParamList& trainable);
  static Tape inference();

  // Vars and recorded callbacks hold a pointer to their tape.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);
  Var record(Matrix value, std::vector<Var> inputs, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Adds `g` into the gradient slot of `v` if it participates in backprop.
  void accumulate(const Var& v, const Matrix& g);
  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    if (!requires_grad(v.id())) return;
    Matrix& slot = grad_slot(v.id());
    slot += g;
  }
  // Mutable gradient slot (allocated on demand) for block-wise accumulation.
  Matrix& grad_slot(std::size_t id);

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and accumulates into
  // Parameter::grad of every trainable parameter used on the tape.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  bool is_trainable(const Parameter* p) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
  std::unordered_set<const Parameter*> trainable_;
  bool all_trainable_ = true;
};

// ---- elementwise and linear algebra --------------------------------------
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_row(const Var& x, const Var& row);  // broadcast 1xC over rows
Var mul_row(const Var& x, const Var& row);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

// ---- structural -----------------------------------------------------------
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);
// out.row(r) = x.row(index[r]); backward scatter-adds.
Var gather_rows(const Var& x, std::vector<Eigen::Index> index);
// out.data()[i] = x.data()[index[i]] for a rows x cols output (row-major).
Var gather(const Var& x, Eigen::Index rows, Eigen::Index cols, std::vector<Eigen::Index> index);
// Row-major reinterpretation with the same element count.
Var reshape(const Var& x, Eigen::Index rows, Eigen::Index cols);

// ---- normalization and attention -----------------------------------------
// Row-wise standardization (no affine part).
Var layer_norm(const Var& x, double eps = 1e-5);

struct AttentionShape {
  Eigen::Index groups = 1;
  Eigen::Index query_len = 1;
  Eigen::Index key_len = 1;
  Eigen::Index heads = 1;
  double scale = 1.0;
};

// Per group g and head h: softmax(scale * Q_gh K_gh^T) V_gh. Q is
// (groups*query_len) x E, K and V are (groups*key_len) x E, E % heads == 0.
Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& shape);

// Attention weights of one group/head, for inspection and tests.
Matrix attention_weights(const Matrix& q, const Matrix& k, const AttentionShape& shape,
                         Eigen::Index group, Eigen::Index head);

// ---- recurrent ------------------------------------------------------------
// Fused GRU step. gates_in = x W_i + b_i (B x 3H, order r|z|n).
// r = s(gi_r + gh_r), z = s(gi_z + gh_z), n = tanh(gi_n + r*gh_n),
// h' = (1-z)*n + z*h, with gh = h W_h + b_h.
Var gru_cell(const Var& gates_in, const Var& h, const Var& w_h, const Var& b_h);

// ---- reductions and losses -----------------------------------------------
Var mean(const Var& x);
Var sum(const Var& x);
Var mse(const Var& a, const Var& b);
Var mae(const Var& a, const Var& b);
// Mean binary cross-entropy of logits against a constant label.
Var bce_with_logits(const Var& logits, double label);

}  // namespace ad
}  // namespace dlgan
