#include "dlgan/autodiff.hpp"

#include <cmath>
#include <utility>

#include "dlgan/errors.hpp"

namespace dlgan {

Parameter::Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
  round_to_float();
  grad = Matrix::Zero(value.rows(), value.cols());
}

void Parameter::zero_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix::Zero(value.rows(), value.cols());
  } else {
    grad.setZero();
  }
}

void Parameter::round_to_float() {
  value = value.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

bool Parameter::finite() const { return value.allFinite(); }

namespace ad {

using Eigen::Index;

const Matrix& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Tape::Tape(const ParamList& trainable) : all_trainable_(false) {
  for (const Parameter* p : trainable) trainable_.insert(p);
}

Tape Tape::inference() { return Tape(ParamList{}); }

bool Tape::is_trainable(const Parameter* p) const {
  return all_trainable_ || trainable_.count(p) > 0;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = is_trainable(&p);
  n.param = n.requires_grad ? &p : nullptr;
  nodes_.push_back(std::move(n));
  param_ids_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape() != this) throw Error(ErrorKind::ShapeMismatch, "operand recorded on another tape");
    n.requires_grad = n.requires_grad || requires_grad(v.id());
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  if (!requires_grad(v.id())) return;
  grad_slot(v.id()) += g;
}

void Tape::backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "backward() expects a 1x1 loss");
  }
  if (!requires_grad(loss.id())) return;
  grad_slot(loss.id()).setOnes();
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad) continue;
    // Callbacks only touch gradient slots of earlier nodes; nodes_ does not
    // grow during backward, so these references stay valid.
    if (n.backward) n.backward(*this, n.grad, n.value);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

namespace {

std::string shape_str(const Var& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void softmax_rows(Matrix& s) {
  for (Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "matmul: " + shape_str(a) + " * " + shape_str(b));
  }
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (a.requires_grad()) t.grad_slot(a.id()).noalias() += g * b.value().transpose();
    if (b.requires_grad()) t.grad_slot(b.id()).noalias() += a.value().transpose() * g;
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b},
                          [a, b](Tape& t, const Matrix& g, const Matrix&) {
                            t.accumulate(a, g);
                            t.accumulate(b, g);
                          });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b},
                          [a, b](Tape& t, const Matrix& g, const Matrix&) {
                            t.accumulate(a, g);
                            if (b.requires_grad()) t.grad_slot(b.id()) -= g;
                          });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](Tape& t, const Matrix& g, const Matrix&) {
                            if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
                            if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
                          });
}

Var scale(const Var& a, double s) {
  return a.tape()->record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g * s);
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape()->record(std::move(out), {a},
                          [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}

Var add_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "add_row: " + shape_str(x) + " + " + shape_str(row));
  }
  Matrix out = x.value().rowwise() + row.value().row(0);
  return x.tape()->record(std::move(out), {x, row},
                          [x, row](Tape& t, const Matrix& g, const Matrix&) {
                            t.accumulate(x, g);
                            if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
                          });
}

Var mul_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "mul_row: " + shape_str(x) + " * " + shape_str(row));
  }
  Matrix out = x.value().array().rowwise() * row.value().row(0).array();
  return x.tape()->record(std::move(out), {x, row},
                          [x, row](Tape& t, const Matrix& g, const Matrix&) {
                            if (x.requires_grad()) {
                              Matrix gx = g.array().rowwise() * row.value().row(0).array();
                              t.accumulate(x, gx);
                            }
                            if (row.requires_grad()) {
                              t.accumulate(row, g.cwiseProduct(x.value()).colwise().sum());
                            }
                          });
}

Var sigmoid(const Var& x) {
  Matrix out = x.value().unaryExpr(&stable_sigmoid);
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, g.cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var tanh(const Var& x) {
  Matrix out = x.value().array().tanh();
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var leaky_relu(const Var& x, double slope) {
  Matrix out = x.value().unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
  return x.tape()->record(std::move(out), {x}, [x, slope](Tape& t, const Matrix& g, const Matrix&) {
    Matrix d = x.value().unaryExpr([slope](double v) { return v > 0 ? 1.0 : slope; });
    t.accumulate(x, g.cwiseProduct(d));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat_rows of nothing");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw Error(ErrorKind::ShapeMismatch, "concat_rows column count");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts.front().tape()->record(std::move(out), parts,
                                      [parts](Tape& t, const Matrix& g, const Matrix&) {
                                        Index r = 0;
                                        for (const Var& p : parts) {
                                          if (p.requires_grad()) {
                                            t.grad_slot(p.id()) += g.middleRows(r, p.rows());
                                          }
                                          r += p.rows();
                                        }
                                      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat_cols of nothing");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw Error(ErrorKind::ShapeMismatch, "concat_cols row count");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts.front().tape()->record(std::move(out), parts,
                                      [parts](Tape& t, const Matrix& g, const Matrix&) {
                                        Index c = 0;
                                        for (const Var& p : parts) {
                                          if (p.requires_grad()) {
                                            t.grad_slot(p.id()) += g.middleCols(c, p.cols());
                                          }
                                          c += p.cols();
                                        }
                                      });
}

Var slice_rows(const Var& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "slice_rows out of range");
  }
  Matrix out = x.value().middleRows(start, count);
  return x.tape()->record(std::move(out), {x},
                          [x, start, count](Tape& t, const Matrix& g, const Matrix&) {
                            t.grad_slot(x.id()).middleRows(start, count) += g;
                          });
}

Var slice_cols(const Var& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "slice_cols out of range");
  }
  Matrix out = x.value().middleCols(start, count);
  return x.tape()->record(std::move(out), {x},
                          [x, start, count](Tape& t, const Matrix& g, const Matrix&) {
                            t.grad_slot(x.id()).middleCols(start, count) += g;
                          });
}

Var gather_rows(const Var& x, std::vector<Index> index) {
  Matrix out(static_cast<Index>(index.size()), x.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= x.rows()) throw Error(ErrorKind::ShapeMismatch, "gather_rows index");
    out.row(static_cast<Index>(r)) = x.value().row(index[r]);
  }
  return x.tape()->record(std::move(out), {x},
                          [x, index = std::move(index)](Tape& t, const Matrix& g, const Matrix&) {
                            Matrix& slot = t.grad_slot(x.id());
                            for (std::size_t r = 0; r < index.size(); ++r) {
                              slot.row(index[r]) += g.row(static_cast<Index>(r));
                            }
                          });
}

Var gather(const Var& x, Index rows, Index cols, std::vector<Index> index) {
  if (static_cast<Index>(index.size()) != rows * cols) throw Error(ErrorKind::ShapeMismatch, "gather size");
  const Index n = x.rows() * x.cols();
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= n) throw Error(ErrorKind::ShapeMismatch, "gather index");
    out.data()[i] = x.value().data()[index[i]];
  }
  return x.tape()->record(std::move(out), {x},
                          [x, index = std::move(index)](Tape& t, const Matrix& g, const Matrix&) {
                            double* slot = t.grad_slot(x.id()).data();
                            for (std::size_t i = 0; i < index.size(); ++i) slot[index[i]] += g.data()[i];
                          });
}

Var reshape(const Var& x, Index rows, Index cols) {
  if (rows * cols != x.rows() * x.cols()) throw Error(ErrorKind::ShapeMismatch, "reshape element count");
  const Index in_rows = x.rows();
  const Index in_cols = x.cols();
  Matrix out = Eigen::Map<const Matrix>(x.value().data(), rows, cols);
  return x.tape()->record(std::move(out), {x},
                          [x, in_rows, in_cols](Tape& t, const Matrix& g, const Matrix&) {
                            t.grad_slot(x.id()) += Eigen::Map<const Matrix>(g.data(), in_rows, in_cols);
                          });
}

Var layer_norm(const Var& x, double eps) {
  const Matrix& xv = x.value();
  const Index c = xv.cols();
  Matrix out(xv.rows(), c);
  Eigen::VectorXd inv_std(xv.rows());
  for (Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    out.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  return x.tape()->record(std::move(out), {x},
                          [x, inv_std](Tape& t, const Matrix& g, const Matrix& y) {
                            Matrix dx(g.rows(), g.cols());
                            for (Index i = 0; i < g.rows(); ++i) {
                              const double mg = g.row(i).mean();
                              const double mgy = g.row(i).dot(y.row(i)) / static_cast<double>(g.cols());
                              dx.row(i) = inv_std(i) * (g.row(i).array() - mg - y.row(i).array() * mgy);
                            }
                            t.accumulate(x, dx);
                          });
}

Matrix attention_weights(const Matrix& q, const Matrix& k, const AttentionShape& s, Index group,
                         Index head) {
  const Index dh = q.cols() / s.heads;
  Matrix scores = s.scale * q.block(group * s.query_len, head * dh, s.query_len, dh) *
                  k.block(group * s.key_len, head * dh, s.key_len, dh).transpose();
  softmax_rows(scores);
  return scores;
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionShape& s) {
  const Index e = q.cols();
  if (s.heads < 1 || e % s.heads != 0) {
    throw Error(ErrorKind::HeadDivisibility,
                "width " + std::to_string(e) + " not divisible by " + std::to_string(s.heads) + " heads");
  }
  if (k.cols() != e || v.cols() != e || q.rows() != s.groups * s.query_len ||
      k.rows() != s.groups * s.key_len || v.rows() != s.groups * s.key_len) {
    throw Error(ErrorKind::ShapeMismatch, "attention operand shapes");
  }
  const Index dh = e / s.heads;
  std::vector<Matrix> weights(static_cast<std::size_t>(s.groups * s.heads));
  Matrix out(q.rows(), e);
  for (Index g = 0; g < s.groups; ++g) {
    for (Index h = 0; h < s.heads; ++h) {
      Matrix a = attention_weights(q.value(), k.value(), s, g, h);
      out.block(g * s.query_len, h * dh, s.query_len, dh).noalias() =
          a * v.value().block(g * s.key_len, h * dh, s.key_len, dh);
      weights[static_cast<std::size_t>(g * s.heads + h)] = std::move(a);
    }
  }
  return q.tape()->record(
      std::move(out), {q, k, v},
      [q, k, v, s, dh, weights = std::move(weights)](Tape& t, const Matrix& g, const Matrix&) {
        const bool gq = q.requires_grad(), gk = k.requires_grad(), gv = v.requires_grad();
        Matrix* dq = gq ? &t.grad_slot(q.id()) : nullptr;
        Matrix* dk = gk ? &t.grad_slot(k.id()) : nullptr;
        Matrix* dv = gv ? &t.grad_slot(v.id()) : nullptr;
        for (Index grp = 0; grp < s.groups; ++grp) {
          for (Index h = 0; h < s.heads; ++h) {
            const Matrix& a = weights[static_cast<std::size_t>(grp * s.heads + h)];
            const auto go = g.block(grp * s.query_len, h * dh, s.query_len, dh);
            const auto vb = v.value().block(grp * s.key_len, h * dh, s.key_len, dh);
            if (gv) dv->block(grp * s.key_len, h * dh, s.key_len, dh).noalias() += a.transpose() * go;
            if (!gq && !gk) continue;
            Matrix da = go * vb.transpose();
            Matrix ds = a.cwiseProduct(da);
            const Eigen::VectorXd row_dot = ds.rowwise().sum();
            ds -= a.cwiseProduct(row_dot.replicate(1, a.cols()));
            ds *= s.scale;
            if (gq) {
              dq->block(grp * s.query_len, h * dh, s.query_len, dh).noalias() +=
                  ds * k.value().block(grp * s.key_len, h * dh, s.key_len, dh);
            }
            if (gk) {
              dk->block(grp * s.key_len, h * dh, s.key_len, dh).noalias() +=
                  ds.transpose() * q.value().block(grp * s.query_len, h * dh, s.query_len, dh);
            }
          }
        }
      });
}

Var gru_cell(const Var& gates_in, const Var& h, const Var& w_h, const Var& b_h) {
  const Index hid = h.cols();
  if (gates_in.cols() != 3 * hid || w_h.rows() != hid || w_h.cols() != 3 * hid ||
      b_h.rows() != 1 || b_h.cols() != 3 * hid || gates_in.rows() != h.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "gru_cell operand shapes");
  }
  Matrix gh = h.value() * w_h.value();
  gh.rowwise() += b_h.value().row(0);
  const Matrix& gi = gates_in.value();
  Matrix r = (gi.leftCols(hid) + gh.leftCols(hid)).unaryExpr(&stable_sigmoid);
  Matrix z = (gi.middleCols(hid, hid) + gh.middleCols(hid, hid)).unaryExpr(&stable_sigmoid);
  Matrix ghn = gh.rightCols(hid);
  Matrix n = (gi.rightCols(hid) + r.cwiseProduct(ghn)).array().tanh();
  Matrix out = ((1.0 - z.array()) * n.array() + z.array() * h.value().array()).matrix();
  return h.tape()->record(
      std::move(out), {gates_in, h, w_h, b_h},
      [gates_in, h, w_h, b_h, r = std::move(r), z = std::move(z), n = std::move(n),
       ghn = std::move(ghn), hid](Tape& t, const Matrix& g, const Matrix&) {
        const Index rows = g.rows();
        Matrix dgh(rows, 3 * hid);
        Matrix dgi(rows, 3 * hid);
        const auto& hv = h.value();
        const Eigen::ArrayXXd dpre_n = g.array() * (1.0 - z.array()) * (1.0 - n.array().square());
        const Eigen::ArrayXXd dz = g.array() * (hv.array() - n.array());
        const Eigen::ArrayXXd dr = dpre_n * ghn.array();
        dgi.leftCols(hid) = (dr * r.array() * (1.0 - r.array())).matrix();
        dgi.middleCols(hid, hid) = (dz * z.array() * (1.0 - z.array())).matrix();
        dgi.rightCols(hid) = dpre_n.matrix();
        dgh.leftCols(2 * hid) = dgi.leftCols(2 * hid);
        dgh.rightCols(hid) = (dpre_n * r.array()).matrix();
        t.accumulate(gates_in, dgi);
        if (h.requires_grad()) {
          Matrix& slot = t.grad_slot(h.id());
          slot += (g.array() * z.array()).matrix();
          slot.noalias() += dgh * w_h.value().transpose();
        }
        if (w_h.requires_grad()) t.grad_slot(w_h.id()).noalias() += hv.transpose() * dgh;
        if (b_h.requires_grad()) t.accumulate(b_h, dgh.colwise().sum());
      });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.rows() * x.cols());
  Matrix out(1, 1);
  out(0, 0) = x.value().sum() / n;
  return x.tape()->record(std::move(out), {x}, [x, n](Tape& t, const Matrix& g, const Matrix&) {
    t.grad_slot(x.id()).array() += g(0, 0) / n;
  });
}

Var sum(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.grad_slot(x.id()).array() += g(0, 0);
  });
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  const double n = static_cast<double>(a.rows() * a.cols());
  Matrix diff = a.value() - b.value();
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return a.tape()->record(std::move(out), {a, b},
                          [a, b, n, diff = std::move(diff)](Tape& t, const Matrix& g, const Matrix&) {
                            const double c = 2.0 * g(0, 0) / n;
                            t.accumulate(a, diff * c);
                            t.accumulate(b, diff * -c);
                          });
}

Var mae(const Var& a, const Var& b) {
  require_same_shape(a, b, "mae");
  const double n = static_cast<double>(a.rows() * a.cols());
  Matrix diff = a.value() - b.value();
  Matrix out(1, 1);
  out(0, 0) = diff.cwiseAbs().sum() / n;
  return a.tape()->record(std::move(out), {a, b},
                          [a, b, n, diff = std::move(diff)](Tape& t, const Matrix& g, const Matrix&) {
                            Matrix sgn = diff.unaryExpr([](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); });
                            const double c = g(0, 0) / n;
                            t.accumulate(a, sgn * c);
                            t.accumulate(b, sgn * -c);
                          });
}

Var bce_with_logits(const Var& logits, double label) {
  const Matrix& x = logits.value();
  if (!x.allFinite()) throw Error(ErrorKind::NonFiniteLogit, "logit is NaN or infinite");
  const double n = static_cast<double>(x.rows() * x.cols());
  // -[y log s(x) + (1-y) log(1-s(x))] = softplus(x) - y x
  double total = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) total += softplus(x(i, j)) - label * x(i, j);
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return logits.tape()->record(std::move(out), {logits},
                               [logits, label, n](Tape& t, const Matrix& g, const Matrix&) {
                                 Matrix d = logits.value().unaryExpr(
                                     [label](double v) { return stable_sigmoid(v) - label; });
                                 t.accumulate(logits, d * (g(0, 0) / n));
                               });
}

}  // namespace ad
}  // namespace dlgan
