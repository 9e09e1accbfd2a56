#include "bfm/tensor.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstddef>
#include <sstream>

namespace bfm {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_tape_counter{1};

double sigmoid_s(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double softplus_s(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

}  // namespace

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != data.size())
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape_));
  for (std::size_t e : shape_)
    if (e == 0) throw ShapeError("zero extent in shape " + shape_str(shape_));
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> d(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> d(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ContractError("rows() on tensor of shape " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ContractError("cols() on tensor of shape " + shape_str(shape_));
  return shape_[1];
}

const std::vector<double>& Tensor::data() const {
  if (!data_) throw ContractError("access to empty tensor");
  return *data_;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on) {
    if (!data_) throw ContractError("set_requires_grad on empty tensor");
    if (!grad_) grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
  } else {
    grad_.reset();
  }
  return *this;
}

const std::vector<double>& Tensor::grad() const {
  if (!grad_) throw ContractError("tensor has no gradient buffer");
  return *grad_;
}

std::vector<double>& Tensor::grad_mut() {
  if (!grad_) throw ContractError("tensor has no gradient buffer");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

// ------------------------------------------------------------------ Tape

Tape::Tape() : id_(g_tape_counter.fetch_add(1, std::memory_order_relaxed)) {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

std::int32_t Tape::parent_of(const Tensor& x) {
  if (x.tape_id_ == id_ && x.node_ >= 0) return x.node_;
  if (!x.requires_grad_) return -1;
  const void* key = x.grad_.get();
  auto it = leaf_ids_.find(key);
  if (it != leaf_ids_.end()) return it->second;
  Node leaf;
  leaf.numel = x.size();
  leaf.grad = x.grad_;
  nodes_.push_back(std::move(leaf));
  const auto id = static_cast<std::int32_t>(nodes_.size() - 1);
  leaf_ids_.emplace(key, id);
  return id;
}

std::int32_t Tape::record(Tensor& out, std::vector<std::int32_t> parents, BackFn back) {
  Node n;
  n.numel = out.size();
  n.parents = std::move(parents);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::int32_t>(nodes_.size() - 1);
  out.tape_id_ = id_;
  out.node_ = id;
  return id;
}

std::vector<double>& Tape::grad_of(std::int32_t node) {
  Node& n = nodes_[static_cast<std::size_t>(node)];
  if (!n.grad) n.grad = std::make_shared<std::vector<double>>(n.numel, 0.0);
  return *n.grad;
}

void Tape::backward(const Tensor& root) {
  if (root.size() != 1) throw ContractError("backward root must be scalar");
  if (root.tape_id_ != id_ || root.node_ < 0)
    throw ContractError("backward root is not recorded on this tape");
  grad_of(root.node_)[0] += 1.0;
  std::vector<std::vector<double>*> parent_grads;
  for (std::int32_t i = root.node_; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.grad || !n.back) continue;  // unreachable node or leaf
    parent_grads.clear();
    for (std::int32_t pid : n.parents) parent_grads.push_back(&grad_of(pid));
    n.back(*n.grad, parent_grads);
  }
}

// ---------------------------------------------------------------- access

namespace detail {
struct Access {
  static std::int32_t parent_of(Tape& t, const Tensor& x) { return t.parent_of(x); }
  static void record(Tape& t, Tensor& out, std::vector<std::int32_t> parents, Tape::BackFn back) {
    t.record(out, std::move(parents), std::move(back));
  }
  static std::shared_ptr<const std::vector<double>> buf(const Tensor& x) { return x.data_; }
};
}  // namespace detail

using detail::Access;

namespace {

// Records a two-input op. ia/ib give each input's slot among the
// differentiable parents, -1 when that input is a constant.
template <class MakeBack>
void record_binary(Tensor& out, const Tensor& a, const Tensor& b, MakeBack make_back) {
  Tape* t = Tape::active();
  if (!t) return;
  const std::int32_t pa = Access::parent_of(*t, a);
  const std::int32_t pb = Access::parent_of(*t, b);
  if (pa < 0 && pb < 0) return;
  std::vector<std::int32_t> parents;
  int ia = -1, ib = -1;
  if (pa >= 0) {
    ia = static_cast<int>(parents.size());
    parents.push_back(pa);
  }
  if (pb >= 0) {
    ib = static_cast<int>(parents.size());
    parents.push_back(pb);
  }
  Access::record(*t, out, std::move(parents), make_back(ia, ib));
}

template <class MakeBack>
void record_unary(Tensor& out, const Tensor& x, MakeBack make_back) {
  Tape* t = Tape::active();
  if (!t) return;
  const std::int32_t px = Access::parent_of(*t, x);
  if (px < 0) return;
  Access::record(*t, out, {px}, make_back());
}

enum class Bcast { equal, a_scalar, b_scalar };

Bcast bcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (same_shape(a.shape(), b.shape())) return Bcast::equal;
  if (a.is_scalar()) return Bcast::a_scalar;
  if (b.is_scalar()) return Bcast::b_scalar;
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " are neither equal nor scalar-broadcast");
}

}  // namespace

// ------------------------------------------------------- elementwise ops

Tensor add(const Tensor& a, const Tensor& b) {
  const Bcast k = bcast_kind(a, b, "add");
  const Tensor& big = (k == Bcast::a_scalar) ? b : a;
  std::vector<double> out(big.size());
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (k == Bcast::a_scalar ? ad[0] : ad[i]) + (k == Bcast::b_scalar ? bd[0] : bd[i]);
  Tensor y(big.shape(), std::move(out));
  record_binary(y, a, b, [&](int ia, int ib) {
    return [ia, ib, k](const std::vector<double>& og, const std::vector<std::vector<double>*>& pg) {
      if (ia >= 0) {
        auto& da = *pg[ia];
        if (k == Bcast::a_scalar)
          for (double g : og) da[0] += g;
        else
          for (std::size_t i = 0; i < og.size(); ++i) da[i] += og[i];
      }
      if (ib >= 0) {
        auto& db = *pg[ib];
        if (k == Bcast::b_scalar)
          for (double g : og) db[0] += g;
        else
          for (std::size_t i = 0; i < og.size(); ++i) db[i] += og[i];
      }
    };
  });
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Bcast k = bcast_kind(a, b, "sub");
  const Tensor& big = (k == Bcast::a_scalar) ? b : a;
  std::vector<double> out(big.size());
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (k == Bcast::a_scalar ? ad[0] : ad[i]) - (k == Bcast::b_scalar ? bd[0] : bd[i]);
  Tensor y(big.shape(), std::move(out));
  record_binary(y, a, b, [&](int ia, int ib) {
    return [ia, ib, k](const std::vector<double>& og, const std::vector<std::vector<double>*>& pg) {
      if (ia >= 0) {
        auto& da = *pg[ia];
        if (k == Bcast::a_scalar)
          for (double g : og) da[0] += g;
        else
          for (std::size_t i = 0; i < og.size(); ++i) da[i] += og[i];
      }
      if (ib >= 0) {
        auto& db = *pg[ib];
        if (k == Bcast::b_scalar)
          for (double g : og) db[0] -= g;
        else
          for (std::size_t i = 0; i < og.size(); ++i) db[i] -= og[i];
      }
    };
  });
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Bcast k = bcast_kind(a, b, "mul");
  const Tensor& big = (k == Bcast::a_scalar) ? b : a;
  std::vector<double> out(big.size());
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (k == Bcast::a_scalar ? ad[0] : ad[i]) * (k == Bcast::b_scalar ? bd[0] : bd[i]);
  Tensor y(big.shape(), std::move(out));
  auto abuf = Access::buf(a);
  auto bbuf = Access::buf(b);
  record_binary(y, a, b, [&](int ia, int ib) {
    return [ia, ib, k, abuf, bbuf](const std::vector<double>& og,
                                   const std::vector<std::vector<double>*>& pg) {
      const auto& av = *abuf;
      const auto& bv = *bbuf;
      if (ia >= 0) {
        auto& da = *pg[ia];
        if (k == Bcast::a_scalar) {
          double acc = 0.0;
          for (std::size_t i = 0; i < og.size(); ++i) acc += og[i] * bv[i];
          da[0] += acc;
        } else {
          for (std::size_t i = 0; i < og.size(); ++i)
            da[i] += og[i] * (k == Bcast::b_scalar ? bv[0] : bv[i]);
        }
      }
      if (ib >= 0) {
        auto& db = *pg[ib];
        if (k == Bcast::b_scalar) {
          double acc = 0.0;
          for (std::size_t i = 0; i < og.size(); ++i) acc += og[i] * av[i];
          db[0] += acc;
        } else {
          for (std::size_t i = 0; i < og.size(); ++i)
            db[i] += og[i] * (k == Bcast::a_scalar ? av[0] : av[i]);
        }
      }
    };
  });
  return y;
}

namespace {

template <class F, class DF>
Tensor unary_ew(const Tensor& x, F f, DF df_from_x) {
  std::vector<double> out(x.size());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
  Tensor y(x.shape(), std::move(out));
  auto xbuf = Access::buf(x);
  record_unary(y, x, [&] {
    return [xbuf, df_from_x](const std::vector<double>& og,
                             const std::vector<std::vector<double>*>& pg) {
      auto& dx = *pg[0];
      const auto& xv = *xbuf;
      for (std::size_t i = 0; i < og.size(); ++i) dx[i] += og[i] * df_from_x(xv[i]);
    };
  });
  return y;
}

}  // namespace

Tensor silu(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return v * sigmoid_s(v); },
      [](double v) {
        const double s = sigmoid_s(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return sigmoid_s(v); },
      [](double v) {
        const double s = sigmoid_s(v);
        return s * (1.0 - s);
      });
}

Tensor tanh(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double th = std::tanh(v);
        return 1.0 - th * th;
      });
}

Tensor log(const Tensor& x) {
  for (double v : x.data())
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  return unary_ew(
      x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Tensor softplus(const Tensor& x) {
  return unary_ew(
      x, [](double v) { return softplus_s(v); }, [](double v) { return sigmoid_s(v); });
}

// ----------------------------------------------------------- linear ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  if (a.cols() != b.rows())
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  MapCM A(a.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  MapCM B(b.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  MapM C(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  C.noalias() = A * B;
  Tensor y({m, n}, std::move(out));
  auto abuf = Access::buf(a);
  auto bbuf = Access::buf(b);
  record_binary(y, a, b, [&](int ia, int ib) {
    return [ia, ib, m, k, n, abuf, bbuf](const std::vector<double>& og,
                                         const std::vector<std::vector<double>*>& pg) {
      MapCM G(og.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
      if (ia >= 0) {
        MapM dA(pg[ia]->data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        MapCM B2(bbuf->data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        dA.noalias() += G * B2.transpose();
      }
      if (ib >= 0) {
        MapM dB(pg[ib]->data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        MapCM A2(abuf->data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        dB.noalias() += A2.transpose() * G;
      }
    };
  });
  return y;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2)
    throw ShapeError("affine expects rank-2 input and weight");
  if (b.rank() != 1) throw ShapeError("affine bias must be rank-1");
  if (x.cols() != w.rows() || w.cols() != b.shape()[0])
    throw ShapeError("affine extents differ: x" + shape_str(x.shape()) + " w" +
                     shape_str(w.shape()) + " b" + shape_str(b.shape()));
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  std::vector<double> out(m * n);
  {
    MapCM X(x.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    MapCM W(w.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    MapM Y(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    Y.noalias() = X * W;
    Eigen::Map<const Eigen::RowVectorXd> bias(b.data().data(), static_cast<Eigen::Index>(n));
    Y.rowwise() += bias;
  }
  Tensor y({m, n}, std::move(out));

  Tape* t = Tape::active();
  if (!t) return y;
  const std::int32_t px = Access::parent_of(*t, x);
  const std::int32_t pw = Access::parent_of(*t, w);
  const std::int32_t pb = Access::parent_of(*t, b);
  if (px < 0 && pw < 0 && pb < 0) return y;
  std::vector<std::int32_t> parents;
  int ix = -1, iw = -1, ib = -1;
  if (px >= 0) { ix = static_cast<int>(parents.size()); parents.push_back(px); }
  if (pw >= 0) { iw = static_cast<int>(parents.size()); parents.push_back(pw); }
  if (pb >= 0) { ib = static_cast<int>(parents.size()); parents.push_back(pb); }
  auto xbuf = Access::buf(x);
  auto wbuf = Access::buf(w);
  Access::record(*t, y, std::move(parents),
                 [ix, iw, ib, m, k, n, xbuf, wbuf](const std::vector<double>& og,
                                                   const std::vector<std::vector<double>*>& pg) {
                   MapCM G(og.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
                   if (ix >= 0) {
                     MapM dX(pg[ix]->data(), static_cast<Eigen::Index>(m),
                             static_cast<Eigen::Index>(k));
                     MapCM W(wbuf->data(), static_cast<Eigen::Index>(k),
                             static_cast<Eigen::Index>(n));
                     dX.noalias() += G * W.transpose();
                   }
                   if (iw >= 0) {
                     MapM dW(pg[iw]->data(), static_cast<Eigen::Index>(k),
                             static_cast<Eigen::Index>(n));
                     MapCM X(xbuf->data(), static_cast<Eigen::Index>(m),
                             static_cast<Eigen::Index>(k));
                     dW.noalias() += X.transpose() * G;
                   }
                   if (ib >= 0) {
                     Eigen::Map<Eigen::RowVectorXd> dB(pg[ib]->data(),
                                                       static_cast<Eigen::Index>(n));
                     dB += G.colwise().sum();
                   }
                 });
  return y;
}

Tensor tile_rows(const Tensor& v, std::size_t rows) {
  if (rows == 0) throw ShapeError("tile_rows needs at least one row");
  const std::size_t n =
      (v.rank() == 1) ? v.shape()[0]
                      : (v.rank() == 2 && v.rows() == 1 ? v.cols() : 0);
  if (n == 0) throw ShapeError("tile_rows expects a vector, got " + shape_str(v.shape()));
  std::vector<double> out(rows * n);
  const auto& vd = v.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = vd[j];
  Tensor y({rows, n}, std::move(out));
  record_unary(y, v, [&] {
    return [rows, n](const std::vector<double>& og, const std::vector<std::vector<double>*>& pg) {
      auto& dv = *pg[0];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) dv[j] += og[r * n + j];
    };
  });
  return y;
}

Tensor embed_rows(const Tensor& table, const std::vector<int>& idx) {
  if (table.rank() != 2) throw ShapeError("embed_rows table must be rank-2");
  const std::size_t classes = table.rows(), e = table.cols();
  for (int c : idx)
    if (c < 0 || static_cast<std::size_t>(c) >= classes)
      throw DomainError("embedding index " + std::to_string(c) + " outside [0," +
                        std::to_string(classes) + ")");
  const std::size_t b = idx.size();
  std::vector<double> out(b * e);
  const auto& td = table.data();
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < e; ++j) out[r * e + j] = td[static_cast<std::size_t>(idx[r]) * e + j];
  Tensor y({b, e}, std::move(out));
  auto indices = idx;
  record_unary(y, table, [&] {
    return [indices, e](const std::vector<double>& og,
                        const std::vector<std::vector<double>*>& pg) {
      auto& dt = *pg[0];
      for (std::size_t r = 0; r < indices.size(); ++r)
        for (std::size_t j = 0; j < e; ++j)
          dt[static_cast<std::size_t>(indices[r]) * e + j] += og[r * e + j];
    };
  });
  return y;
}

// ------------------------------------------------------------ reductions

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = Tensor::scalar(acc);
  record_unary(y, x, [&] {
    return [](const std::vector<double>& og, const std::vector<std::vector<double>*>& pg) {
      auto& dx = *pg[0];
      for (double& g : dx) g += og[0];
    };
  });
  return y;
}

Tensor mean_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor y = Tensor::scalar(acc * inv);
  record_unary(y, x, [&] {
    return [inv](const std::vector<double>& og, const std::vector<std::vector<double>*>& pg) {
      auto& dx = *pg[0];
      for (double& g : dx) g += og[0] * inv;
    };
  });
  return y;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets_pm1) {
  if (!same_shape(logits.shape(), targets_pm1.shape()))
    throw ShapeError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs targets " +
                     shape_str(targets_pm1.shape()));
  const std::size_t batch = logits.rank() >= 2 ? logits.shape()[0] : 1;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const auto& a = logits.data();
  const auto& x = targets_pm1.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double y01 = 0.5 * (1.0 + x[i]);
    // max(a,0) - a*y + log(1+exp(-|a|)) is the overflow-free form
    acc += std::max(a[i], 0.0) - a[i] * y01 + std::log1p(std::exp(-std::abs(a[i])));
  }
  Tensor y = Tensor::scalar(acc * inv_batch);
  auto abuf = Access::buf(logits);
  auto xbuf = Access::buf(targets_pm1);
  record_unary(y, logits, [&] {
    return [abuf, xbuf, inv_batch](const std::vector<double>& og,
                                   const std::vector<std::vector<double>*>& pg) {
      auto& da = *pg[0];
      const auto& av = *abuf;
      const auto& xv = *xbuf;
      for (std::size_t i = 0; i < av.size(); ++i) {
        const double y01 = 0.5 * (1.0 + xv[i]);
        da[i] += og[0] * (sigmoid_s(av[i]) - y01) * inv_batch;
      }
    };
  });
  return y;
}

// --------------------------------------------------- seeded constructors

Tensor randn(Rng& rng, Shape shape) {
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = rng.normal();
  return Tensor(std::move(shape), std::move(d));
}

Tensor rand_uniform(Rng& rng, Shape shape) {
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = rng.uniform();
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace bfm
