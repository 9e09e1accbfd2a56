#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "bfm/errors.hpp"
#include "bfm/rng.hpp"

namespace bfm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);
std::string shape_str(const Shape& s);

class Tape;
namespace detail {
struct Access;
}

// Dense row-major f64 tensor. The value is immutable after construction; the
// gradient buffer is the one mutable part and is shared across copies, so a
// parameter handed to the optimizer and the copy used in the graph see the
// same accumulated gradient.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool is_scalar() const { return size() == 1; }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;

  const std::vector<double>& data() const;
  double operator[](std::size_t flat) const { return (*data_)[flat]; }
  double item() const;  // scalar only

  // Marks this tensor as a trainable leaf and allocates its (zeroed)
  // gradient buffer. Gradients accumulate across backward calls; zeroing is
  // explicit and owned by the optimizer step.
  Tensor& set_requires_grad(bool on = true);
  bool requires_grad() const { return requires_grad_; }
  bool has_grad() const { return grad_ != nullptr; }
  const std::vector<double>& grad() const;
  std::vector<double>& grad_mut();
  void zero_grad();

 private:
  friend class Tape;
  friend struct detail::Access;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
  std::uint64_t tape_id_ = 0;  // tape that recorded this tensor, 0 = none
  std::int32_t node_ = -1;
  bool requires_grad_ = false;
};

// Reverse-mode tape. Constructing a Tape makes it the active tape for the
// current thread (restored on destruction); ops record themselves while one
// is active and any involved tensor requires gradients. Nodes are stored in
// creation order, which is a topological order by construction, so backward
// is a single reverse sweep that visits each node exactly once.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(root)/d(root) = 1 and propagates to every reachable node. Leaves
  // keep their zero gradient when unreachable.
  void backward(const Tensor& root);

  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }
  static Tape* active();

 private:
  friend struct detail::Access;

  using BackFn = std::function<void(const std::vector<double>& out_grad,
                                    const std::vector<std::vector<double>*>& parent_grads)>;

  struct Node {
    std::size_t numel = 0;
    std::shared_ptr<std::vector<double>> grad;  // lazy for interior nodes
    std::vector<std::int32_t> parents;
    BackFn back;  // null for leaves
  };

  // Node id for a differentiable input: its own node if recorded here, a
  // (cached) leaf node if it is a parameter, -1 if it is a constant.
  std::int32_t parent_of(const Tensor& x);
  std::int32_t record(Tensor& out, std::vector<std::int32_t> parents, BackFn back);
  std::vector<double>& grad_of(std::int32_t node);

  std::vector<Node> nodes_;
  std::unordered_map<const void*, std::int32_t> leaf_ids_;
  std::uint64_t id_;
  Tape* prev_ = nullptr;
};

// ---- primitives (recorded on the active tape when differentiable) ----

// binary, elementwise; shapes must match or one side must be scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// unary, elementwise
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);  // domain error on non-positive entries
Tensor square(const Tensor& x);
Tensor softplus(const Tensor& x);

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
// y = x*w + b broadcast over rows; x:[B,I] w:[I,O] b:[O]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
// repeats a length-N vector into [rows,N]; backward sums over rows
Tensor tile_rows(const Tensor& v, std::size_t rows);
// gathers table rows by index; backward scatter-adds. table:[C,E] -> [B,E]
Tensor embed_rows(const Tensor& table, const std::vector<int>& idx);

// reductions
Tensor sum(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Numerically stable binary cross-entropy on logits against {-1,+1} targets,
// summed over coordinates and averaged over rows of the leading extent.
// Gradient w.r.t. logits is (sigmoid(a) - (1+x)/2) / batch.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets_pm1);

// ---- seeded constructors ----
Tensor randn(Rng& rng, Shape shape);
Tensor rand_uniform(Rng& rng, Shape shape);

}  // namespace bfm
