#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "openvision/params.hpp"
#include "openvision/tensor.hpp"

namespace openvision {

// Handle to a node recorded on a Graph.
struct Var {
  std::int32_t id = -1;
  bool valid() const noexcept { return id >= 0; }
};

// Reverse-mode tape covering exactly the op set the models need. Every node
// holds its forward value; backward() walks the tape in reverse and
// accumulates gradients into the parameters that were registered with
// parameter(). Nodes that do not depend on a trainable parameter carry no
// gradient and are skipped.
template <typename T>
class Graph {
 public:
  // Backward callback for custom ops: receives d(out) and one gradient slot per
  // input (nullptr when that input does not require a gradient).
  using CustomBackward = std::function<void(const Tensor<T>& dout, std::span<Tensor<T>*> dinputs)>;

  Var constant(Tensor<T> value);
  // The tensor must outlive the graph.
  Var constant_ref(const Tensor<T>& value);
  // Registers a parameter leaf. Registering the same parameter twice returns the same Var.
  Var parameter(Parameter<T>& param);

  const Tensor<T>& value(Var v) const;
  // Zero-shaped tensor when no gradient reached v.
  const Tensor<T>& grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Scalar loss only. Parameter gradients are added to Parameter::grad.
  void backward(Var loss);

  // a[m x k] . b[k x n]; inputs of higher rank are viewed as matrices over the last axis.
  Var matmul(Var a, Var b);
  // x[r x k] . w[k x n] + bias[n]
  Var linear(Var x, Var w, Var bias);
  Var add(Var a, Var b);
  // out[r] = x[r] + table[r mod table_rows]
  Var add_rows(Var x, Var table);
  Var scale(Var a, T factor);
  Var mul(Var a, Var b);
  Var sum(Var a);
  Var gelu(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, T eps);
  Var softmax_rows(Var x);
  // Multi-head scaled dot-product attention over `batch` independent sequences.
  // q: [batch*n x d], k/v: [batch*m x d]; d splits into `heads` column blocks.
  Var attention(Var q, Var k, Var v, std::int64_t batch, std::int64_t heads, bool causal);
  Var l2_normalize_rows(Var x);
  // Embedding lookup: rows of table[v x d] selected by ids.
  Var gather_rows(Var table, std::span<const std::int32_t> ids);
  // Rows of x in the given order (duplicates allowed).
  Var select_rows(Var x, std::span<const std::int64_t> rows);
  Var concat_rows(std::span<const Var> parts);
  // Mean over consecutive groups of rows: x[groups*len x d] -> [groups x d].
  Var mean_row_groups(Var x, std::int64_t groups);

  struct CrossEntropy {
    Var loss;                   // scalar mean over contributing rows
    std::int64_t contributing;  // 0 means loss is exactly 0 and carries no gradient
  };
  // Mean cross-entropy of logits[r x v] against targets; rows whose target equals
  // ignore_id are excluded.
  CrossEntropy cross_entropy(Var logits, std::span<const std::int32_t> targets,
                             std::int32_t ignore_id);

  Var custom(std::span<const Var> inputs, Tensor<T> out, CustomBackward backward);

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    std::function<void()> backward;

    const Tensor<T>& value() const { return ref != nullptr ? *ref : owned; }
  };

  Var push(Tensor<T> value, bool requires_grad, std::function<void()> backward);
  bool any_requires_grad(std::initializer_list<Var> vars) const;
  Tensor<T>& grad_slot(Var v);  // allocates zeros on first use
  const Node& node(Var v) const;
  Node& node(Var v);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::int32_t> param_ids_;
  Tensor<T> empty_;
};

extern template class Graph<float>;
extern template class Graph<double>;

// Value-level forms of the core ops (run a forward-only graph).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);
// Single-head attention: softmax(q k^T / sqrt(d)) v.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool causal);

}  // namespace openvision
