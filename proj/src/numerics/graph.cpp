#include "openvision/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "openvision/kernels.hpp"

namespace openvision {

namespace {

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::int64_t i = 0; i < dst.size(); ++i) {
    d[i] += s[i];
  }
}

void check(bool ok, const std::string& what) { require(ok, ErrorKind::dimension, what); }

}  // namespace

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  require(v.valid() && static_cast<std::size_t>(v.id) < nodes_.size(), ErrorKind::contract,
          "invalid graph variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  require(v.valid() && static_cast<std::size_t>(v.id) < nodes_.size(), ErrorKind::contract,
          "invalid graph variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool requires_grad, std::function<void()> backward) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) {
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
bool Graph<T>::any_requires_grad(std::initializer_list<Var> vars) const {
  return std::any_of(vars.begin(), vars.end(),
                     [&](Var v) { return v.valid() && node(v).requires_grad; });
}

template <typename T>
Tensor<T>& Graph<T>::grad_slot(Var v) {
  Node& n = node(v);
  if (n.grad.shape() != n.value().shape()) {
    n.grad = Tensor<T>(n.value().shape());
  }
  return n.grad;
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false, nullptr);
}

template <typename T>
Var Graph<T>::constant_ref(const Tensor<T>& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::parameter(Parameter<T>& param) {
  if (auto it = param_ids_.find(&param); it != param_ids_.end()) {
    return Var{it->second};
  }
  Node n;
  n.ref = &param.value;
  n.param = &param;
  n.requires_grad = param.trainable;
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::int32_t>(nodes_.size() - 1);
  param_ids_.emplace(&param, id);
  return Var{id};
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).value();
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) const {
  const Node& n = node(v);
  return n.grad.shape() == n.value().shape() ? n.grad : empty_;
}

template <typename T>
bool Graph<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  require(value(loss).size() == 1, ErrorKind::contract, "backward() needs a scalar loss");
  if (!node(loss).requires_grad) {
    return;
  }
  grad_slot(loss)[0] = T(1);
  for (std::int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.shape() != n.value().shape()) {
      continue;
    }
    if (n.backward) {
      n.backward();
    }
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.shape() != n.value().shape()) {
      continue;
    }
    Tensor<T>& dst = n.param->grad;
    if (dst.shape() != n.value().shape()) {
      dst = Tensor<T>(n.value().shape());
    }
    add_into(dst, n.grad);
  }
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  check(bv.rank() == 2, "matmul rhs must be a matrix, got " + shape_string(bv.shape()));
  const std::int64_t m = av.rows();
  const std::int64_t k = av.cols();
  const std::int64_t n = bv.cols();
  check(bv.rows() == k, "matmul inner dimension mismatch: " + shape_string(av.shape()) + " x " +
                            shape_string(bv.shape()));
  Tensor<T> out({m, n});
  kernels::gemm(av.ptr(), bv.ptr(), out.ptr(), m, k, n, false);
  const Var self = push(std::move(out), any_requires_grad({a, b}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, a, b, m, k, n, self]() {
      const Tensor<T>& g = node(self).grad;
      if (node(a).requires_grad) {
        kernels::gemm_nt(g.ptr(), value(b).ptr(), grad_slot(a).ptr(), m, n, k, true);
      }
      if (node(b).requires_grad) {
        kernels::gemm_tn(value(a).ptr(), g.ptr(), grad_slot(b).ptr(), k, m, n, true);
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::linear(Var x, Var w, Var bias) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& wv = value(w);
  const Tensor<T>& bv = value(bias);
  check(wv.rank() == 2 && wv.rows() == xv.cols(),
        "linear weight " + shape_string(wv.shape()) + " incompatible with input " +
            shape_string(xv.shape()));
  check(bv.size() == wv.cols(), "linear bias size mismatch");
  const std::int64_t m = xv.rows();
  const std::int64_t k = xv.cols();
  const std::int64_t n = wv.cols();
  Tensor<T> out({m, n});
  for (std::int64_t i = 0; i < m; ++i) {
    std::copy(bv.ptr(), bv.ptr() + n, out.ptr() + i * n);
  }
  kernels::gemm(xv.ptr(), wv.ptr(), out.ptr(), m, k, n, true);
  const Var self = push(std::move(out), any_requires_grad({x, w, bias}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, x, w, bias, m, k, n, self]() {
      const Tensor<T>& g = node(self).grad;
      if (node(x).requires_grad) {
        kernels::gemm_nt(g.ptr(), value(w).ptr(), grad_slot(x).ptr(), m, n, k, true);
      }
      if (node(w).requires_grad) {
        kernels::gemm_tn(value(x).ptr(), g.ptr(), grad_slot(w).ptr(), k, m, n, true);
      }
      if (node(bias).requires_grad) {
        T* db = grad_slot(bias).ptr();
        for (std::int64_t i = 0; i < m; ++i) {
          const T* grow = g.ptr() + i * n;
          for (std::int64_t j = 0; j < n; ++j) {
            db[j] += grow[j];
          }
        }
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  check(av.size() == bv.size(),
        "add shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor<T> out = av;
  add_into(out, bv);
  const Var self = push(std::move(out), any_requires_grad({a, b}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, a, b, self]() {
      const Tensor<T>& g = node(self).grad;
      if (node(a).requires_grad) {
        add_into(grad_slot(a), g);
      }
      if (node(b).requires_grad) {
        add_into(grad_slot(b), g);
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::add_rows(Var x, Var table) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& tv = value(table);
  const std::int64_t d = xv.cols();
  const std::int64_t period = tv.size() / std::max<std::int64_t>(d, 1);
  check(tv.cols() == d && period > 0 && xv.rows() % period == 0,
        "add_rows: table " + shape_string(tv.shape()) + " does not tile " +
            shape_string(xv.shape()));
  Tensor<T> out = xv;
  for (std::int64_t r = 0; r < xv.rows(); ++r) {
    T* orow = out.ptr() + r * d;
    const T* trow = tv.ptr() + (r % period) * d;
    for (std::int64_t j = 0; j < d; ++j) {
      orow[j] += trow[j];
    }
  }
  const Var self = push(std::move(out), any_requires_grad({x, table}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, x, table, d, period, self]() {
      const Tensor<T>& g = node(self).grad;
      if (node(x).requires_grad) {
        add_into(grad_slot(x), g);
      }
      if (node(table).requires_grad) {
        T* dt = grad_slot(table).ptr();
        for (std::int64_t r = 0; r < g.size() / d; ++r) {
          const T* grow = g.ptr() + r * d;
          T* trow = dt + (r % period) * d;
          for (std::int64_t j = 0; j < d; ++j) {
            trow[j] += grow[j];
          }
        }
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::scale(Var a, T factor) {
  Tensor<T> out = value(a);
  for (auto& v : out.data()) {
    v *= factor;
  }
  const Var self = push(std::move(out), any_requires_grad({a}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, a, factor, self]() {
      const Tensor<T>& g = node(self).grad;
      T* da = grad_slot(a).ptr();
      for (std::int64_t i = 0; i < g.size(); ++i) {
        da[i] += factor * g[i];
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  check(av.size() == bv.size(), "mul shape mismatch");
  Tensor<T> out = av;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    out[i] *= bv[i];
  }
  const Var self = push(std::move(out), any_requires_grad({a, b}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, a, b, self]() {
      const Tensor<T>& g = node(self).grad;
      if (node(a).requires_grad) {
        T* da = grad_slot(a).ptr();
        const Tensor<T>& bv2 = value(b);
        for (std::int64_t i = 0; i < g.size(); ++i) {
          da[i] += g[i] * bv2[i];
        }
      }
      if (node(b).requires_grad) {
        T* db = grad_slot(b).ptr();
        const Tensor<T>& av2 = value(a);
        for (std::int64_t i = 0; i < g.size(); ++i) {
          db[i] += g[i] * av2[i];
        }
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::sum(Var a) {
  T total = 0;
  for (T v : value(a).data()) {
    total += v;
  }
  const Var self = push(Tensor<T>({1}, total), any_requires_grad({a}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, a, self]() {
      const T g = node(self).grad[0];
      for (auto& v : grad_slot(a).data()) {
        v += g;
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::gelu(Var a) {
  // Exact (erf) form.
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  Tensor<T> out = value(a);
  for (auto& v : out.data()) {
    v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
  const Var self = push(std::move(out), any_requires_grad({a}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, a, self]() {
      constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
      const Tensor<T>& g = node(self).grad;
      const Tensor<T>& x = value(a);
      T* da = grad_slot(a).ptr();
      for (std::int64_t i = 0; i < g.size(); ++i) {
        const T xi = x[i];
        const T cdf = T(0.5) * (T(1) + std::erf(xi * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * xi * xi);
        da[i] += g[i] * (cdf + xi * pdf);
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::layer_norm(Var x, Var gamma, Var beta, T eps) {
  const Tensor<T>& xv = value(x);
  const std::int64_t d = xv.cols();
  const std::int64_t rows = xv.rows();
  check(d >= 1, "layer_norm needs a non-empty feature axis");
  check(value(gamma).size() == d && value(beta).size() == d, "layer_norm affine size mismatch");
  require(eps > T(0), ErrorKind::contract, "layer_norm eps must be positive");
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> rstd(static_cast<std::size_t>(rows));
  const T* gv = value(gamma).ptr();
  const T* bv = value(beta).ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = xv.ptr() + r * d;
    T mean = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      mean += xr[j];
    }
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[static_cast<std::size_t>(r)] = rs;
    T* hr = xhat.ptr() + r * d;
    T* orow = out.ptr() + r * d;
    for (std::int64_t j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * rs;
      orow[j] = hr[j] * gv[j] + bv[j];
    }
  }
  const Var self = push(std::move(out), any_requires_grad({x, gamma, beta}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, x, gamma, beta, d, rows, self, xhat = std::move(xhat),
                           rstd = std::move(rstd)]() {
      const Tensor<T>& g = node(self).grad;
      const T* gv2 = value(gamma).ptr();
      if (node(gamma).requires_grad || node(beta).requires_grad) {
        T* dg = node(gamma).requires_grad ? grad_slot(gamma).ptr() : nullptr;
        T* db = node(beta).requires_grad ? grad_slot(beta).ptr() : nullptr;
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* gr = g.ptr() + r * d;
          const T* hr = xhat.ptr() + r * d;
          for (std::int64_t j = 0; j < d; ++j) {
            if (dg != nullptr) {
              dg[j] += gr[j] * hr[j];
            }
            if (db != nullptr) {
              db[j] += gr[j];
            }
          }
        }
      }
      if (node(x).requires_grad) {
        T* dx = grad_slot(x).ptr();
        std::vector<T> dh(static_cast<std::size_t>(d));
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* gr = g.ptr() + r * d;
          const T* hr = xhat.ptr() + r * d;
          T mean_dh = 0;
          T mean_dh_h = 0;
          for (std::int64_t j = 0; j < d; ++j) {
            dh[static_cast<std::size_t>(j)] = gr[j] * gv2[j];
            mean_dh += dh[static_cast<std::size_t>(j)];
            mean_dh_h += dh[static_cast<std::size_t>(j)] * hr[j];
          }
          mean_dh /= static_cast<T>(d);
          mean_dh_h /= static_cast<T>(d);
          const T rs = rstd[static_cast<std::size_t>(r)];
          T* dxr = dx + r * d;
          for (std::int64_t j = 0; j < d; ++j) {
            dxr[j] += rs * (dh[static_cast<std::size_t>(j)] - mean_dh - hr[j] * mean_dh_h);
          }
        }
      }
    };
  }
  return self;
}

namespace {

// In-place stable softmax over the first `len` entries; the remaining `n - len` are set to 0.
template <typename T>
void softmax_prefix(T* row, std::int64_t len, std::int64_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::int64_t j = 0; j < len; ++j) {
    mx = std::max(mx, row[j]);
  }
  T total = 0;
  for (std::int64_t j = 0; j < len; ++j) {
    row[j] = std::exp(row[j] - mx);
    total += row[j];
  }
  const T inv = T(1) / total;
  for (std::int64_t j = 0; j < len; ++j) {
    row[j] *= inv;
  }
  for (std::int64_t j = len; j < n; ++j) {
    row[j] = T(0);
  }
}

}  // namespace

template <typename T>
Var Graph<T>::softmax_rows(Var x) {
  Tensor<T> out = value(x);
  const std::int64_t d = out.cols();
  for (std::int64_t r = 0; r < out.rows(); ++r) {
    softmax_prefix(out.ptr() + r * d, d, d);
  }
  const Var self = push(std::move(out), any_requires_grad({x}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, x, d, self]() {
      const Tensor<T>& g = node(self).grad;
      const Tensor<T>& y = value(self);
      T* dx = grad_slot(x).ptr();
      for (std::int64_t r = 0; r < y.rows(); ++r) {
        const T* yr = y.ptr() + r * d;
        const T* gr = g.ptr() + r * d;
        T dot = 0;
        for (std::int64_t j = 0; j < d; ++j) {
          dot += yr[j] * gr[j];
        }
        for (std::int64_t j = 0; j < d; ++j) {
          dx[r * d + j] += yr[j] * (gr[j] - dot);
        }
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::attention(Var q, Var k, Var v, std::int64_t batch, std::int64_t heads,
                        bool causal) {
  const Tensor<T>& qv = value(q);
  const Tensor<T>& kv = value(k);
  const Tensor<T>& vv = value(v);
  const std::int64_t d = qv.cols();
  check(batch >= 1 && heads >= 1 && d % heads == 0, "attention: width " + std::to_string(d) +
                                                       " not divisible by heads " +
                                                       std::to_string(heads));
  check(kv.cols() == d && vv.cols() == d, "attention: q/k/v widths differ");
  check(qv.rows() % batch == 0 && kv.rows() % batch == 0 && vv.rows() == kv.rows(),
        "attention: rows not divisible by batch");
  const std::int64_t n = qv.rows() / batch;
  const std::int64_t m = kv.rows() / batch;
  check(m >= 1, "attention: empty key sequence");
  check(!causal || n == m, "attention: causal mask needs equal query/key lengths");
  const std::int64_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));

  Tensor<T> out({batch * n, d});
  // Attention probabilities, [batch][heads][n][m].
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(batch * heads * n * m));
  std::vector<T> qh(static_cast<std::size_t>(n * dh));
  std::vector<T> kh(static_cast<std::size_t>(m * dh));
  std::vector<T> vh(static_cast<std::size_t>(m * dh));
  std::vector<T> oh(static_cast<std::size_t>(n * dh));
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(qv.ptr() + (b * n + i) * d + h * dh, dh, qh.data() + i * dh);
      }
      for (std::int64_t j = 0; j < m; ++j) {
        std::copy_n(kv.ptr() + (b * m + j) * d + h * dh, dh, kh.data() + j * dh);
        std::copy_n(vv.ptr() + (b * m + j) * d + h * dh, dh, vh.data() + j * dh);
      }
      T* p = probs->data() + ((b * heads + h) * n) * m;
      kernels::gemm_nt(qh.data(), kh.data(), p, n, dh, m, false);
      for (std::int64_t i = 0; i < n; ++i) {
        T* prow = p + i * m;
        for (std::int64_t j = 0; j < m; ++j) {
          prow[j] *= inv_sqrt;
        }
        softmax_prefix(prow, causal ? i + 1 : m, m);
      }
      kernels::gemm(p, vh.data(), oh.data(), n, m, dh, false);
      for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(oh.data() + i * dh, dh, out.ptr() + (b * n + i) * d + h * dh);
      }
    }
  }
  const Var self = push(std::move(out), any_requires_grad({q, k, v}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, q, k, v, batch, heads, n, m, d, dh, inv_sqrt, probs, self]() {
      const Tensor<T>& g = node(self).grad;
      const Tensor<T>& qv2 = value(q);
      const Tensor<T>& kv2 = value(k);
      const Tensor<T>& vv2 = value(v);
      const bool need_q = node(q).requires_grad;
      const bool need_k = node(k).requires_grad;
      const bool need_v = node(v).requires_grad;
      T* dq = need_q ? grad_slot(q).ptr() : nullptr;
      T* dk = need_k ? grad_slot(k).ptr() : nullptr;
      T* dv = need_v ? grad_slot(v).ptr() : nullptr;
      std::vector<T> qh2(static_cast<std::size_t>(n * dh));
      std::vector<T> kh2(static_cast<std::size_t>(m * dh));
      std::vector<T> vh2(static_cast<std::size_t>(m * dh));
      std::vector<T> gh(static_cast<std::size_t>(n * dh));
      std::vector<T> dp(static_cast<std::size_t>(n * m));
      std::vector<T> tmp_n(static_cast<std::size_t>(n * dh));
      std::vector<T> tmp_m(static_cast<std::size_t>(m * dh));
      for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t h = 0; h < heads; ++h) {
          for (std::int64_t i = 0; i < n; ++i) {
            std::copy_n(qv2.ptr() + (b * n + i) * d + h * dh, dh, qh2.data() + i * dh);
            std::copy_n(g.ptr() + (b * n + i) * d + h * dh, dh, gh.data() + i * dh);
          }
          for (std::int64_t j = 0; j < m; ++j) {
            std::copy_n(kv2.ptr() + (b * m + j) * d + h * dh, dh, kh2.data() + j * dh);
            std::copy_n(vv2.ptr() + (b * m + j) * d + h * dh, dh, vh2.data() + j * dh);
          }
          const T* p = probs->data() + ((b * heads + h) * n) * m;
          if (need_v) {
            kernels::gemm_tn(p, gh.data(), tmp_m.data(), m, n, dh, false);
            for (std::int64_t j = 0; j < m; ++j) {
              T* dst = dv + (b * m + j) * d + h * dh;
              for (std::int64_t c = 0; c < dh; ++c) {
                dst[c] += tmp_m[static_cast<std::size_t>(j * dh + c)];
              }
            }
          }
          if (!need_q && !need_k) {
            continue;
          }
          // dS = P * (dP - rowsum(dP * P)), scaled by 1/sqrt(dh).
          kernels::gemm_nt(gh.data(), vh2.data(), dp.data(), n, dh, m, false);
          for (std::int64_t i = 0; i < n; ++i) {
            const T* prow = p + i * m;
            T* drow = dp.data() + i * m;
            T dot = 0;
            for (std::int64_t j = 0; j < m; ++j) {
              dot += prow[j] * drow[j];
            }
            for (std::int64_t j = 0; j < m; ++j) {
              drow[j] = prow[j] * (drow[j] - dot) * inv_sqrt;
            }
          }
          if (need_q) {
            kernels::gemm(dp.data(), kh2.data(), tmp_n.data(), n, m, dh, false);
            for (std::int64_t i = 0; i < n; ++i) {
              T* dst = dq + (b * n + i) * d + h * dh;
              for (std::int64_t c = 0; c < dh; ++c) {
                dst[c] += tmp_n[static_cast<std::size_t>(i * dh + c)];
              }
            }
          }
          if (need_k) {
            kernels::gemm_tn(dp.data(), qh2.data(), tmp_m.data(), m, n, dh, false);
            for (std::int64_t j = 0; j < m; ++j) {
              T* dst = dk + (b * m + j) * d + h * dh;
              for (std::int64_t c = 0; c < dh; ++c) {
                dst[c] += tmp_m[static_cast<std::size_t>(j * dh + c)];
              }
            }
          }
        }
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::l2_normalize_rows(Var x) {
  const Tensor<T>& xv = value(x);
  const std::int64_t d = xv.cols();
  Tensor<T> out = xv;
  std::vector<T> norms(static_cast<std::size_t>(xv.rows()));
  for (std::int64_t r = 0; r < xv.rows(); ++r) {
    T ss = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      ss += xv.at(r, j) * xv.at(r, j);
    }
    const T norm = std::max(std::sqrt(ss), T(1e-12));
    norms[static_cast<std::size_t>(r)] = norm;
    for (std::int64_t j = 0; j < d; ++j) {
      out.at(r, j) /= norm;
    }
  }
  const Var self = push(std::move(out), any_requires_grad({x}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, x, d, self, norms = std::move(norms)]() {
      const Tensor<T>& g = node(self).grad;
      const Tensor<T>& y = value(self);
      Tensor<T>& dx = grad_slot(x);
      for (std::int64_t r = 0; r < y.rows(); ++r) {
        T dot = 0;
        for (std::int64_t j = 0; j < d; ++j) {
          dot += y.at(r, j) * g.at(r, j);
        }
        const T inv = T(1) / norms[static_cast<std::size_t>(r)];
        for (std::int64_t j = 0; j < d; ++j) {
          dx.at(r, j) += (g.at(r, j) - y.at(r, j) * dot) * inv;
        }
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::gather_rows(Var table, std::span<const std::int32_t> ids) {
  const Tensor<T>& tv = value(table);
  const std::int64_t d = tv.cols();
  const std::int64_t vocab = tv.rows();
  Tensor<T> out({static_cast<std::int64_t>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < vocab, ErrorKind::data,
            "token id " + std::to_string(ids[i]) + " outside table of " + std::to_string(vocab) +
                " rows");
    std::copy_n(tv.ptr() + ids[i] * d, d, out.ptr() + static_cast<std::int64_t>(i) * d);
  }
  const Var self = push(std::move(out), any_requires_grad({table}), nullptr);
  if (node(self).requires_grad) {
    std::vector<std::int32_t> kept(ids.begin(), ids.end());
    node(self).backward = [this, table, d, self, kept = std::move(kept)]() {
      const Tensor<T>& g = node(self).grad;
      T* dt = grad_slot(table).ptr();
      for (std::size_t i = 0; i < kept.size(); ++i) {
        const T* gr = g.ptr() + static_cast<std::int64_t>(i) * d;
        T* trow = dt + kept[i] * d;
        for (std::int64_t j = 0; j < d; ++j) {
          trow[j] += gr[j];
        }
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::select_rows(Var x, std::span<const std::int64_t> rows) {
  const Tensor<T>& xv = value(x);
  const std::int64_t d = xv.cols();
  Tensor<T> out({static_cast<std::int64_t>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < xv.rows(), "select_rows index out of range");
    std::copy_n(xv.ptr() + rows[i] * d, d, out.ptr() + static_cast<std::int64_t>(i) * d);
  }
  const Var self = push(std::move(out), any_requires_grad({x}), nullptr);
  if (node(self).requires_grad) {
    std::vector<std::int64_t> kept(rows.begin(), rows.end());
    node(self).backward = [this, x, d, self, kept = std::move(kept)]() {
      const Tensor<T>& g = node(self).grad;
      T* dx = grad_slot(x).ptr();
      for (std::size_t i = 0; i < kept.size(); ++i) {
        const T* gr = g.ptr() + static_cast<std::int64_t>(i) * d;
        T* xr = dx + kept[i] * d;
        for (std::int64_t j = 0; j < d; ++j) {
          xr[j] += gr[j];
        }
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::concat_rows(std::span<const Var> parts) {
  check(!parts.empty(), "concat_rows needs at least one input");
  const std::int64_t d = value(parts[0]).cols();
  std::int64_t total = 0;
  bool needs = false;
  for (Var p : parts) {
    check(value(p).cols() == d, "concat_rows width mismatch");
    total += value(p).rows();
    needs = needs || node(p).requires_grad;
  }
  Tensor<T> out({total, d});
  std::int64_t offset = 0;
  for (Var p : parts) {
    const Tensor<T>& pv = value(p);
    std::copy_n(pv.ptr(), pv.size(), out.ptr() + offset * d);
    offset += pv.rows();
  }
  const Var self = push(std::move(out), needs, nullptr);
  if (node(self).requires_grad) {
    std::vector<Var> kept(parts.begin(), parts.end());
    node(self).backward = [this, d, self, kept = std::move(kept)]() {
      const Tensor<T>& g = node(self).grad;
      std::int64_t off = 0;
      for (Var p : kept) {
        const std::int64_t rows = value(p).rows();
        if (node(p).requires_grad) {
          T* dp = grad_slot(p).ptr();
          const T* src = g.ptr() + off * d;
          for (std::int64_t i = 0; i < rows * d; ++i) {
            dp[i] += src[i];
          }
        }
        off += rows;
      }
    };
  }
  return self;
}

template <typename T>
Var Graph<T>::mean_row_groups(Var x, std::int64_t groups) {
  const Tensor<T>& xv = value(x);
  const std::int64_t d = xv.cols();
  check(groups >= 1 && xv.rows() % groups == 0 && xv.rows() > 0,
        "mean_row_groups: rows not divisible into groups");
  const std::int64_t len = xv.rows() / groups;
  Tensor<T> out({groups, d});
  const T inv = T(1) / static_cast<T>(len);
  for (std::int64_t gi = 0; gi < groups; ++gi) {
    T* orow = out.ptr() + gi * d;
    for (std::int64_t r = 0; r < len; ++r) {
      const T* xr = xv.ptr() + (gi * len + r) * d;
      for (std::int64_t j = 0; j < d; ++j) {
        orow[j] += xr[j];
      }
    }
    for (std::int64_t j = 0; j < d; ++j) {
      orow[j] *= inv;
    }
  }
  const Var self = push(std::move(out), any_requires_grad({x}), nullptr);
  if (node(self).requires_grad) {
    node(self).backward = [this, x, d, len, inv, self]() {
      const Tensor<T>& g = node(self).grad;
      T* dx = grad_slot(x).ptr();
      for (std::int64_t r = 0; r < g.rows() * len; ++r) {
        const T* gr = g.ptr() + (r / len) * d;
        for (std::int64_t j = 0; j < d; ++j) {
          dx[r * d + j] += gr[j] * inv;
        }
      }
    };
  }
  return self;
}

template <typename T>
typename Graph<T>::CrossEntropy Graph<T>::cross_entropy(Var logits,
                                                        std::span<const std::int32_t> targets,
                                                        std::int32_t ignore_id) {
  const Tensor<T>& lv = value(logits);
  const std::int64_t vocab = lv.cols();
  check(lv.rows() == static_cast<std::int64_t>(targets.size()),
        "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
            std::to_string(lv.rows()) + " rows");
  std::int64_t count = 0;
  for (auto t : targets) {
    if (t == ignore_id) {
      continue;
    }
    require(t >= 0 && t < vocab, ErrorKind::data,
            "target id " + std::to_string(t) + " outside vocabulary of " + std::to_string(vocab));
    ++count;
  }
  auto probs = std::make_shared<Tensor<T>>(lv.shape());
  // Extended accumulator: the mean of many near-equal terms otherwise carries
  // rounding noise that swamps small finite differences.
  long double total = 0;
  for (std::int64_t r = 0; r < lv.rows(); ++r) {
    if (targets[static_cast<std::size_t>(r)] == ignore_id) {
      continue;
    }
    const T* lr = lv.ptr() + r * vocab;
    T* pr = probs->ptr() + r * vocab;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::int64_t j = 0; j < vocab; ++j) {
      mx = std::max(mx, lr[j]);
    }
    T z = 0;
    for (std::int64_t j = 0; j < vocab; ++j) {
      pr[j] = std::exp(lr[j] - mx);
      z += pr[j];
    }
    for (std::int64_t j = 0; j < vocab; ++j) {
      pr[j] /= z;
    }
    total += static_cast<long double>(std::log(z) + mx) -
             static_cast<long double>(lr[targets[static_cast<std::size_t>(r)]]);
  }
  const T loss = count > 0 ? static_cast<T>(total / static_cast<long double>(count)) : T(0);
  const bool needs = count > 0 && node(logits).requires_grad;
  const Var self = push(Tensor<T>({1}, loss), needs, nullptr);
  if (needs) {
    std::vector<std::int32_t> kept(targets.begin(), targets.end());
    node(self).backward = [this, logits, vocab, count, ignore_id, probs, self,
                           kept = std::move(kept)]() {
      const T scale = node(self).grad[0] / static_cast<T>(count);
      T* dl = grad_slot(logits).ptr();
      for (std::size_t r = 0; r < kept.size(); ++r) {
        if (kept[r] == ignore_id) {
          continue;
        }
        const auto ri = static_cast<std::int64_t>(r);
        const T* pr = probs->ptr() + ri * vocab;
        T* dr = dl + ri * vocab;
        for (std::int64_t j = 0; j < vocab; ++j) {
          dr[j] += scale * pr[j];
        }
        dr[kept[r]] -= scale;
      }
    };
  }
  return CrossEntropy{self, count};
}

template <typename T>
Var Graph<T>::custom(std::span<const Var> inputs, Tensor<T> out, CustomBackward backward) {
  bool needs = false;
  for (Var in : inputs) {
    needs = needs || node(in).requires_grad;
  }
  const Var self = push(std::move(out), needs, nullptr);
  if (needs) {
    std::vector<Var> kept(inputs.begin(), inputs.end());
    node(self).backward = [this, self, kept = std::move(kept), backward = std::move(backward)]() {
      std::vector<Tensor<T>*> slots;
      slots.reserve(kept.size());
      for (Var in : kept) {
        slots.push_back(node(in).requires_grad ? &grad_slot(in) : nullptr);
      }
      backward(node(self).grad, slots);
    };
  }
  return self;
}

template class Graph<float>;
template class Graph<double>;

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() == 2 && b.rank() == 2, ErrorKind::dimension, "matmul expects matrices");
  Graph<T> g;
  return g.value(g.matmul(g.constant_ref(a), g.constant_ref(b)));
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  Graph<T> g;
  Tensor<T> out =
      g.value(g.layer_norm(g.constant_ref(x), g.constant_ref(gamma), g.constant_ref(beta), eps));
  return out.reshaped(x.shape());
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  Graph<T> g;
  return g.value(g.softmax_rows(g.constant_ref(x)));
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, bool causal) {
  Graph<T> g;
  return g.value(
      g.attention(g.constant_ref(q), g.constant_ref(k), g.constant_ref(v), 1, 1, causal));
}

template Tensor<float> matmul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> layer_norm(const Tensor<float>&, const Tensor<float>&,
                                  const Tensor<float>&, float);
template Tensor<double> layer_norm(const Tensor<double>&, const Tensor<double>&,
                                   const Tensor<double>&, double);
template Tensor<float> softmax_rows(const Tensor<float>&);
template Tensor<double> softmax_rows(const Tensor<double>&);
template Tensor<float> attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                 bool);
template Tensor<double> attention(const Tensor<double>&, const Tensor<double>&,
                                  const Tensor<double>&, bool);

}  // namespace openvision
