#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "light/tensor.hpp"

namespace light {

// Reverse-mode tape. Each op allocates a Node holding the forward value, its
// parents, and a closure that scatters the node's gradient into the parents.
// Graphs are rebuilt every forward pass (define-by-run).
template <typename T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backfn;

  void ensure_grad() {
    if (grad.v.empty()) grad = Tensor<T>(val.shape);
  }
  void accumulate(const Tensor<T>& g) {
    ensure_grad();
    for (size_t i = 0; i < g.v.size(); ++i) grad.v[i] += g.v[i];
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  static Var leaf(Tensor<T> t, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(t);
    n->requires_grad = requires_grad;
    n->is_leaf = true;
    return Var(n);
  }
  static Var constant(Tensor<T> t) { return leaf(std::move(t), false); }

  bool defined() const { return n_ != nullptr; }
  Node<T>& node() const { return *n_; }
  std::shared_ptr<Node<T>> ptr() const { return n_; }
  const Tensor<T>& val() const { return n_->val; }
  Tensor<T>& val_mut() { return n_->val; }
  const Tensor<T>& grad() const { return n_->grad; }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  void zero_grad() {
    if (n_) n_->grad = Tensor<T>();
  }

  // Runs reverse accumulation from this (scalar or any-shape) root.
  // Root gradient is seeded with ones.
  void backward() const {
    Node<T>* root = n_.get();
    root->ensure_grad();
    for (auto& g : root->grad.v) g = T(1);

    // Iterative post-order DFS for topological order.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    struct Frame {
      Node<T>* node;
      size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        Node<T>* p = f.node->parents[f.next_parent++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* nd = *it;
      if (nd->backfn && nd->requires_grad && !nd->grad.v.empty()) nd->backfn(*nd);
    }
  }

 private:
  std::shared_ptr<Node<T>> n_;
};

template <typename T>
Var<T> make_op(Tensor<T> out, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backfn) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(out);
  for (auto& p : parents) {
    n->parents.push_back(p.ptr());
    if (p.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) n->backfn = std::move(backfn);
  return Var<T>(n);
}

// ---- elementwise ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.val(), b.val(), "add");
  Tensor<T> out = a.val();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.val().v[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.val(), b.val(), "sub");
  Tensor<T> out = a.val();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.val().v[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      auto& p = *self.parents[1];
      p.ensure_grad();
      for (size_t i = 0; i < self.grad.v.size(); ++i) p.grad.v[i] -= self.grad.v[i];
    }
  });
}

// Hadamard product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.val(), b.val(), "mul");
  Tensor<T> out = a.val();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.val().v[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.v.size(); ++i)
        pa.grad.v[i] += self.grad.v[i] * pb.val.v[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.v.size(); ++i)
        pb.grad.v[i] += self.grad.v[i] * pa.val.v[i];
    }
  });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x *= s;
  return make_op<T>(std::move(out), {a}, [s](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.v.size(); ++i) p.grad.v[i] += self.grad.v[i] * s;
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x += s;
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = x > T(0) ? x : T(0);
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.v.size(); ++i)
      if (p.val.v[i] > T(0)) p.grad.v[i] += self.grad.v[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = T(1) / (T(1) + std::exp(-x));
  return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.v.size(); ++i) {
      T y = self.val.v[i];
      p.grad.v[i] += self.grad.v[i] * y * (T(1) - y);
    }
  });
}

// ---- reductions ----

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  T s = T(0);
  for (auto x : a.val().v) s += x;
  return make_op<T>(Tensor<T>::scalar(s), {a}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    T g = self.grad.v[0];
    for (auto& x : p.grad.v) x += g;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  size_t n = a.val().numel();
  check_shape(n > 0, "mean_all: empty tensor");
  T s = T(0);
  for (auto x : a.val().v) s += x;
  s /= static_cast<T>(n);
  return make_op<T>(Tensor<T>::scalar(s), {a}, [n](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    T g = self.grad.v[0] / static_cast<T>(n);
    for (auto& x : p.grad.v) x += g;
  });
}

// ---- shape ops ----

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int> new_shape) {
  check_shape(Tensor<T>::numel_of(new_shape) == a.val().numel(),
              "reshape: element count mismatch");
  Tensor<T> out = a.val();
  auto old_shape = a.val().shape;
  out.shape = std::move(new_shape);
  return make_op<T>(std::move(out), {a}, [old_shape](Node<T>& self) {
    Tensor<T> g = self.grad;
    g.shape = old_shape;
    self.parents[0]->accumulate(g);
  });
}

// Concatenation along the channel axis of NCHW tensors.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  check_shape(!xs.empty(), "concat_channels: no inputs");
  int n = xs[0].val().dim(0), h = xs[0].val().dim(2), w = xs[0].val().dim(3);
  int ctot = 0;
  for (auto& x : xs) {
    check_shape(x.val().ndim() == 4 && x.val().dim(0) == n && x.val().dim(2) == h &&
                    x.val().dim(3) == w,
                "concat_channels: spatial/batch mismatch");
    ctot += x.val().dim(1);
  }
  Tensor<T> out({n, ctot, h, w});
  size_t plane = static_cast<size_t>(h) * w;
  std::vector<int> offsets;
  int off = 0;
  for (auto& x : xs) {
    offsets.push_back(off);
    int c = x.val().dim(1);
    for (int b = 0; b < n; ++b) {
      const T* src = x.val().data() + static_cast<size_t>(b) * c * plane;
      T* dst = out.data() + (static_cast<size_t>(b) * ctot + off) * plane;
      std::copy(src, src + static_cast<size_t>(c) * plane, dst);
    }
    off += c;
  }
  return make_op<T>(std::move(out), xs, [n, ctot, plane, offsets](Node<T>& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      int c = p.val.shape[1];
      for (int b = 0; b < n; ++b) {
        const T* src = self.grad.data() + (static_cast<size_t>(b) * ctot + offsets[i]) * plane;
        T* dst = p.grad.data() + static_cast<size_t>(b) * c * plane;
        for (size_t k = 0; k < static_cast<size_t>(c) * plane; ++k) dst[k] += src[k];
      }
    }
  });
}

// Row-wise concatenation of 2-D tensors with equal column counts.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& xs) {
  check_shape(!xs.empty(), "concat_rows: no inputs");
  int cols = xs[0].val().dim(1);
  int rows = 0;
  for (auto& x : xs) {
    check_shape(x.val().ndim() == 2 && x.val().dim(1) == cols, "concat_rows: column mismatch");
    rows += x.val().dim(0);
  }
  Tensor<T> out({rows, cols});
  size_t off = 0;
  for (auto& x : xs) {
    std::copy(x.val().v.begin(), x.val().v.end(), out.v.begin() + off);
    off += x.val().numel();
  }
  return make_op<T>(std::move(out), xs, [](Node<T>& self) {
    size_t off = 0;
    for (auto& pp : self.parents) {
      auto& p = *pp;
      if (p.requires_grad) {
        p.ensure_grad();
        for (size_t i = 0; i < p.val.numel(); ++i) p.grad.v[i] += self.grad.v[off + i];
      }
      off += p.val.numel();
    }
  });
}

// out(i, :) = in(idx[i], :) for a 2-D tensor.
template <typename T>
Var<T> index_select_rows(const Var<T>& a, std::vector<int> idx) {
  check_shape(a.val().ndim() == 2, "index_select_rows: need 2-D input");
  int cols = a.val().dim(1);
  Tensor<T> out({static_cast<int>(idx.size()), cols});
  for (size_t i = 0; i < idx.size(); ++i) {
    check_shape(idx[i] >= 0 && idx[i] < a.val().dim(0), "index_select_rows: index out of range");
    std::copy(a.val().data() + static_cast<size_t>(idx[i]) * cols,
              a.val().data() + static_cast<size_t>(idx[i] + 1) * cols,
              out.data() + i * cols);
  }
  return make_op<T>(std::move(out), {a}, [idx, cols](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i) {
      const T* src = self.grad.data() + i * cols;
      T* dst = p.grad.data() + static_cast<size_t>(idx[i]) * cols;
      for (int k = 0; k < cols; ++k) dst[k] += src[k];
    }
  });
}

// Flattens a (1, A*K, H, W) head output to ((H*W*A), K) rows ordered
// (y, x, anchor), matching the anchor list layout.
template <typename T>
Var<T> flatten_head(const Var<T>& x, int A, int K) {
  check_shape(x.val().ndim() == 4 && x.val().dim(0) == 1 && x.val().dim(1) == A * K,
              "flatten_head: bad input shape");
  int h = x.val().dim(2), w = x.val().dim(3);
  Tensor<T> out({h * w * A, K});
  const auto& in = x.val();
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int a = 0; a < A; ++a)
        for (int k = 0; k < K; ++k)
          out[(((static_cast<size_t>(y) * w + xx) * A + a) * K + k)] = in.at(0, a * K + k, y, xx);
  return make_op<T>(std::move(out), {x}, [A, K, h, w](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int a = 0; a < A; ++a)
          for (int k = 0; k < K; ++k)
            p.grad.at(0, a * K + k, y, xx) +=
                self.grad[(((static_cast<size_t>(y) * w + xx) * A + a) * K + k)];
  });
}

}  // namespace light
