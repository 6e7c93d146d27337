#include "idrestore/autograd.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace idr::nn {

namespace {

thread_local bool grad_disabled = false;

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

Var make_op(Tensor value, std::vector<std::shared_ptr<Node>> parents,
            std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  if (!grad_disabled)
    for (const auto& p : parents) any = any || p->requires_grad;
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

// Grad buffer of a parent, or nullptr if it does not need one.
Tensor* grad_of(const std::shared_ptr<Node>& n) {
  return n->requires_grad ? &n->ensure_grad() : nullptr;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(product(shape_) == data_.size(), "Tensor: data size does not match shape");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<int> shape) const {
  return Tensor(std::move(shape), data_);
}

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(grad_disabled) { grad_disabled = true; }
NoGradGuard::~NoGradGuard() { grad_disabled = previous_; }

Tensor& Node::ensure_grad() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

void Var::zero_grad() {
  if (node_ && node_->grad.size()) node_->grad.fill(0.0);
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

void backward(const Var& scalar) {
  require(scalar.defined() && scalar.size() == 1, "backward: expected a scalar");
  if (!scalar.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{scalar.node().get(), 0}};
  seen.insert(scalar.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  scalar.node()->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  // Intermediate buffers are not needed after the sweep.
  for (Node* n : order) {
    if (n->backward) {
      n->grad = Tensor();
    }
  }
}

Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_op(std::move(out), {pa, pb}, [pa, pb](Node& self) {
    for (auto* g : {grad_of(pa), grad_of(pb)}) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  auto pa = a.node(), pb = b.node();
  return make_op(std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (auto* g = grad_of(pa))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = grad_of(pb))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  auto pa = a.node();
  return make_op(std::move(out), {pa}, [pa, s](Node& self) {
    Tensor& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var gelu(const Var& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  Tensor out = x.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  auto px = x.node();
  return make_op(std::move(out), {px}, [px](Node& self) {
    Tensor& g = px->ensure_grad();
    const Tensor& in = px->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in[i];
      const double d = 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      g[i] += d * self.grad[i];
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require(x.value().rank() == 2 && w.value().rank() == 2, "linear: expected matrices");
  const int rows = x.value().dim(0);
  const int in = x.value().dim(1);
  const int out_dim = w.value().dim(1);
  require(w.value().dim(0) == in, "linear: inner dimension mismatch " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
  if (b.defined()) require(b.size() == static_cast<std::size_t>(out_dim), "linear: bias size mismatch");

  Tensor out({rows, out_dim}, 0.0);
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  for (int r = 0; r < rows; ++r) {
    double* o = out.data() + static_cast<std::size_t>(r) * out_dim;
    if (b.defined())
      for (int j = 0; j < out_dim; ++j) o[j] = b.value()[j];
    for (int i = 0; i < in; ++i) {
      const double xi = xv[static_cast<std::size_t>(r) * in + i];
      const double* wrow = wv + static_cast<std::size_t>(i) * out_dim;
      for (int j = 0; j < out_dim; ++j) o[j] += xi * wrow[j];
    }
  }
  auto px = x.node(), pw = w.node(), pb = b.defined() ? b.node() : constant(Tensor({0})).node();
  return make_op(std::move(out), {px, pw, pb}, [px, pw, pb, rows, in, out_dim](Node& self) {
    const double* g = self.grad.data();
    if (Tensor* gx = grad_of(px)) {
      const double* wv = pw->value.data();
      for (int r = 0; r < rows; ++r)
        for (int i = 0; i < in; ++i) {
          double acc = 0.0;
          const double* wrow = wv + static_cast<std::size_t>(i) * out_dim;
          const double* grow = g + static_cast<std::size_t>(r) * out_dim;
          for (int j = 0; j < out_dim; ++j) acc += wrow[j] * grow[j];
          (*gx)[static_cast<std::size_t>(r) * in + i] += acc;
        }
    }
    if (Tensor* gw = grad_of(pw)) {
      const double* xv = px->value.data();
      for (int r = 0; r < rows; ++r)
        for (int i = 0; i < in; ++i) {
          const double xi = xv[static_cast<std::size_t>(r) * in + i];
          double* gwrow = gw->data() + static_cast<std::size_t>(i) * out_dim;
          const double* grow = g + static_cast<std::size_t>(r) * out_dim;
          for (int j = 0; j < out_dim; ++j) gwrow[j] += xi * grow[j];
        }
    }
    if (Tensor* gb = grad_of(pb)) {
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < out_dim; ++j) (*gb)[j] += g[static_cast<std::size_t>(r) * out_dim + j];
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(xv.rank() == 3 && wv.rank() == 4, "conv2d: expected [C,H,W] input and [O,C,k,k] weights");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const int O = wv.dim(0), k = wv.dim(2);
  require(wv.dim(1) == C, "conv2d: channel mismatch " + shape_string(xv.shape()) + " vs " + shape_string(wv.shape()));
  require(wv.dim(3) == k && k % 2 == 1, "conv2d: kernel must be square and odd");
  require(b.defined() && b.size() == static_cast<std::size_t>(O), "conv2d: bias size mismatch");
  const int half = k / 2;
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  Tensor out({O, H, W}, 0.0);
  for (int o = 0; o < O; ++o) {
    double* op = out.data() + o * plane;
    std::fill(op, op + plane, b.value()[o]);
    for (int c = 0; c < C; ++c) {
      const double* ip = xv.data() + c * plane;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - half;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - half;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          const double wt = wv[((static_cast<std::size_t>(o) * C + c) * k + ky) * k + kx];
          for (int y = y0; y < y1; ++y) {
            double* orow = op + static_cast<std::size_t>(y) * W;
            const double* irow = ip + static_cast<std::size_t>(y + dy) * W + dx;
            for (int xx = x0; xx < x1; ++xx) orow[xx] += wt * irow[xx];
          }
        }
      }
    }
  }

  auto px = x.node(), pw = w.node(), pb = b.node();
  return make_op(std::move(out), {px, pw, pb}, [=](Node& self) {
    const Tensor& g = self.grad;
    Tensor* gx = grad_of(px);
    Tensor* gw = grad_of(pw);
    const Tensor& xin = px->value;
    const Tensor& wts = pw->value;
    if (Tensor* gb = grad_of(pb)) {
      for (int o = 0; o < O; ++o) {
        const double* gp = g.data() + o * plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
        (*gb)[o] += acc;
      }
    }
    if (!gx && !gw) return;
    for (int o = 0; o < O; ++o) {
      const double* gp = g.data() + o * plane;
      for (int c = 0; c < C; ++c) {
        const double* ip = xin.data() + c * plane;
        double* gip = gx ? gx->data() + c * plane : nullptr;
        for (int ky = 0; ky < k; ++ky) {
          const int dy = ky - half;
          const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
          for (int kx = 0; kx < k; ++kx) {
            const int dx = kx - half;
            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
            const std::size_t widx = ((static_cast<std::size_t>(o) * C + c) * k + ky) * k + kx;
            const double wt = wts[widx];
            double acc = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* grow = gp + static_cast<std::size_t>(y) * W;
              const std::size_t off = static_cast<std::size_t>(y + dy) * W + dx;
              const double* irow = ip + off;
              if (gip) {
                double* girow = gip + off;
                for (int xx = x0; xx < x1; ++xx) {
                  acc += grow[xx] * irow[xx];
                  girow[xx] += wt * grow[xx];
                }
              } else {
                for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * irow[xx];
              }
            }
            if (gw) (*gw)[widx] += acc;
          }
        }
      }
    }
  });
}

Var add_channel_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3, "add_channel_bias: expected [C,H,W]");
  const int C = xv.dim(0);
  require(bias.size() == static_cast<std::size_t>(C), "add_channel_bias: bias must hold C values");
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor out = xv;
  for (int c = 0; c < C; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += bias.value()[c];
  auto px = x.node(), pb = bias.node();
  return make_op(std::move(out), {px, pb}, [px, pb, C, plane](Node& self) {
    if (Tensor* gx = grad_of(px))
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += self.grad[i];
    if (Tensor* gb = grad_of(pb))
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += self.grad[c * plane + i];
        (*gb)[c] += acc;
      }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  const int d = parts.front().value().dim(1);
  int rows = 0;
  for (const Var& p : parts) {
    require(p.value().rank() == 2 && p.value().dim(1) == d, "concat_rows: column mismatch");
    rows += p.value().dim(0);
  }
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(rows) * d);
  std::vector<std::shared_ptr<Node>> parents;
  for (const Var& p : parts) {
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
    parents.push_back(p.node());
  }
  auto captured = parents;
  return make_op(Tensor({rows, d}, std::move(data)), std::move(parents), [captured](Node& self) {
    std::size_t offset = 0;
    for (const auto& p : captured) {
      const std::size_t n = p->value.size();
      if (Tensor* g = grad_of(p))
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[offset + i];
      offset += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const int rows = parts.front().value().dim(0);
  int cols = 0;
  std::vector<int> widths;
  std::vector<std::shared_ptr<Node>> parents;
  for (const Var& p : parts) {
    require(p.value().rank() == 2 && p.value().dim(0) == rows, "concat_cols: row mismatch");
    widths.push_back(p.value().dim(1));
    cols += widths.back();
    parents.push_back(p.node());
  }
  Tensor out({rows, cols});
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < widths[k]; ++j)
        out[static_cast<std::size_t>(r) * cols + offset + j] =
            parts[k].value()[static_cast<std::size_t>(r) * widths[k] + j];
    offset += widths[k];
  }
  auto captured = parents;
  return make_op(std::move(out), std::move(parents), [captured, widths, rows, cols](Node& self) {
    int offset = 0;
    for (std::size_t k = 0; k < captured.size(); ++k) {
      if (Tensor* g = grad_of(captured[k]))
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < widths[k]; ++j)
            (*g)[static_cast<std::size_t>(r) * widths[k] + j] +=
                self.grad[static_cast<std::size_t>(r) * cols + offset + j];
      offset += widths[k];
    }
  });
}

Var slice_rows(const Var& x, int begin, int end) {
  require(x.value().rank() == 2, "slice_rows: expected a matrix");
  const int n = x.value().dim(0), d = x.value().dim(1);
  require(0 <= begin && begin <= end && end <= n, "slice_rows: range out of bounds");
  const auto first = x.value().values().begin() + static_cast<std::ptrdiff_t>(begin) * d;
  const auto last = x.value().values().begin() + static_cast<std::ptrdiff_t>(end) * d;
  auto px = x.node();
  return make_op(Tensor({end - begin, d}, std::vector<double>(first, last)), {px},
                 [px, begin, d](Node& self) {
                   Tensor& g = px->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     g[static_cast<std::size_t>(begin) * d + i] += self.grad[i];
                 });
}

Var cross_attention(const Var& h, const Var& tokens, const Var& wq, const Var& wk, const Var& wv) {
  const Tensor& hv = h.value();
  const Tensor& tv = tokens.value();
  require(hv.rank() == 3 && tv.rank() == 2, "cross_attention: expected [C,H,W] and [N,D]");
  const int C = hv.dim(0);
  const int P = hv.dim(1) * hv.dim(2);
  const int N = tv.dim(0), D = tv.dim(1);
  require(N >= 1, "cross_attention: empty token sequence");
  require(wq.value().rank() == 2 && wq.value().dim(0) == C, "cross_attention: wq shape");
  const int K = wq.value().dim(1);
  require(wk.value().rank() == 2 && wk.value().dim(0) == D && wk.value().dim(1) == K, "cross_attention: wk shape");
  require(wv.value().rank() == 2 && wv.value().dim(0) == D && wv.value().dim(1) == C, "cross_attention: wv shape");
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(K));

  // q: [P, K], k: [N, K], v: [N, C], a: [P, N]
  std::vector<double> q(static_cast<std::size_t>(P) * K, 0.0);
  for (int c = 0; c < C; ++c)
    for (int p = 0; p < P; ++p) {
      const double hc = hv[static_cast<std::size_t>(c) * P + p];
      for (int j = 0; j < K; ++j) q[static_cast<std::size_t>(p) * K + j] += hc * wq.value()[static_cast<std::size_t>(c) * K + j];
    }
  std::vector<double> kk(static_cast<std::size_t>(N) * K, 0.0), vv(static_cast<std::size_t>(N) * C, 0.0);
  for (int n = 0; n < N; ++n)
    for (int d = 0; d < D; ++d) {
      const double t = tv[static_cast<std::size_t>(n) * D + d];
      for (int j = 0; j < K; ++j) kk[static_cast<std::size_t>(n) * K + j] += t * wk.value()[static_cast<std::size_t>(d) * K + j];
      for (int c = 0; c < C; ++c) vv[static_cast<std::size_t>(n) * C + c] += t * wv.value()[static_cast<std::size_t>(d) * C + c];
    }
  std::vector<double> a(static_cast<std::size_t>(P) * N);
  for (int p = 0; p < P; ++p) {
    double mx = -1e300;
    for (int n = 0; n < N; ++n) {
      double s = 0.0;
      for (int j = 0; j < K; ++j) s += q[static_cast<std::size_t>(p) * K + j] * kk[static_cast<std::size_t>(n) * K + j];
      s *= inv_scale;
      a[static_cast<std::size_t>(p) * N + n] = s;
      mx = std::max(mx, s);
    }
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
      double& e = a[static_cast<std::size_t>(p) * N + n];
      e = std::exp(e - mx);
      total += e;
    }
    for (int n = 0; n < N; ++n) a[static_cast<std::size_t>(p) * N + n] /= total;
  }
  Tensor out(hv.shape(), 0.0);
  for (int p = 0; p < P; ++p)
    for (int n = 0; n < N; ++n) {
      const double w = a[static_cast<std::size_t>(p) * N + n];
      for (int c = 0; c < C; ++c) out[static_cast<std::size_t>(c) * P + p] += w * vv[static_cast<std::size_t>(n) * C + c];
    }

  auto ph = h.node(), pt = tokens.node(), pq = wq.node(), pk = wk.node(), pv = wv.node();
  return make_op(std::move(out), {ph, pt, pq, pk, pv},
                 [=, q = std::move(q), kk = std::move(kk), vv = std::move(vv), a = std::move(a)](Node& self) {
    const Tensor& G = self.grad;
    std::vector<double> dv(static_cast<std::size_t>(N) * C, 0.0);
    std::vector<double> ds(static_cast<std::size_t>(P) * N, 0.0);
    for (int p = 0; p < P; ++p) {
      double dot = 0.0;
      for (int n = 0; n < N; ++n) {
        const double w = a[static_cast<std::size_t>(p) * N + n];
        double da = 0.0;
        for (int c = 0; c < C; ++c) {
          const double g = G[static_cast<std::size_t>(c) * P + p];
          dv[static_cast<std::size_t>(n) * C + c] += w * g;
          da += g * vv[static_cast<std::size_t>(n) * C + c];
        }
        ds[static_cast<std::size_t>(p) * N + n] = da;
        dot += w * da;
      }
      for (int n = 0; n < N; ++n) {
        double& s = ds[static_cast<std::size_t>(p) * N + n];
        s = a[static_cast<std::size_t>(p) * N + n] * (s - dot) * inv_scale;
      }
    }
    std::vector<double> dq(static_cast<std::size_t>(P) * K, 0.0), dk(static_cast<std::size_t>(N) * K, 0.0);
    for (int p = 0; p < P; ++p)
      for (int n = 0; n < N; ++n) {
        const double s = ds[static_cast<std::size_t>(p) * N + n];
        for (int j = 0; j < K; ++j) {
          dq[static_cast<std::size_t>(p) * K + j] += s * kk[static_cast<std::size_t>(n) * K + j];
          dk[static_cast<std::size_t>(n) * K + j] += s * q[static_cast<std::size_t>(p) * K + j];
        }
      }
    if (Tensor* gh = grad_of(ph))
      for (int c = 0; c < C; ++c)
        for (int p = 0; p < P; ++p) {
          double acc = 0.0;
          for (int j = 0; j < K; ++j) acc += pq->value[static_cast<std::size_t>(c) * K + j] * dq[static_cast<std::size_t>(p) * K + j];
          (*gh)[static_cast<std::size_t>(c) * P + p] += acc;
        }
    if (Tensor* gq = grad_of(pq))
      for (int c = 0; c < C; ++c)
        for (int p = 0; p < P; ++p) {
          const double hc = ph->value[static_cast<std::size_t>(c) * P + p];
          for (int j = 0; j < K; ++j) (*gq)[static_cast<std::size_t>(c) * K + j] += hc * dq[static_cast<std::size_t>(p) * K + j];
        }
    Tensor* gt = grad_of(pt);
    Tensor* gk = grad_of(pk);
    Tensor* gv = grad_of(pv);
    for (int n = 0; n < N; ++n)
      for (int d = 0; d < D; ++d) {
        const double t = pt->value[static_cast<std::size_t>(n) * D + d];
        double acc = 0.0;
        for (int j = 0; j < K; ++j) {
          const double dkj = dk[static_cast<std::size_t>(n) * K + j];
          if (gk) (*gk)[static_cast<std::size_t>(d) * K + j] += t * dkj;
          acc += pk->value[static_cast<std::size_t>(d) * K + j] * dkj;
        }
        for (int c = 0; c < C; ++c) {
          const double dvc = dv[static_cast<std::size_t>(n) * C + c];
          if (gv) (*gv)[static_cast<std::size_t>(d) * C + c] += t * dvc;
          acc += pv->value[static_cast<std::size_t>(d) * C + c] * dvc;
        }
        if (gt) (*gt)[static_cast<std::size_t>(n) * D + d] += acc;
      }
  });
}

Var l2_distance(const Var& a, const Var& b) {
  require(a.size() == b.size(), "l2_distance: size mismatch");
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    ss += d * d;
  }
  const double norm = std::sqrt(ss);
  auto pa = a.node(), pb = b.node();
  return make_op(Tensor({1}, {norm}), {pa, pb}, [pa, pb, norm](Node& self) {
    if (norm == 0.0) return;
    const double g = self.grad[0] / norm;
    Tensor* ga = grad_of(pa);
    Tensor* gb = grad_of(pb);
    for (std::size_t i = 0; i < pa->value.size(); ++i) {
      const double d = (pa->value[i] - pb->value[i]) * g;
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

Var sum_scalars(std::span<const Var> scalars) {
  require(!scalars.empty(), "sum_scalars: empty");
  double total = 0.0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const Var& s : scalars) {
    require(s.size() == 1, "sum_scalars: expected scalars");
    total += s.value()[0];
    parents.push_back(s.node());
  }
  auto captured = parents;
  return make_op(Tensor({1}, {total}), std::move(parents), [captured](Node& self) {
    for (const auto& p : captured)
      if (Tensor* g = grad_of(p)) (*g)[0] += self.grad[0];
  });
}

}  // namespace idr::nn
