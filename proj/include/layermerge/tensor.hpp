#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace layermerge {

// Dense row-major tensor with an optional gradient slot, shared by value
// semantics (copies alias the same payload). Scalar type S is float for
// training and double for finite-difference gradient checks.
template <typename S>
class Tensor {
 public:
  Tensor() : p_(std::make_shared<Payload>()) {}

  explicit Tensor(std::vector<int> shape, S fill = S(0)) : p_(std::make_shared<Payload>()) {
    p_->shape = std::move(shape);
    p_->value.assign(numel_of(p_->shape), fill);
  }

  static Tensor from(std::vector<int> shape, std::vector<S> data) {
    Tensor t;
    if (numel_of(shape) != data.size())
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    t.p_->shape = std::move(shape);
    t.p_->value = std::move(data);
    return t;
  }

  const std::vector<int>& shape() const { return p_->shape; }
  int dim(size_t i) const { return p_->shape[i]; }
  size_t rank() const { return p_->shape.size(); }
  size_t numel() const { return p_->value.size(); }

  S* data() { return p_->value.data(); }
  const S* data() const { return p_->value.data(); }
  std::vector<S>& values() { return p_->value; }
  const std::vector<S>& values() const { return p_->value; }

  bool requires_grad() const { return p_->requires_grad; }
  void set_requires_grad(bool rg) {
    p_->requires_grad = rg;
    if (rg) ensure_grad();
  }

  S* grad() { return p_->grad.data(); }
  const S* grad() const { return p_->grad.data(); }
  std::vector<S>& grads() { return p_->grad; }
  void zero_grad() { std::fill(p_->grad.begin(), p_->grad.end(), S(0)); }

  // 2-D accessors (row-major).
  S& at(int r, int c) { return p_->value[size_t(r) * p_->shape[1] + c]; }
  S at(int r, int c) const { return p_->value[size_t(r) * p_->shape[1] + c]; }
  S& gat(int r, int c) { return p_->grad[size_t(r) * p_->shape[1] + c]; }

  bool same_payload(const Tensor& o) const { return p_ == o.p_; }

  static size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= size_t(d);
    return n;
  }

  static std::string shape_str(const std::vector<int>& s) {
    std::string out = "{";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "}";
  }
  std::string shape_str() const { return shape_str(p_->shape); }

 private:
  struct Payload {
    std::vector<int> shape;
    std::vector<S> value;
    std::vector<S> grad;
    bool requires_grad = false;
  };

  void ensure_grad() {
    if (p_->grad.size() != p_->value.size()) p_->grad.assign(p_->value.size(), S(0));
  }

  std::shared_ptr<Payload> p_;
};

// Reverse-mode tape: forward ops append backward closures; backward()
// replays them in exact reverse order, then clears the record.
template <typename S>
class Tape {
 public:
  void record(std::function<void()> bw) { ops_.push_back(std::move(bw)); }

  // Seeds d(loss)/d(loss) = 1 and propagates. One backward per forward.
  void backward(Tensor<S> loss) {
    if (loss.numel() != 1)
      throw std::invalid_argument("backward expects a scalar, got " + loss.shape_str());
    if (!loss.requires_grad())
      throw std::invalid_argument("backward on a tensor with no gradient path");
    loss.grad()[0] = S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  void clear() { ops_.clear(); }
  size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
};

namespace detail {

[[noreturn]] inline void shape_error(const std::string& op, const std::string& a,
                                     const std::string& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + a + " and " + b);
}

// C(M×N) += A(M×K) · B(K×N). ikj order: each C element accumulates in a
// fixed sequence, so results are bit-stable run to run.
template <typename S>
void gemm_nn(const S* a, const S* b, S* c, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const S* arow = a + size_t(i) * K;
    S* crow = c + size_t(i) * N;
    for (int k = 0; k < K; ++k) {
      S av = arow[k];
      if (av == S(0)) continue;
      const S* brow = b + size_t(k) * N;
      for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(M×N) += Aᵀ(M×K) · B(K×N) where A is stored K×M.
template <typename S>
void gemm_tn(const S* a, const S* b, S* c, int M, int K, int N) {
  for (int k = 0; k < K; ++k) {
    const S* arow = a + size_t(k) * M;
    const S* brow = b + size_t(k) * N;
    for (int i = 0; i < M; ++i) {
      S av = arow[i];
      if (av == S(0)) continue;
      S* crow = c + size_t(i) * N;
      for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(M×N) += A(M×K) · Bᵀ(K×N) where B is stored N×K. The dot product runs
// in eight fixed lanes so the reduction vectorizes without reassociating a
// single accumulator; the summation order stays bit-stable run to run.
template <typename S>
void gemm_nt(const S* a, const S* b, S* c, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const S* arow = a + size_t(i) * K;
    S* crow = c + size_t(i) * N;
    for (int j = 0; j < N; ++j) {
      const S* brow = b + size_t(j) * K;
      S lane[8] = {};
      int k = 0;
      for (; k + 8 <= K; k += 8)
        for (int l = 0; l < 8; ++l) lane[l] += arow[k + l] * brow[k + l];
      S acc = ((lane[0] + lane[4]) + (lane[2] + lane[6])) +
              ((lane[1] + lane[5]) + (lane[3] + lane[7]));
      for (; k < K; ++k) acc += arow[k] * brow[k];
      crow[j] += acc;
    }
  }
}

}  // namespace detail

// ---- primitive ops ---------------------------------------------------
// Every op: eager forward; if a tape is given and any input carries a
// gradient path, the output joins the path and a backward closure is
// recorded. Passing tape = nullptr runs pure inference.

template <typename S>
Tensor<S> matmul(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    detail::shape_error("matmul", a.shape_str(), b.shape_str());
  int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<S> out({M, N});
  detail::gemm_nn(a.data(), b.data(), out.data(), M, K, N);
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> ac = a, bc = b, oc = out;
    tape->record([ac, bc, oc, M, K, N]() mutable {
      if (ac.requires_grad()) detail::gemm_nt(oc.grad(), bc.data(), ac.grad(), M, N, K);
      if (bc.requires_grad()) detail::gemm_tn(ac.data(), oc.grad(), bc.grad(), K, M, N);
    });
  }
  return out;
}

template <typename S>
Tensor<S> add(Tape<S>* tape, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) detail::shape_error("add", a.shape_str(), b.shape_str());
  Tensor<S> out(a.shape());
  for (size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> ac = a, bc = b, oc = out;
    tape->record([ac, bc, oc]() mutable {
      const S* og = oc.grad();
      if (ac.requires_grad()) {
        S* ag = ac.grad();
        for (size_t i = 0; i < ac.numel(); ++i) ag[i] += og[i];
      }
      if (bc.requires_grad()) {
        S* bg = bc.grad();
        for (size_t i = 0; i < bc.numel(); ++i) bg[i] += og[i];
      }
    });
  }
  return out;
}

// x: N×C, bias: {C}, broadcast over rows.
template <typename S>
Tensor<S> add_bias(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& b) {
  if (x.rank() != 2 || b.rank() != 1 || x.dim(1) != b.dim(0))
    detail::shape_error("add_bias", x.shape_str(), b.shape_str());
  int N = x.dim(0), C = x.dim(1);
  Tensor<S> out({N, C});
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < C; ++j) out.at(i, j) = x.at(i, j) + b.data()[j];
  if (tape && (x.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, bc = b, oc = out;
    tape->record([xc, bc, oc, N, C]() mutable {
      const S* og = oc.grad();
      if (xc.requires_grad()) {
        S* xg = xc.grad();
        for (size_t i = 0; i < xc.numel(); ++i) xg[i] += og[i];
      }
      if (bc.requires_grad()) {
        S* bg = bc.grad();
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < C; ++j) bg[j] += og[size_t(i) * C + j];
      }
    });
  }
  return out;
}

namespace detail {

template <typename S, typename F, typename G>
Tensor<S> unary_op(Tape<S>* tape, const Tensor<S>& x, F fwd, G dfdx) {
  Tensor<S> out(x.shape());
  const S* xd = x.data();
  S* od = out.data();
  for (size_t i = 0; i < x.numel(); ++i) od[i] = fwd(xd[i]);
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape->record([xc, oc, dfdx]() mutable {
      const S* xv = xc.data();
      const S* og = oc.grad();
      S* xg = xc.grad();
      for (size_t i = 0; i < xc.numel(); ++i) xg[i] += og[i] * dfdx(xv[i]);
    });
  }
  return out;
}

}  // namespace detail

// Subgradient conventions: relu'(0) = 0; leaky_relu'(0) = 1; elu'(0) = 1.
template <typename S>
Tensor<S> relu(Tape<S>* tape, const Tensor<S>& x) {
  return detail::unary_op(
      tape, x, [](S v) { return v > S(0) ? v : S(0); },
      [](S v) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> leaky_relu(Tape<S>* tape, const Tensor<S>& x, S slope = S(0.2)) {
  return detail::unary_op(
      tape, x, [slope](S v) { return v > S(0) ? v : slope * v; },
      [slope](S v) { return v >= S(0) ? S(1) : slope; });
}

template <typename S>
Tensor<S> elu(Tape<S>* tape, const Tensor<S>& x) {
  return detail::unary_op(
      tape, x, [](S v) { return v > S(0) ? v : std::expm1(v); },
      [](S v) { return v >= S(0) ? S(1) : std::exp(v); });
}

// Horizontal concatenation of 2-D tensors with equal row counts.
template <typename S>
Tensor<S> concat_cols(Tape<S>* tape, const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  int N = parts[0].dim(0), C = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != N)
      detail::shape_error("concat_cols", parts[0].shape_str(), p.shape_str());
    C += p.dim(1);
  }
  Tensor<S> out({N, C});
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < N; ++i)
      std::copy_n(p.data() + size_t(i) * p.dim(1), p.dim(1),
                  out.data() + size_t(i) * C + off);
    off += p.dim(1);
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    std::vector<Tensor<S>> pc = parts;
    Tensor<S> oc = out;
    tape->record([pc, oc, N, C]() mutable {
      int off = 0;
      for (auto& p : pc) {
        if (p.requires_grad())
          for (int i = 0; i < N; ++i)
            for (int j = 0; j < p.dim(1); ++j)
              p.gat(i, j) += oc.grad()[size_t(i) * C + off + j];
        off += p.dim(1);
      }
    });
  }
  return out;
}

// Vertical concatenation of 2-D tensors with equal column counts.
template <typename S>
Tensor<S> stack_rows(Tape<S>* tape, const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack_rows: no inputs");
  int C = parts[0].dim(1), N = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != C)
      detail::shape_error("stack_rows", parts[0].shape_str(), p.shape_str());
    N += p.dim(0);
  }
  Tensor<S> out({N, C});
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.data(), p.numel(), out.data() + off);
    off += p.numel();
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    out.set_requires_grad(true);
    std::vector<Tensor<S>> pc = parts;
    Tensor<S> oc = out;
    tape->record([pc, oc]() mutable {
      size_t off = 0;
      for (auto& p : pc) {
        if (p.requires_grad())
          for (size_t i = 0; i < p.numel(); ++i) p.grad()[i] += oc.grad()[off + i];
        off += p.numel();
      }
    });
  }
  return out;
}

// Copying reshape; numel must be preserved.
template <typename S>
Tensor<S> reshape(Tape<S>* tape, const Tensor<S>& x, std::vector<int> shape) {
  if (Tensor<S>::numel_of(shape) != x.numel())
    detail::shape_error("reshape", x.shape_str(), Tensor<S>::shape_str(shape));
  Tensor<S> out = Tensor<S>::from(std::move(shape), x.values());
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape->record([xc, oc]() mutable {
      for (size_t i = 0; i < xc.numel(); ++i) xc.grad()[i] += oc.grad()[i];
    });
  }
  return out;
}

// Row gather: out[e,:] = x[idx[e],:]. Backward scatter-adds.
template <typename S>
Tensor<S> index_rows(Tape<S>* tape, const Tensor<S>& x, const std::vector<int>& idx) {
  if (x.rank() != 2) detail::shape_error("index_rows", x.shape_str(), "{rows}");
  int F = x.dim(1);
  Tensor<S> out({int(idx.size()), F});
  for (size_t e = 0; e < idx.size(); ++e)
    std::copy_n(x.data() + size_t(idx[e]) * F, F, out.data() + e * F);
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape->record([xc, oc, idx, F]() mutable {
      for (size_t e = 0; e < idx.size(); ++e)
        for (int j = 0; j < F; ++j) xc.gat(idx[e], j) += oc.gat(int(e), j);
    });
  }
  return out;
}

// out[e,:] = x[e,:] * s[e]; s has shape {E}. s may itself carry gradients
// (attention weights) or be a plain constant (1/degree factors).
template <typename S>
Tensor<S> scale_rows(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& s) {
  if (x.rank() != 2 || s.rank() != 1 || x.dim(0) != s.dim(0))
    detail::shape_error("scale_rows", x.shape_str(), s.shape_str());
  int E = x.dim(0), F = x.dim(1);
  Tensor<S> out({E, F});
  for (int e = 0; e < E; ++e)
    for (int j = 0; j < F; ++j) out.at(e, j) = x.at(e, j) * s.data()[e];
  if (tape && (x.requires_grad() || s.requires_grad())) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, sc = s, oc = out;
    tape->record([xc, sc, oc, E, F]() mutable {
      if (xc.requires_grad())
        for (int e = 0; e < E; ++e)
          for (int j = 0; j < F; ++j) xc.gat(e, j) += oc.gat(e, j) * sc.data()[e];
      if (sc.requires_grad())
        for (int e = 0; e < E; ++e) {
          S acc = S(0);
          for (int j = 0; j < F; ++j) acc += oc.gat(e, j) * xc.at(e, j);
          sc.grad()[e] += acc;
        }
    });
  }
  return out;
}

// Scatter-add of arc rows onto their destination nodes:
// out[n,:] = Σ_{e: dst[e]=n} x[e,:].
template <typename S>
Tensor<S> segment_sum(Tape<S>* tape, const Tensor<S>& x, const std::vector<int>& dst,
                      int n_nodes) {
  if (x.rank() != 2 || size_t(x.dim(0)) != dst.size())
    detail::shape_error("segment_sum", x.shape_str(), "{" + std::to_string(dst.size()) + ",*}");
  int E = x.dim(0), F = x.dim(1);
  Tensor<S> out({n_nodes, F});
  for (int e = 0; e < E; ++e)
    for (int j = 0; j < F; ++j) out.at(dst[size_t(e)], j) += x.at(e, j);
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape->record([xc, oc, dst, E, F]() mutable {
      for (int e = 0; e < E; ++e)
        for (int j = 0; j < F; ++j) xc.gat(e, j) += oc.gat(dst[size_t(e)], j);
    });
  }
  return out;
}

// Softmax over arcs sharing a destination (Eq. 3): within each destination
// segment, scores are max-subtracted, exponentiated, and normalized to 1.
template <typename S>
Tensor<S> segment_softmax(Tape<S>* tape, const Tensor<S>& scores, const std::vector<int>& dst,
                          int n_nodes) {
  if (scores.rank() != 1 || size_t(scores.dim(0)) != dst.size())
    detail::shape_error("segment_softmax", scores.shape_str(),
                        "{" + std::to_string(dst.size()) + "}");
  int E = scores.dim(0);
  Tensor<S> out({E});
  std::vector<S> mx(size_t(n_nodes), std::numeric_limits<S>::lowest());
  for (int e = 0; e < E; ++e) mx[size_t(dst[size_t(e)])] = std::max(mx[size_t(dst[size_t(e)])], scores.data()[e]);
  std::vector<S> denom(size_t(n_nodes), S(0));
  for (int e = 0; e < E; ++e) {
    S v = std::exp(scores.data()[e] - mx[size_t(dst[size_t(e)])]);
    out.data()[e] = v;
    denom[size_t(dst[size_t(e)])] += v;
  }
  for (int e = 0; e < E; ++e) out.data()[e] /= denom[size_t(dst[size_t(e)])];
  if (tape && scores.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> sc = scores, oc = out;
    tape->record([sc, oc, dst, E, n_nodes]() mutable {
      // dL/dx_e = y_e (g_e − Σ_{f in seg} g_f y_f)
      std::vector<S> seg_dot(size_t(n_nodes), S(0));
      for (int e = 0; e < E; ++e)
        seg_dot[size_t(dst[size_t(e)])] += oc.grad()[e] * oc.data()[e];
      for (int e = 0; e < E; ++e)
        sc.grad()[e] += oc.data()[e] * (oc.grad()[e] - seg_dot[size_t(dst[size_t(e)])]);
    });
  }
  return out;
}

// conv2d over NCHW input, weight Co×Ci×kh×kw, bias {Co}. Stride 1 unless
// stated; zero padding. Backward re-derives the im2col patches.
template <typename S>
Tensor<S> conv2d(Tape<S>* tape, const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int stride = 1, int pad = 1) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1 || x.dim(1) != w.dim(1) ||
      w.dim(0) != b.dim(0))
    detail::shape_error("conv2d", x.shape_str(), w.shape_str());
  int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int Ho = (H + 2 * pad - kh) / stride + 1;
  int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) detail::shape_error("conv2d", x.shape_str(), w.shape_str());

  int K = Ci * kh * kw, P = Ho * Wo;
  auto im2col = [=](const S* img, S* cols) {
    // cols is K×P
    for (int c = 0; c < Ci; ++c)
      for (int dy = 0; dy < kh; ++dy)
        for (int dx = 0; dx < kw; ++dx) {
          S* row = cols + size_t((c * kh + dy) * kw + dx) * P;
          for (int oy = 0; oy < Ho; ++oy) {
            int iy = oy * stride + dy - pad;
            for (int ox = 0; ox < Wo; ++ox) {
              int ix = ox * stride + dx - pad;
              row[oy * Wo + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                      ? img[(size_t(c) * H + iy) * W + ix]
                                      : S(0);
            }
          }
        }
  };

  Tensor<S> out({B, Co, Ho, Wo});
  std::vector<S> cols(size_t(K) * P);
  for (int n = 0; n < B; ++n) {
    im2col(x.data() + size_t(n) * Ci * H * W, cols.data());
    S* o = out.data() + size_t(n) * Co * P;
    for (int co = 0; co < Co; ++co) {
      S bias = b.data()[co];
      for (int p = 0; p < P; ++p) o[size_t(co) * P + p] = bias;
    }
    detail::gemm_nn(w.data(), cols.data(), o, Co, K, P);
  }

  if (tape && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    // Transposed patch matrix (P×K) turns d(w) = d(out)·colsᵀ into the
    // saxpy-form gemm, which is the fast kernel here.
    auto im2colT = [=](const S* img, S* colsT) {
      for (int c = 0; c < Ci; ++c)
        for (int dy = 0; dy < kh; ++dy)
          for (int dx = 0; dx < kw; ++dx) {
            int col = (c * kh + dy) * kw + dx;
            for (int oy = 0; oy < Ho; ++oy) {
              int iy = oy * stride + dy - pad;
              for (int ox = 0; ox < Wo; ++ox) {
                int ix = ox * stride + dx - pad;
                colsT[size_t(oy * Wo + ox) * K + col] =
                    (iy >= 0 && iy < H && ix >= 0 && ix < W)
                        ? img[(size_t(c) * H + iy) * W + ix]
                        : S(0);
              }
            }
          }
    };
    Tensor<S> xc = x, wc = w, bc = b, oc = out;
    tape->record([xc, wc, bc, oc, im2colT, B, Ci, H, W, Co, kh, kw, Ho, Wo, K, P, stride,
                  pad]() mutable {
      std::vector<S> colsT(size_t(K) * P), dcols(size_t(K) * P);
      for (int n = 0; n < B; ++n) {
        const S* go = oc.grad() + size_t(n) * Co * P;
        if (bc.requires_grad()) {
          S* bg = bc.grad();
          for (int co = 0; co < Co; ++co)
            for (int p = 0; p < P; ++p) bg[co] += go[size_t(co) * P + p];
        }
        if (wc.requires_grad()) {
          im2colT(xc.data() + size_t(n) * Ci * H * W, colsT.data());
          detail::gemm_nn(go, colsT.data(), wc.grad(), Co, P, K);
        }
        if (xc.requires_grad()) {
          std::fill(dcols.begin(), dcols.end(), S(0));
          detail::gemm_tn(wc.data(), go, dcols.data(), K, Co, P);
          S* gx = xc.grad() + size_t(n) * Ci * H * W;
          for (int c = 0; c < Ci; ++c)
            for (int dy = 0; dy < kh; ++dy)
              for (int dx = 0; dx < kw; ++dx) {
                const S* row = dcols.data() + size_t((c * kh + dy) * kw + dx) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                  int iy = oy * stride + dy - pad;
                  if (iy < 0 || iy >= H) continue;
                  for (int ox = 0; ox < Wo; ++ox) {
                    int ix = ox * stride + dx - pad;
                    if (ix >= 0 && ix < W) gx[(size_t(c) * H + iy) * W + ix] += row[oy * Wo + ox];
                  }
                }
              }
        }
      }
    });
  }
  return out;
}

// Max pooling over NCHW with square kernel/stride; ties resolve to the
// first cell in scan order. Recorded argmax drives the backward scatter.
template <typename S>
Tensor<S> maxpool2d(Tape<S>* tape, const Tensor<S>& x, int k, int stride) {
  if (x.rank() != 4) detail::shape_error("maxpool2d", x.shape_str(), "{B,C,H,W}");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) detail::shape_error("maxpool2d", x.shape_str(), "{kernel}");
  Tensor<S> out({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int>>(out.numel());
  size_t o = 0;
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const S* plane = x.data() + (size_t(n) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++o) {
          int by = oy * stride, bx = ox * stride;
          int best = by * W + bx;
          S bv = plane[best];
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              int i = (by + dy) * W + (bx + dx);
              if (plane[i] > bv) {
                bv = plane[i];
                best = i;
              }
            }
          out.data()[o] = bv;
          (*argmax)[o] = int((size_t(n) * C + c) * H * W) + best;
        }
    }
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape->record([xc, oc, argmax]() mutable {
      S* xg = xc.grad();
      const S* og = oc.grad();
      for (size_t i = 0; i < oc.numel(); ++i) xg[size_t((*argmax)[i])] += og[i];
    });
  }
  return out;
}

// Σ_i x_i · w_i with constant weights; the scalarizer for gradient checks.
template <typename S>
Tensor<S> weighted_sum(Tape<S>* tape, const Tensor<S>& x, const std::vector<S>& w) {
  if (x.numel() != w.size())
    detail::shape_error("weighted_sum", x.shape_str(), "{" + std::to_string(w.size()) + "}");
  Tensor<S> out({1});
  S acc = S(0);
  for (size_t i = 0; i < w.size(); ++i) acc += x.data()[i] * w[i];
  out.data()[0] = acc;
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> xc = x, oc = out;
    tape->record([xc, oc, w]() mutable {
      for (size_t i = 0; i < w.size(); ++i) xc.grad()[i] += oc.grad()[0] * w[i];
    });
  }
  return out;
}

// Mean of −log softmax(logits)[label] over rows with mask ≠ 0.
template <typename S>
Tensor<S> cross_entropy(Tape<S>* tape, const Tensor<S>& logits, const std::vector<int>& labels,
                        const std::vector<uint8_t>& mask) {
  if (logits.rank() != 2 || size_t(logits.dim(0)) != labels.size() ||
      labels.size() != mask.size())
    detail::shape_error("cross_entropy", logits.shape_str(),
                        "{" + std::to_string(labels.size()) + ",*}");
  int N = logits.dim(0), C = logits.dim(1);
  int n_masked = 0;
  for (uint8_t m : mask) n_masked += m ? 1 : 0;
  if (n_masked == 0) throw std::invalid_argument("cross_entropy: all rows masked out");

  Tensor<S> out({1});
  auto probs = std::make_shared<std::vector<S>>(size_t(N) * C);
  S loss = S(0);
  for (int i = 0; i < N; ++i) {
    if (!mask[size_t(i)]) continue;
    const S* row = logits.data() + size_t(i) * C;
    S mx = row[0];
    for (int j = 1; j < C; ++j) mx = std::max(mx, row[j]);
    S denom = S(0);
    for (int j = 0; j < C; ++j) denom += std::exp(row[j] - mx);
    for (int j = 0; j < C; ++j) (*probs)[size_t(i) * C + j] = std::exp(row[j] - mx) / denom;
    loss -= std::log((*probs)[size_t(i) * C + labels[size_t(i)]]);
  }
  out.data()[0] = loss / S(n_masked);

  if (tape && logits.requires_grad()) {
    out.set_requires_grad(true);
    Tensor<S> lc = logits, oc = out;
    tape->record([lc, oc, probs, labels, mask, N, C, n_masked]() mutable {
      S g = oc.grad()[0] / S(n_masked);
      for (int i = 0; i < N; ++i) {
        if (!mask[size_t(i)]) continue;
        for (int j = 0; j < C; ++j) {
          S p = (*probs)[size_t(i) * C + j];
          lc.gat(i, j) += g * (p - (labels[size_t(i)] == j ? S(1) : S(0)));
        }
      }
    });
  }
  return out;
}

}  // namespace layermerge
