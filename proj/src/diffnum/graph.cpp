#include "ptznav/diffnum/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ptznav::diffnum {

namespace {

// C[M,N] += A[M,K] * B[K,N]; axpy inner loop, contiguous in N.
void mm_nn(const double* a, const double* b, double* c, int m_dim, int k_dim,
           int n_dim) {
  for (int m = 0; m < m_dim; ++m) {
    double* crow = c + static_cast<std::size_t>(m) * n_dim;
    const double* arow = a + static_cast<std::size_t>(m) * k_dim;
    for (int k = 0; k < k_dim; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(k) * n_dim;
      for (int n = 0; n < n_dim; ++n) crow[n] += av * brow[n];
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N].
void mm_tn(const double* a, const double* b, double* c, int m_dim, int k_dim,
           int n_dim) {
  for (int k = 0; k < k_dim; ++k) {
    const double* arow = a + static_cast<std::size_t>(k) * m_dim;
    const double* brow = b + static_cast<std::size_t>(k) * n_dim;
    for (int m = 0; m < m_dim; ++m) {
      const double av = arow[m];
      if (av == 0.0) continue;
      double* crow = c + static_cast<std::size_t>(m) * n_dim;
      for (int n = 0; n < n_dim; ++n) crow[n] += av * brow[n];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T; dot inner loop.
void mm_nt(const double* a, const double* b, double* c, int m_dim, int k_dim,
           int n_dim) {
  for (int m = 0; m < m_dim; ++m) {
    const double* arow = a + static_cast<std::size_t>(m) * k_dim;
    double* crow = c + static_cast<std::size_t>(m) * n_dim;
    for (int n = 0; n < n_dim; ++n) {
      const double* brow = b + static_cast<std::size_t>(n) * k_dim;
      double acc = 0.0;
      for (int k = 0; k < k_dim; ++k) acc += arow[k] * brow[k];
      crow[n] += acc;
    }
  }
}

struct ConvDims {
  int n, c, h, w;       // input
  int f, kh, kw;        // filters
  int stride, pad;
  int ho, wo;

  std::size_t col_rows() const {
    return static_cast<std::size_t>(c) * kh * kw;
  }
  std::size_t col_cols() const { return static_cast<std::size_t>(ho) * wo; }
};

void im2col(const double* x, const ConvDims& d, double* col) {
  // col[(c*kh+ki)*kw+kj][io*wo+jo] = x[c][io*s-p+ki][jo*s-p+kj] (0 outside)
  std::size_t row = 0;
  for (int c = 0; c < d.c; ++c) {
    const double* plane = x + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj, ++row) {
        double* out = col + row * d.col_cols();
        for (int io = 0; io < d.ho; ++io) {
          const int iy = io * d.stride - d.pad + ki;
          double* orow = out + static_cast<std::size_t>(io) * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill(orow, orow + d.wo, 0.0);
            continue;
          }
          const double* xrow = plane + static_cast<std::size_t>(iy) * d.w;
          for (int jo = 0; jo < d.wo; ++jo) {
            const int jx = jo * d.stride - d.pad + kj;
            orow[jo] = (jx >= 0 && jx < d.w) ? xrow[jx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvDims& d, double* x) {
  std::size_t row = 0;
  for (int c = 0; c < d.c; ++c) {
    double* plane = x + static_cast<std::size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj, ++row) {
        const double* in = col + row * d.col_cols();
        for (int io = 0; io < d.ho; ++io) {
          const int iy = io * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.h) continue;
          double* xrow = plane + static_cast<std::size_t>(iy) * d.w;
          const double* irow = in + static_cast<std::size_t>(io) * d.wo;
          for (int jo = 0; jo < d.wo; ++jo) {
            const int jx = jo * d.stride - d.pad + kj;
            if (jx >= 0 && jx < d.w) xrow[jx] += irow[jo];
          }
        }
      }
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Graph::NodeId Graph::push(Tensor value,
                          std::function<void(Graph&, NodeId)> backprop) {
  Node node;
  node.grad = Tensor(value.shape);
  node.value = std::move(value);
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Graph::NodeId Graph::input(Tensor value) { return push(std::move(value), {}); }

Graph::NodeId Graph::param(const Tensor& value, Tensor* grad_sink) {
  return push(value, [grad_sink](Graph& g, NodeId id) {
    const Tensor& grad = g.grad(id);
    if (!grad_sink->same_shape(grad))
      throw std::invalid_argument("param: gradient sink shape mismatch");
    for (std::size_t i = 0; i < grad.numel(); ++i)
      grad_sink->data[i] += grad.data[i];
  });
}

Graph::NodeId Graph::affine(NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 ||
      xv.dim(1) != wv.dim(1) || wv.dim(0) != bv.dim(0))
    throw std::invalid_argument("affine: shape mismatch x" + xv.shape_str() +
                                " w" + wv.shape_str() + " b" + bv.shape_str());
  const int n = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  Tensor y({n, out});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out; ++j) y.data[i * out + j] = bv.data[j];
  mm_nt(xv.ptr(), wv.ptr(), y.ptr(), n, in, out);

  return push(std::move(y), [x, w, b, n, in, out](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    // dx = dy W; dW = dy^T x; db = column sums of dy.
    mm_nn(dy.ptr(), g.value(w).ptr(), g.grad_mut(x).ptr(), n, out, in);
    mm_tn(dy.ptr(), g.value(x).ptr(), g.grad_mut(w).ptr(), out, n, in);
    Tensor& db = g.grad_mut(b);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out; ++j) db.data[j] += dy.data[i * out + j];
  });
}

Graph::NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b, int stride,
                            int pad) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.rank() != 4 || wv.rank() != 4 || bv.rank() != 1 ||
      xv.dim(1) != wv.dim(1) || wv.dim(0) != bv.dim(0))
    throw std::invalid_argument("conv2d: shape mismatch x" + xv.shape_str() +
                                " w" + wv.shape_str());
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");

  ConvDims d;
  d.n = xv.dim(0);
  d.c = xv.dim(1);
  d.h = xv.dim(2);
  d.w = xv.dim(3);
  d.f = wv.dim(0);
  d.kh = wv.dim(2);
  d.kw = wv.dim(3);
  d.stride = stride;
  d.pad = pad;
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.ho <= 0 || d.wo <= 0)
    throw std::invalid_argument("conv2d: kernel larger than padded input");

  const std::size_t ckk = d.col_rows(), hw = d.col_cols();
  auto cols = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(d.n) * ckk * hw);

  Tensor y({d.n, d.f, d.ho, d.wo});
  const std::size_t x_stride = static_cast<std::size_t>(d.c) * d.h * d.w;
  const std::size_t y_stride = static_cast<std::size_t>(d.f) * hw;
  for (int n = 0; n < d.n; ++n) {
    double* col = cols->data() + n * ckk * hw;
    im2col(xv.ptr() + n * x_stride, d, col);
    double* yn = y.ptr() + n * y_stride;
    for (int f = 0; f < d.f; ++f)
      std::fill(yn + f * hw, yn + (f + 1) * hw, bv.data[f]);
    mm_nn(wv.ptr(), col, yn, d.f, static_cast<int>(ckk),
          static_cast<int>(hw));
  }

  return push(std::move(y), [x, w, b, d, cols, x_stride, y_stride, ckk,
                             hw](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    Tensor& dx = g.grad_mut(x);
    Tensor& dw = g.grad_mut(w);
    Tensor& db = g.grad_mut(b);
    const Tensor& wv = g.value(w);
    std::vector<double> colT(hw * ckk);
    std::vector<double> dcol(ckk * hw);
    for (int n = 0; n < d.n; ++n) {
      const double* col = cols->data() + n * ckk * hw;
      const double* dyn = dy.ptr() + n * y_stride;
      // db
      for (int f = 0; f < d.f; ++f) {
        double acc = 0.0;
        const double* row = dyn + f * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += row[i];
        db.data[f] += acc;
      }
      // dW += dy_n * col^T (via an explicit transpose to keep axpy form)
      for (std::size_t r = 0; r < ckk; ++r)
        for (std::size_t q = 0; q < hw; ++q) colT[q * ckk + r] = col[r * hw + q];
      mm_nn(dyn, colT.data(), dw.ptr(), d.f, static_cast<int>(hw),
            static_cast<int>(ckk));
      // dcol = W^T * dy_n, then scatter back to dx.
      std::fill(dcol.begin(), dcol.end(), 0.0);
      mm_tn(wv.ptr(), dyn, dcol.data(), static_cast<int>(ckk), d.f,
            static_cast<int>(hw));
      col2im_add(dcol.data(), d, dx.ptr() + n * x_stride);
    }
  });
}

Graph::NodeId Graph::relu(NodeId x) {
  Tensor y = value(x);
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(y), [x](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    const Tensor& xv = g.value(x);
    Tensor& dx = g.grad_mut(x);
    for (std::size_t i = 0; i < dy.numel(); ++i)
      if (xv.data[i] > 0.0) dx.data[i] += dy.data[i];
  });
}

Graph::NodeId Graph::sigmoid(NodeId x) {
  Tensor y = value(x);
  for (double& v : y.data) v = stable_sigmoid(v);
  return push(std::move(y), [x](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    const Tensor& yv = g.value(id);
    Tensor& dx = g.grad_mut(x);
    for (std::size_t i = 0; i < dy.numel(); ++i)
      dx.data[i] += dy.data[i] * yv.data[i] * (1.0 - yv.data[i]);
  });
}

Graph::NodeId Graph::tanh_op(NodeId x) {
  Tensor y = value(x);
  for (double& v : y.data) v = std::tanh(v);
  return push(std::move(y), [x](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    const Tensor& yv = g.value(id);
    Tensor& dx = g.grad_mut(x);
    for (std::size_t i = 0; i < dy.numel(); ++i)
      dx.data[i] += dy.data[i] * (1.0 - yv.data[i] * yv.data[i]);
  });
}

Graph::NodeId Graph::gap(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4)
    throw std::invalid_argument("gap: expected [N,C,H,W], got " +
                                xv.shape_str());
  const int n = xv.dim(0), c = xv.dim(1);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor y({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const double* plane = xv.ptr() + (static_cast<std::size_t>(i) * c + j) * hw;
      double acc = 0.0;
      for (std::size_t k = 0; k < hw; ++k) acc += plane[k];
      y.data[static_cast<std::size_t>(i) * c + j] = acc / static_cast<double>(hw);
    }
  return push(std::move(y), [x, n, c, hw](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    Tensor& dx = g.grad_mut(x);
    const double inv = 1.0 / static_cast<double>(hw);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const double v = dy.data[static_cast<std::size_t>(i) * c + j] * inv;
        double* plane =
            dx.ptr() + (static_cast<std::size_t>(i) * c + j) * hw;
        for (std::size_t k = 0; k < hw; ++k) plane[k] += v;
      }
  });
}

Graph::NodeId Graph::flatten2(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.rank() < 1) throw std::invalid_argument("flatten2: scalar input");
  const int n = xv.dim(0);
  const int rest = static_cast<int>(xv.numel()) / n;
  Tensor y({n, rest}, xv.data);
  return push(std::move(y), [x](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    Tensor& dx = g.grad_mut(x);
    for (std::size_t i = 0; i < dy.numel(); ++i) dx.data[i] += dy.data[i];
  });
}

Graph::NodeId Graph::concat1(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rank() != bv.rank() || av.rank() < 2 || av.dim(0) != bv.dim(0))
    throw std::invalid_argument("concat1: rank/batch mismatch " +
                                av.shape_str() + " vs " + bv.shape_str());
  for (int i = 2; i < av.rank(); ++i)
    if (av.dim(i) != bv.dim(i))
      throw std::invalid_argument("concat1: trailing dim mismatch " +
                                  av.shape_str() + " vs " + bv.shape_str());

  std::vector<int> shape = av.shape;
  shape[1] += bv.dim(1);
  std::size_t inner = 1;
  for (int i = 2; i < av.rank(); ++i) inner *= static_cast<std::size_t>(av.dim(i));
  const std::size_t a_blk = static_cast<std::size_t>(av.dim(1)) * inner;
  const std::size_t b_blk = static_cast<std::size_t>(bv.dim(1)) * inner;
  const int n = av.dim(0);

  Tensor y(shape);
  for (int i = 0; i < n; ++i) {
    std::copy_n(av.ptr() + i * a_blk, a_blk, y.ptr() + i * (a_blk + b_blk));
    std::copy_n(bv.ptr() + i * b_blk, b_blk,
                y.ptr() + i * (a_blk + b_blk) + a_blk);
  }
  return push(std::move(y), [a, b, n, a_blk, b_blk](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    Tensor& da = g.grad_mut(a);
    Tensor& db = g.grad_mut(b);
    for (int i = 0; i < n; ++i) {
      const double* src = dy.ptr() + i * (a_blk + b_blk);
      for (std::size_t k = 0; k < a_blk; ++k) da.data[i * a_blk + k] += src[k];
      for (std::size_t k = 0; k < b_blk; ++k)
        db.data[i * b_blk + k] += src[a_blk + k];
    }
  });
}

Graph::NodeId Graph::slice1(NodeId x, int from, int to) {
  const Tensor& xv = value(x);
  if (xv.rank() < 2 || from < 0 || to <= from || to > xv.dim(1))
    throw std::invalid_argument("slice1: bad range on " + xv.shape_str());
  const int n = xv.dim(0), width = xv.dim(1), m = to - from;
  std::size_t inner = 1;
  for (int i = 2; i < xv.rank(); ++i)
    inner *= static_cast<std::size_t>(xv.dim(i));
  std::vector<int> shape = xv.shape;
  shape[1] = m;
  Tensor y(shape);
  for (int i = 0; i < n; ++i)
    std::copy_n(
        xv.ptr() + (static_cast<std::size_t>(i) * width + from) * inner,
        static_cast<std::size_t>(m) * inner,
        y.ptr() + static_cast<std::size_t>(i) * m * inner);
  return push(std::move(y), [x, from, n, width, m, inner](Graph& g,
                                                          NodeId id) {
    const Tensor& dy = g.grad(id);
    Tensor& dx = g.grad_mut(x);
    for (int i = 0; i < n; ++i) {
      const double* src = dy.ptr() + static_cast<std::size_t>(i) * m * inner;
      double* dst =
          dx.ptr() + (static_cast<std::size_t>(i) * width + from) * inner;
      for (std::size_t k = 0; k < static_cast<std::size_t>(m) * inner; ++k)
        dst[k] += src[k];
    }
  });
}

Graph::NodeId Graph::corr_channels(NodeId x, NodeId d) {
  const Tensor& xv = value(x);
  const Tensor& dv = value(d);
  if (xv.rank() != 4 || dv.rank() != 2 || xv.dim(0) != dv.dim(0) ||
      xv.dim(1) != dv.dim(1))
    throw std::invalid_argument("corr_channels: shape mismatch " +
                                xv.shape_str() + " vs " + dv.shape_str());
  const int n = xv.dim(0), c = xv.dim(1);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(2)) * xv.dim(3);
  Tensor y({n, 1, xv.dim(2), xv.dim(3)});
  for (int i = 0; i < n; ++i) {
    double* out = y.ptr() + i * hw;
    for (int ch = 0; ch < c; ++ch) {
      const double w = dv.data[static_cast<std::size_t>(i) * c + ch];
      const double* plane =
          xv.ptr() + (static_cast<std::size_t>(i) * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) out[k] += w * plane[k];
    }
  }
  return push(std::move(y), [x, d, n, c, hw](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    const Tensor& xv = g.value(x);
    const Tensor& dv = g.value(d);
    Tensor& dx = g.grad_mut(x);
    Tensor& dd = g.grad_mut(d);
    for (int i = 0; i < n; ++i) {
      const double* dout = dy.ptr() + i * hw;
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t at = (static_cast<std::size_t>(i) * c + ch) * hw;
        const double w = dv.data[static_cast<std::size_t>(i) * c + ch];
        double acc = 0.0;
        for (std::size_t k = 0; k < hw; ++k) {
          dx.data[at + k] += w * dout[k];
          acc += xv.data[at + k] * dout[k];
        }
        dd.data[static_cast<std::size_t>(i) * c + ch] += acc;
      }
    }
  });
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv))
    throw std::invalid_argument("add: shape mismatch " + av.shape_str() +
                                " vs " + bv.shape_str());
  Tensor y = av;
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += bv.data[i];
  return push(std::move(y), [a, b](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    Tensor& da = g.grad_mut(a);
    Tensor& db = g.grad_mut(b);
    for (std::size_t i = 0; i < dy.numel(); ++i) {
      da.data[i] += dy.data[i];
      db.data[i] += dy.data[i];
    }
  });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv))
    throw std::invalid_argument("mul: shape mismatch " + av.shape_str() +
                                " vs " + bv.shape_str());
  Tensor y = av;
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] *= bv.data[i];
  return push(std::move(y), [a, b](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    Tensor& da = g.grad_mut(a);
    Tensor& db = g.grad_mut(b);
    for (std::size_t i = 0; i < dy.numel(); ++i) {
      da.data[i] += dy.data[i] * bv.data[i];
      db.data[i] += dy.data[i] * av.data[i];
    }
  });
}

Graph::NodeId Graph::scale(NodeId x, double factor) {
  Tensor y = value(x);
  for (double& v : y.data) v *= factor;
  return push(std::move(y), [x, factor](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    Tensor& dx = g.grad_mut(x);
    for (std::size_t i = 0; i < dy.numel(); ++i)
      dx.data[i] += factor * dy.data[i];
  });
}

Graph::NodeId Graph::softmax1(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2)
    throw std::invalid_argument("softmax1: expected rank-2, got " +
                                xv.shape_str());
  const int n = xv.dim(0), k = xv.dim(1);
  return push(softmax_rows(xv), [x, n, k](Graph& g, NodeId id) {
    const Tensor& dy = g.grad(id);
    const Tensor& yv = g.value(id);
    Tensor& dx = g.grad_mut(x);
    for (int i = 0; i < n; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * k;
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += dy.data[base + j] * yv.data[base + j];
      for (int j = 0; j < k; ++j)
        dx.data[base + j] += yv.data[base + j] * (dy.data[base + j] - dot);
    }
  });
}

Graph::NodeId Graph::mse_loss(NodeId pred, const Tensor& target) {
  const Tensor& pv = value(pred);
  if (!pv.same_shape(target))
    throw std::invalid_argument("mse_loss: target shape mismatch");
  const double inv = 1.0 / static_cast<double>(pv.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.numel(); ++i) {
    const double d = pv.data[i] - target.data[i];
    acc += d * d;
  }
  auto tgt = std::make_shared<Tensor>(target);
  return push(Tensor({1}, {acc * inv}), [pred, tgt, inv](Graph& g, NodeId id) {
    const double seed = g.grad(id).data[0];
    const Tensor& pv = g.value(pred);
    Tensor& dp = g.grad_mut(pred);
    for (std::size_t i = 0; i < pv.numel(); ++i)
      dp.data[i] += seed * 2.0 * (pv.data[i] - tgt->data[i]) * inv;
  });
}

Graph::NodeId Graph::mae_loss(NodeId pred, const Tensor& target) {
  const Tensor& pv = value(pred);
  if (!pv.same_shape(target))
    throw std::invalid_argument("mae_loss: target shape mismatch");
  const double inv = 1.0 / static_cast<double>(pv.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.numel(); ++i)
    acc += std::abs(pv.data[i] - target.data[i]);
  auto tgt = std::make_shared<Tensor>(target);
  return push(Tensor({1}, {acc * inv}), [pred, tgt, inv](Graph& g, NodeId id) {
    const double seed = g.grad(id).data[0];
    const Tensor& pv = g.value(pred);
    Tensor& dp = g.grad_mut(pred);
    for (std::size_t i = 0; i < pv.numel(); ++i) {
      const double d = pv.data[i] - tgt->data[i];
      const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      dp.data[i] += seed * s * inv;
    }
  });
}

Graph::NodeId Graph::softmax_ce_loss(NodeId logits,
                                     const std::vector<int>& labels) {
  const Tensor& lv = value(logits);
  if (lv.rank() != 2 || static_cast<std::size_t>(lv.dim(0)) != labels.size())
    throw std::invalid_argument("softmax_ce_loss: logits " + lv.shape_str() +
                                " vs " + std::to_string(labels.size()) +
                                " labels");
  const int n = lv.dim(0), k = lv.dim(1);
  auto probs = std::make_shared<Tensor>(softmax_rows(lv));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= k)
      throw std::invalid_argument("softmax_ce_loss: label out of range");
    acc -= std::log(std::max(probs->data[static_cast<std::size_t>(i) * k + y],
                             1e-300));
  }
  auto lab = std::make_shared<std::vector<int>>(labels);
  const double inv = 1.0 / n;
  return push(Tensor({1}, {acc * inv}),
              [logits, probs, lab, n, k, inv](Graph& g, NodeId id) {
                const double seed = g.grad(id).data[0];
                Tensor& dl = g.grad_mut(logits);
                for (int i = 0; i < n; ++i)
                  for (int j = 0; j < k; ++j) {
                    const std::size_t at = static_cast<std::size_t>(i) * k + j;
                    const double onehot = (*lab)[i] == j ? 1.0 : 0.0;
                    dl.data[at] += seed * (probs->data[at] - onehot) * inv;
                  }
              });
}

std::pair<Graph::NodeId, Graph::NodeId> Graph::lstm_cell(NodeId x, NodeId h,
                                                         NodeId c, NodeId w,
                                                         NodeId b, int hidden) {
  const NodeId xh = concat1(x, h);
  const NodeId gates = affine(xh, w, b);  // [N, 4H]
  const NodeId i_g = sigmoid(slice1(gates, 0, hidden));
  const NodeId f_g = sigmoid(slice1(gates, hidden, 2 * hidden));
  const NodeId g_g = tanh_op(slice1(gates, 2 * hidden, 3 * hidden));
  const NodeId o_g = sigmoid(slice1(gates, 3 * hidden, 4 * hidden));
  const NodeId c_next = add(mul(f_g, c), mul(i_g, g_g));
  const NodeId h_next = mul(o_g, tanh_op(c_next));
  return {h_next, c_next};
}

void Graph::backward(NodeId loss) {
  if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size()))
    throw std::invalid_argument("backward: bad node id");
  if (nodes_[loss].value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  for (Node& n : nodes_) n.grad.fill(0.0);
  nodes_[loss].grad.data[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id)
    if (nodes_[id].backprop) nodes_[id].backprop(*this, id);
}

double Graph::scalar(NodeId id) const {
  const Tensor& v = value(id);
  if (v.numel() != 1) throw std::invalid_argument("scalar: not a scalar node");
  return v.data[0];
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2)
    throw std::invalid_argument("softmax_rows: expected rank-2 tensor");
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape);
  for (int i = 0; i < n; ++i) {
    const double* row = logits.ptr() + static_cast<std::size_t>(i) * k;
    double* orow = out.ptr() + static_cast<std::size_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < k; ++j) orow[j] /= sum;
  }
  return out;
}

}  // namespace ptznav::diffnum
