#include "emoattr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "emoattr/error.hpp"

namespace emoattr {

namespace {

void check_same_tape(const Tape& tape, const Var& v, const char* op) {
  if (v.tape != &tape) {
    throw ArgumentError(std::string(op) + ": argument lives on a different tape");
  }
}

std::string dim_str(std::size_t d) { return std::to_string(d); }

}  // namespace

// ============================================================================
// conv2d
// ============================================================================

Var conv2d(Tape& tape, const Var& input, const Var& kernels, const Var& bias) {
  check_same_tape(tape, input, "conv2d");
  check_same_tape(tape, kernels, "conv2d");
  check_same_tape(tape, bias, "conv2d");

  if (input.shape().size() == 3) {
    // Single sample: route through the batched path with B = 1.
    std::vector<std::size_t> batched = {1, input.shape()[0], input.shape()[1],
                                        input.shape()[2]};
    Var out = conv2d(tape, reshape(tape, input, batched), kernels, bias);
    return reshape(tape, out,
                   {out.shape()[1], out.shape()[2], out.shape()[3]});
  }
  if (input.shape().size() != 4) {
    throw ShapeError("conv2d: input must have rank 3 or 4, got shape " +
                     shape_str(input.shape()));
  }
  if (kernels.shape().size() != 4) {
    throw ShapeError("conv2d: kernels must have rank 4, got shape " +
                     shape_str(kernels.shape()));
  }
  const std::size_t B = input.shape()[0];
  const std::size_t H = input.shape()[1];
  const std::size_t W = input.shape()[2];
  const std::size_t C = input.shape()[3];
  const std::size_t kh = kernels.shape()[0];
  const std::size_t kw = kernels.shape()[1];
  const std::size_t F = kernels.shape()[3];
  if (kernels.shape()[2] != C) {
    throw ShapeError("conv2d: kernel channels (axis 2) = " +
                     dim_str(kernels.shape()[2]) +
                     " but input channels (axis 3) = " + dim_str(C));
  }
  if (kh > H) {
    throw ShapeError("conv2d: kernel height " + dim_str(kh) +
                     " exceeds input height " + dim_str(H) + " (axis 1)");
  }
  if (kw > W) {
    throw ShapeError("conv2d: kernel width " + dim_str(kw) +
                     " exceeds input width " + dim_str(W) + " (axis 2)");
  }
  if (bias.shape().size() != 1 || bias.shape()[0] != F) {
    throw ShapeError("conv2d: bias must have shape (" + dim_str(F) +
                     "), got " + shape_str(bias.shape()));
  }

  const std::size_t Ho = H - kh + 1;
  const std::size_t Wo = W - kw + 1;
  const Tensor& in = input.value();
  const Tensor& ker = kernels.value();
  const Tensor& bs = bias.value();

  Tensor out({B, Ho, Wo, F});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j) {
        for (std::size_t f = 0; f < F; ++f) {
          double acc = bs[f];
          for (std::size_t u = 0; u < kh; ++u) {
            for (std::size_t v = 0; v < kw; ++v) {
              for (std::size_t c = 0; c < C; ++c) {
                acc += in[((b * H + i + u) * W + j + v) * C + c] *
                       ker[((u * kw + v) * C + c) * F + f];
              }
            }
          }
          out[((b * Ho + i) * Wo + j) * F + f] = acc;
        }
      }
    }
  }
  ensure_finite(out, "conv2d");

  auto backward = [B, H, W, C, kh, kw, F, Ho, Wo](const Tape& t, NodeId id,
                                                  std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    const auto& par = t.parents(id);
    const Tensor& in = t.value(par[0]);
    const Tensor& ker = t.value(par[1]);
    Tensor& gin = grads[static_cast<std::size_t>(par[0])];
    Tensor& gker = grads[static_cast<std::size_t>(par[1])];
    Tensor& gbias = grads[static_cast<std::size_t>(par[2])];
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < Ho; ++i) {
        for (std::size_t j = 0; j < Wo; ++j) {
          for (std::size_t f = 0; f < F; ++f) {
            const double go = g[((b * Ho + i) * Wo + j) * F + f];
            if (go == 0.0) continue;
            gbias[f] += go;
            for (std::size_t u = 0; u < kh; ++u) {
              for (std::size_t v = 0; v < kw; ++v) {
                for (std::size_t c = 0; c < C; ++c) {
                  const std::size_t in_idx =
                      ((b * H + i + u) * W + j + v) * C + c;
                  const std::size_t ker_idx = ((u * kw + v) * C + c) * F + f;
                  gin[in_idx] += go * ker[ker_idx];
                  gker[ker_idx] += go * in[in_idx];
                }
              }
            }
          }
        }
      }
    }
  };
  return tape.node(std::move(out), {input.id, kernels.id, bias.id}, backward);
}

// ============================================================================
// Elementwise activations
// ============================================================================

Var relu(Tape& tape, const Var& x) {
  check_same_tape(tape, x, "relu");
  const Tensor& v = x.value();
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  ensure_finite(out, "relu");
  auto backward = [](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    const NodeId p = t.parents(id)[0];
    const Tensor& in = t.value(p);
    Tensor& gin = grads[static_cast<std::size_t>(p)];
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > 0.0) gin[i] += g[i];
    }
  };
  return tape.node(std::move(out), {x.id}, backward);
}

Var sigmoid(Tape& tape, const Var& x) {
  check_same_tape(tape, x, "sigmoid");
  const Tensor& v = x.value();
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v[i]));
  ensure_finite(out, "sigmoid");
  auto backward = [](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    const Tensor& y = t.value(id);
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t i = 0; i < y.size(); ++i) gin[i] += g[i] * y[i] * (1.0 - y[i]);
  };
  return tape.node(std::move(out), {x.id}, backward);
}

Var tanh_op(Tape& tape, const Var& x) {
  check_same_tape(tape, x, "tanh");
  const Tensor& v = x.value();
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
  ensure_finite(out, "tanh");
  auto backward = [](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    const Tensor& y = t.value(id);
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t i = 0; i < y.size(); ++i) gin[i] += g[i] * (1.0 - y[i] * y[i]);
  };
  return tape.node(std::move(out), {x.id}, backward);
}

// ============================================================================
// Arithmetic
// ============================================================================

Var add(Tape& tape, const Var& a, const Var& b) {
  check_same_tape(tape, a, "add");
  check_same_tape(tape, b, "add");
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  Tensor out(va.shape());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i];
  ensure_finite(out, "add");
  auto backward = [](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    for (NodeId p : t.parents(id)) {
      Tensor& gp = grads[static_cast<std::size_t>(p)];
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  };
  return tape.node(std::move(out), {a.id, b.id}, backward);
}

Var mul(Tape& tape, const Var& a, const Var& b) {
  check_same_tape(tape, a, "mul");
  check_same_tape(tape, b, "mul");
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  Tensor out(va.shape());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i];
  ensure_finite(out, "mul");
  auto backward = [](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    const auto& par = t.parents(id);
    const Tensor& va = t.value(par[0]);
    const Tensor& vb = t.value(par[1]);
    Tensor& ga = grads[static_cast<std::size_t>(par[0])];
    Tensor& gb = grads[static_cast<std::size_t>(par[1])];
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  };
  return tape.node(std::move(out), {a.id, b.id}, backward);
}

Var add_rowwise(Tape& tape, const Var& m, const Var& row) {
  check_same_tape(tape, m, "add_rowwise");
  check_same_tape(tape, row, "add_rowwise");
  if (m.shape().size() != 2) {
    throw ShapeError("add_rowwise: matrix must have rank 2, got shape " +
                     shape_str(m.shape()));
  }
  const std::size_t N = m.shape()[0];
  const std::size_t D = m.shape()[1];
  if (row.shape().size() != 1 || row.shape()[0] != D) {
    throw ShapeError("add_rowwise: row must have shape (" + dim_str(D) +
                     "), got " + shape_str(row.shape()));
  }
  const Tensor& vm = m.value();
  const Tensor& vr = row.value();
  Tensor out({N, D});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t d = 0; d < D; ++d) out[n * D + d] = vm[n * D + d] + vr[d];
  }
  ensure_finite(out, "add_rowwise");
  auto backward = [N, D](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    const auto& par = t.parents(id);
    Tensor& gm = grads[static_cast<std::size_t>(par[0])];
    Tensor& gr = grads[static_cast<std::size_t>(par[1])];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t d = 0; d < D; ++d) {
        gm[n * D + d] += g[n * D + d];
        gr[d] += g[n * D + d];
      }
    }
  };
  return tape.node(std::move(out), {m.id, row.id}, backward);
}

Var scale(Tape& tape, const Var& x, double c) {
  check_same_tape(tape, x, "scale");
  const Tensor& v = x.value();
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = c * v[i];
  ensure_finite(out, "scale");
  auto backward = [c](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t i = 0; i < g.size(); ++i) gin[i] += c * g[i];
  };
  return tape.node(std::move(out), {x.id}, backward);
}

Var sum(Tape& tape, const Var& x) {
  check_same_tape(tape, x, "sum");
  const Tensor& v = x.value();
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) total += v[i];
  Tensor out = Tensor::scalar(total);
  ensure_finite(out, "sum");
  auto backward = [](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const double g = grads[static_cast<std::size_t>(id)][0];
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += g;
  };
  return tape.node(std::move(out), {x.id}, backward);
}

Var matmul(Tape& tape, const Var& a, const Var& b) {
  check_same_tape(tape, a, "matmul");
  check_same_tape(tape, b, "matmul");
  if (a.shape().size() != 2 || b.shape().size() != 2) {
    throw ShapeError("matmul: both operands must have rank 2, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t N = a.shape()[0];
  const std::size_t K = a.shape()[1];
  const std::size_t M = b.shape()[1];
  if (b.shape()[0] != K) {
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  Tensor out({N, M});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      const double av = va[n * K + k];
      if (av == 0.0) continue;
      for (std::size_t m = 0; m < M; ++m) out[n * M + m] += av * vb[k * M + m];
    }
  }
  ensure_finite(out, "matmul");
  auto backward = [N, K, M](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    const auto& par = t.parents(id);
    const Tensor& va = t.value(par[0]);
    const Tensor& vb = t.value(par[1]);
    Tensor& ga = grads[static_cast<std::size_t>(par[0])];
    Tensor& gb = grads[static_cast<std::size_t>(par[1])];
    // ga = g . b^T ; gb = a^T . g
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < M; ++m) {
        const double gv = g[n * M + m];
        if (gv == 0.0) continue;
        for (std::size_t k = 0; k < K; ++k) {
          ga[n * K + k] += gv * vb[k * M + m];
          gb[k * M + m] += va[n * K + k] * gv;
        }
      }
    }
  };
  return tape.node(std::move(out), {a.id, b.id}, backward);
}

// ============================================================================
// Indexing and reshaping
// ============================================================================

Var slice_cols(Tape& tape, const Var& m, std::size_t c0, std::size_t c1) {
  check_same_tape(tape, m, "slice_cols");
  if (m.shape().size() != 2) {
    throw ShapeError("slice_cols: matrix must have rank 2, got shape " +
                     shape_str(m.shape()));
  }
  const std::size_t N = m.shape()[0];
  const std::size_t D = m.shape()[1];
  if (c0 >= c1 || c1 > D) {
    throw ShapeError("slice_cols: range [" + dim_str(c0) + ", " + dim_str(c1) +
                     ") invalid for " + dim_str(D) + " columns");
  }
  const std::size_t W = c1 - c0;
  const Tensor& v = m.value();
  Tensor out({N, W});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < W; ++j) out[n * W + j] = v[n * D + c0 + j];
  }
  auto backward = [N, D, c0, W](const Tape& t, NodeId id,
                                std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t j = 0; j < W; ++j) gin[n * D + c0 + j] += g[n * W + j];
    }
  };
  return tape.node(std::move(out), {m.id}, backward);
}

Var select_col(Tape& tape, const Var& m, std::size_t c) {
  check_same_tape(tape, m, "select_col");
  if (m.shape().size() != 2) {
    throw ShapeError("select_col: matrix must have rank 2, got shape " +
                     shape_str(m.shape()));
  }
  const std::size_t N = m.shape()[0];
  const std::size_t M = m.shape()[1];
  if (c >= M) {
    throw ShapeError("select_col: column " + dim_str(c) + " out of range for " +
                     dim_str(M) + " columns");
  }
  const Tensor& v = m.value();
  Tensor out({N});
  for (std::size_t n = 0; n < N; ++n) out[n] = v[n * M + c];
  auto backward = [N, M, c](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t n = 0; n < N; ++n) gin[n * M + c] += g[n];
  };
  return tape.node(std::move(out), {m.id}, backward);
}

Var select_frame(Tape& tape, const Var& x, std::size_t p) {
  check_same_tape(tape, x, "select_frame");
  if (x.shape().size() != 3) {
    throw ShapeError("select_frame: tensor must have rank 3, got shape " +
                     shape_str(x.shape()));
  }
  const std::size_t B = x.shape()[0];
  const std::size_t P = x.shape()[1];
  const std::size_t D = x.shape()[2];
  if (p >= P) {
    throw ShapeError("select_frame: frame " + dim_str(p) + " out of range for " +
                     dim_str(P) + " frames");
  }
  const Tensor& v = x.value();
  Tensor out({B, D});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t d = 0; d < D; ++d) out[b * D + d] = v[(b * P + p) * D + d];
  }
  auto backward = [B, P, D, p](const Tape& t, NodeId id,
                               std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t d = 0; d < D; ++d) gin[(b * P + p) * D + d] += g[b * D + d];
    }
  };
  return tape.node(std::move(out), {x.id}, backward);
}

Var reshape(Tape& tape, const Var& x, std::vector<std::size_t> new_shape) {
  check_same_tape(tape, x, "reshape");
  Tensor out = x.value().reshaped(std::move(new_shape));
  auto backward = [](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t i = 0; i < g.size(); ++i) gin[i] += g[i];
  };
  return tape.node(std::move(out), {x.id}, backward);
}

// ============================================================================
// Softmax, dropout, batch norm
// ============================================================================

Var softmax_rows(Tape& tape, const Var& m) {
  check_same_tape(tape, m, "softmax_rows");
  if (m.shape().size() != 2) {
    throw ShapeError("softmax_rows: matrix must have rank 2, got shape " +
                     shape_str(m.shape()));
  }
  const std::size_t N = m.shape()[0];
  const std::size_t C = m.shape()[1];
  const Tensor& v = m.value();
  Tensor out({N, C});
  for (std::size_t n = 0; n < N; ++n) {
    double mx = v[n * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, v[n * C + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      out[n * C + c] = std::exp(v[n * C + c] - mx);
      z += out[n * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) out[n * C + c] /= z;
  }
  ensure_finite(out, "softmax_rows");
  auto backward = [N, C](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    const Tensor& y = t.value(id);
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t n = 0; n < N; ++n) {
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += g[n * C + c] * y[n * C + c];
      for (std::size_t c = 0; c < C; ++c) {
        gin[n * C + c] += y[n * C + c] * (g[n * C + c] - dot);
      }
    }
  };
  return tape.node(std::move(out), {m.id}, backward);
}

Var dropout(Tape& tape, const Var& x, double rate, bool training, Rng& rng) {
  check_same_tape(tape, x, "dropout");
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
  const Tensor& v = x.value();
  if (!training || rate == 0.0) {
    Tensor out = v;
    auto backward = [](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
      const Tensor& g = grads[static_cast<std::size_t>(id)];
      Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
      for (std::size_t i = 0; i < g.size(); ++i) gin[i] += g[i];
    };
    return tape.node(std::move(out), {x.id}, backward);
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(v.size());
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double m = rng.uniform() < rate ? 0.0 : keep_scale;
    (*mask)[i] = m;
    out[i] = v[i] * m;
  }
  ensure_finite(out, "dropout");
  auto backward = [mask](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const Tensor& g = grads[static_cast<std::size_t>(id)];
    Tensor& gin = grads[static_cast<std::size_t>(t.parents(id)[0])];
    for (std::size_t i = 0; i < g.size(); ++i) gin[i] += g[i] * (*mask)[i];
  };
  return tape.node(std::move(out), {x.id}, backward);
}

Var batch_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool training, double momentum,
               double eps) {
  check_same_tape(tape, x, "batch_norm");
  check_same_tape(tape, gamma, "batch_norm");
  check_same_tape(tape, beta, "batch_norm");
  if (x.shape().size() != 2) {
    throw ShapeError("batch_norm: input must have rank 2, got shape " +
                     shape_str(x.shape()));
  }
  const std::size_t N = x.shape()[0];
  const std::size_t D = x.shape()[1];
  auto expect_vec = [D](const Var& v, const char* name) {
    if (v.shape().size() != 1 || v.shape()[0] != D) {
      throw ShapeError(std::string("batch_norm: ") + name + " must have shape (" +
                       dim_str(D) + "), got " + shape_str(v.shape()));
    }
  };
  expect_vec(gamma, "gamma");
  expect_vec(beta, "beta");
  if (state.mean.size() != D || state.var.size() != D) {
    throw ShapeError("batch_norm: running stats sized for " +
                     dim_str(state.mean.size()) + " features, input has " +
                     dim_str(D));
  }
  if (training && N < 2) {
    throw DegenerateBatchError(
        "batch_norm: training mode requires a batch of at least 2 rows, got " +
        dim_str(N));
  }

  const Tensor& v = x.value();
  const Tensor& g = gamma.value();
  const Tensor& b = beta.value();
  Tensor out({N, D});

  if (training) {
    // Batch statistics: mean and biased variance per feature.
    auto xhat = std::make_shared<Tensor>(std::vector<std::size_t>{N, D});
    auto inv_std = std::make_shared<std::vector<double>>(D);
    for (std::size_t d = 0; d < D; ++d) {
      double mean = 0.0;
      for (std::size_t n = 0; n < N; ++n) mean += v[n * D + d];
      mean /= static_cast<double>(N);
      double var = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double c = v[n * D + d] - mean;
        var += c * c;
      }
      var /= static_cast<double>(N);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[d] = is;
      for (std::size_t n = 0; n < N; ++n) {
        const double xn = (v[n * D + d] - mean) * is;
        (*xhat)[n * D + d] = xn;
        out[n * D + d] = g[d] * xn + b[d];
      }
      state.mean[d] = momentum * state.mean[d] + (1.0 - momentum) * mean;
      state.var[d] = momentum * state.var[d] + (1.0 - momentum) * var;
    }
    ensure_finite(out, "batch_norm");
    auto backward = [N, D, xhat, inv_std](const Tape& t, NodeId id,
                                          std::vector<Tensor>& grads) {
      const Tensor& go = grads[static_cast<std::size_t>(id)];
      const auto& par = t.parents(id);
      const Tensor& gam = t.value(par[1]);
      Tensor& gx = grads[static_cast<std::size_t>(par[0])];
      Tensor& ggam = grads[static_cast<std::size_t>(par[1])];
      Tensor& gbeta = grads[static_cast<std::size_t>(par[2])];
      const double n_inv = 1.0 / static_cast<double>(N);
      for (std::size_t d = 0; d < D; ++d) {
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const double gh = go[n * D + d];
          sum_g += gh;
          sum_gx += gh * (*xhat)[n * D + d];
        }
        ggam[d] += sum_gx;
        gbeta[d] += sum_g;
        const double scale = gam[d] * (*inv_std)[d] * n_inv;
        for (std::size_t n = 0; n < N; ++n) {
          gx[n * D + d] += scale * (static_cast<double>(N) * go[n * D + d] -
                                    sum_g - (*xhat)[n * D + d] * sum_gx);
        }
      }
    };
    return tape.node(std::move(out), {x.id, gamma.id, beta.id}, backward);
  }

  // Inference: normalize with the stored running statistics.
  auto inv_std = std::make_shared<std::vector<double>>(D);
  auto mean = std::make_shared<std::vector<double>>(D);
  for (std::size_t d = 0; d < D; ++d) {
    (*inv_std)[d] = 1.0 / std::sqrt(state.var[d] + eps);
    (*mean)[d] = state.mean[d];
  }
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t d = 0; d < D; ++d) {
      out[n * D + d] = g[d] * (v[n * D + d] - (*mean)[d]) * (*inv_std)[d] + b[d];
    }
  }
  ensure_finite(out, "batch_norm");
  auto backward = [N, D, mean, inv_std](const Tape& t, NodeId id,
                                        std::vector<Tensor>& grads) {
    const Tensor& go = grads[static_cast<std::size_t>(id)];
    const auto& par = t.parents(id);
    const Tensor& in = t.value(par[0]);
    const Tensor& gam = t.value(par[1]);
    Tensor& gx = grads[static_cast<std::size_t>(par[0])];
    Tensor& ggam = grads[static_cast<std::size_t>(par[1])];
    Tensor& gbeta = grads[static_cast<std::size_t>(par[2])];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t d = 0; d < D; ++d) {
        const double gh = go[n * D + d];
        const double xn = (in[n * D + d] - (*mean)[d]) * (*inv_std)[d];
        gx[n * D + d] += gh * gam[d] * (*inv_std)[d];
        ggam[d] += gh * xn;
        gbeta[d] += gh;
      }
    }
  };
  return tape.node(std::move(out), {x.id, gamma.id, beta.id}, backward);
}

// ============================================================================
// Binary cross-entropy
// ============================================================================

namespace {

constexpr double kBceClamp = 1e-7;

void check_labels(const std::vector<double>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) {
      throw ArgumentError("bce: label at index " + std::to_string(i) +
                          " is " + std::to_string(labels[i]) +
                          ", expected 0 or 1");
    }
  }
}

}  // namespace

double bce_loss(const std::vector<double>& y_hat,
                const std::vector<double>& labels) {
  if (y_hat.empty()) throw ArgumentError("bce: empty batch");
  if (y_hat.size() != labels.size()) {
    throw ArgumentError("bce: " + std::to_string(y_hat.size()) +
                        " predictions vs " + std::to_string(labels.size()) +
                        " labels");
  }
  check_labels(labels);
  double total = 0.0;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    const double p = std::clamp(y_hat[i], kBceClamp, 1.0 - kBceClamp);
    total += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return -total / static_cast<double>(y_hat.size());
}

Var bce(Tape& tape, const Var& y_hat, const std::vector<double>& labels,
        const std::vector<double>& weights) {
  check_same_tape(tape, y_hat, "bce");
  const Tensor& v = y_hat.value();
  if (v.size() == 0) throw ArgumentError("bce: empty batch");
  if (v.size() != labels.size()) {
    throw ArgumentError("bce: " + std::to_string(v.size()) +
                        " predictions vs " + std::to_string(labels.size()) +
                        " labels");
  }
  if (!weights.empty() && weights.size() != labels.size()) {
    throw ArgumentError("bce: " + std::to_string(weights.size()) +
                        " weights vs " + std::to_string(labels.size()) +
                        " labels");
  }
  check_labels(labels);
  const std::size_t S = v.size();
  auto weight_at = [&weights](std::size_t i) {
    return weights.empty() ? 1.0 : weights[i];
  };
  double total = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    const double p = std::clamp(v[i], kBceClamp, 1.0 - kBceClamp);
    total += weight_at(i) *
             (labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
  }
  Tensor out = Tensor::scalar(-total / static_cast<double>(S));
  ensure_finite(out, "bce");
  auto y = std::make_shared<std::vector<double>>(labels);
  auto w = std::make_shared<std::vector<double>>(weights);
  auto backward = [y, w, S](const Tape& t, NodeId id, std::vector<Tensor>& grads) {
    const double g = grads[static_cast<std::size_t>(id)][0];
    const NodeId p = t.parents(id)[0];
    const Tensor& pred = t.value(p);
    Tensor& gin = grads[static_cast<std::size_t>(p)];
    const double s_inv = 1.0 / static_cast<double>(S);
    for (std::size_t i = 0; i < S; ++i) {
      // The clamp is flat outside [eps, 1-eps]; no gradient flows there.
      if (pred[i] < kBceClamp || pred[i] > 1.0 - kBceClamp) continue;
      const double yi = (*y)[i];
      const double wi = w->empty() ? 1.0 : (*w)[i];
      gin[i] += -g * wi * s_inv * (yi / pred[i] - (1.0 - yi) / (1.0 - pred[i]));
    }
  };
  return tape.node(std::move(out), {y_hat.id}, backward);
}

// ============================================================================
// Compositions
// ============================================================================

Var dense(Tape& tape, const Var& x, const Var& w, const Var& b) {
  check_same_tape(tape, x, "dense");
  if (w.shape().size() != 2) {
    throw ShapeError("dense: weight must have rank 2, got shape " +
                     shape_str(w.shape()));
  }
  const std::size_t D = w.shape()[0];
  const std::size_t R = w.shape()[1];
  if (b.shape().size() != 1 || b.shape()[0] != R) {
    throw ShapeError("dense: bias must have shape (" + dim_str(R) + "), got " +
                     shape_str(b.shape()));
  }
  if (x.shape().size() == 1) {
    if (x.shape()[0] != D) {
      throw ShapeError("dense: input length " + dim_str(x.shape()[0]) +
                       " does not match weight rows " + dim_str(D));
    }
    Var row = reshape(tape, x, {1, D});
    Var out = add_rowwise(tape, matmul(tape, row, w), b);
    return reshape(tape, out, {R});
  }
  if (x.shape().size() != 2 || x.shape()[1] != D) {
    throw ShapeError("dense: input shape " + shape_str(x.shape()) +
                     " does not match weight rows " + dim_str(D));
  }
  return add_rowwise(tape, matmul(tape, x, w), b);
}

LstmState lstm_step(Tape& tape, const Var& x, const LstmState& prev,
                    const LstmWeights& w) {
  check_same_tape(tape, x, "lstm_step");
  if (w.wx.shape().size() != 2 || w.wh.shape().size() != 2 ||
      w.b.shape().size() != 1) {
    throw ShapeError("lstm_step: weight ranks must be (2, 2, 1)");
  }
  const std::size_t Q = w.wh.shape()[0];
  const std::size_t D = w.wx.shape()[0];
  if (w.wx.shape()[1] != 4 * Q || w.wh.shape()[1] != 4 * Q ||
      w.b.shape()[0] != 4 * Q) {
    throw ShapeError("lstm_step: gate axis must be 4*Q = " + dim_str(4 * Q) +
                     ", got wx " + shape_str(w.wx.shape()) + ", wh " +
                     shape_str(w.wh.shape()) + ", b " + shape_str(w.b.shape()));
  }

  if (x.shape().size() == 1) {
    if (x.shape()[0] != D) {
      throw ShapeError("lstm_step: input length " + dim_str(x.shape()[0]) +
                       " does not match wx rows " + dim_str(D));
    }
    LstmState batched{reshape(tape, prev.h, {1, Q}), reshape(tape, prev.c, {1, Q})};
    LstmState next = lstm_step(tape, reshape(tape, x, {1, D}), batched, w);
    return {reshape(tape, next.h, {Q}), reshape(tape, next.c, {Q})};
  }
  if (x.shape().size() != 2 || x.shape()[1] != D) {
    throw ShapeError("lstm_step: input shape " + shape_str(x.shape()) +
                     " does not match wx rows " + dim_str(D));
  }
  const std::size_t B = x.shape()[0];
  auto expect_state = [B, Q](const Var& v, const char* name) {
    if (v.shape().size() != 2 || v.shape()[0] != B || v.shape()[1] != Q) {
      throw ShapeError(std::string("lstm_step: ") + name + " must have shape (" +
                       dim_str(B) + ", " + dim_str(Q) + "), got " +
                       shape_str(v.shape()));
    }
  };
  expect_state(prev.h, "h_prev");
  expect_state(prev.c, "c_prev");

  Var z = add_rowwise(
      tape, add(tape, matmul(tape, x, w.wx), matmul(tape, prev.h, w.wh)), w.b);
  Var i_gate = sigmoid(tape, slice_cols(tape, z, 0, Q));
  Var f_gate = sigmoid(tape, slice_cols(tape, z, Q, 2 * Q));
  Var g_cand = tanh_op(tape, slice_cols(tape, z, 2 * Q, 3 * Q));
  Var o_gate = sigmoid(tape, slice_cols(tape, z, 3 * Q, 4 * Q));
  Var c_next = add(tape, mul(tape, f_gate, prev.c), mul(tape, i_gate, g_cand));
  Var h_next = mul(tape, o_gate, tanh_op(tape, c_next));
  return {h_next, c_next};
}

// ============================================================================
// Gradient checking
// ============================================================================

double grad_check(const std::function<Var(Tape&, const Var&)>& fn,
                  const Tensor& point, double eps) {
  Tensor analytic({point.size()});
  {
    Tape tape;
    Var x = tape.leaf(point);
    Var out = fn(tape, x);
    std::vector<Tensor> grads = tape.backward(out);
    const Tensor& gx = grads[static_cast<std::size_t>(x.id)];
    for (std::size_t i = 0; i < point.size(); ++i) analytic[i] = gx[i];
  }

  auto eval = [&fn](const Tensor& p) {
    Tape tape;
    Var x = tape.leaf(p);
    return fn(tape, x).value().item();
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    Tensor plus = point;
    Tensor minus = point;
    plus[i] += eps;
    minus[i] -= eps;
    const double cd = (eval(plus) - eval(minus)) / (2.0 * eps);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(cd), 1e-12});
    worst = std::max(worst, std::abs(analytic[i] - cd) / denom);
  }
  return worst;
}

}  // namespace emoattr
