#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "emoattr/rng.hpp"
#include "emoattr/tape.hpp"
#include "emoattr/tensor.hpp"

namespace emoattr {

// ============================================================================
// Differentiable primitives. Every op appends one node to the tape; gradients
// come out of Tape::backward. Inputs are validated up front and outputs are
// checked finite before they land on the tape.
// ============================================================================

// Valid (no-padding) cross-correlation, stride 1. input is (H,W,C) or
// (B,H,W,C); kernels are (kh,kw,C,F); bias is (F).
Var conv2d(Tape& tape, const Var& input, const Var& kernels, const Var& bias);

Var relu(Tape& tape, const Var& x);
Var sigmoid(Tape& tape, const Var& x);
Var tanh_op(Tape& tape, const Var& x);

// Elementwise; shapes must match exactly.
Var add(Tape& tape, const Var& a, const Var& b);
Var mul(Tape& tape, const Var& a, const Var& b);

// (N,D) matrix plus a length-D row vector added to every row.
Var add_rowwise(Tape& tape, const Var& m, const Var& row);

Var scale(Tape& tape, const Var& x, double c);

// Sum of all elements; result has shape (1).
Var sum(Tape& tape, const Var& x);

// (N,K) x (K,M) -> (N,M).
Var matmul(Tape& tape, const Var& a, const Var& b);

// Columns [c0, c1) of an (N,D) matrix.
Var slice_cols(Tape& tape, const Var& m, std::size_t c0, std::size_t c1);

// Column c of an (N,M) matrix as a length-N vector.
Var select_col(Tape& tape, const Var& m, std::size_t c);

// Frame p of a (B,P,D) tensor as a (B,D) matrix.
Var select_frame(Tape& tape, const Var& x, std::size_t p);

Var reshape(Tape& tape, const Var& x, std::vector<std::size_t> new_shape);

// Row-wise softmax of an (N,C) matrix, max-shifted for stability.
Var softmax_rows(Tape& tape, const Var& m);

// Inverted dropout: training mode zeroes entries with probability `rate` and
// scales survivors by 1/(1-rate); inference mode is the identity.
Var dropout(Tape& tape, const Var& x, double rate, bool training, Rng& rng);

// Running statistics for batch normalization, owned by the caller. Updated in
// place by training-mode batch_norm; read-only in inference mode.
struct BatchNormState {
  Tensor mean;
  Tensor var;

  explicit BatchNormState(std::size_t features)
      : mean({features}), var(Tensor::full({features}, 1.0)) {}
};

// Per-feature normalization of an (N,D) matrix. Training mode uses biased
// batch statistics and folds them into the running stats as
// running = momentum * running + (1 - momentum) * batch.
Var batch_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool training, double momentum = 0.99,
               double eps = 1e-3);

// Mean binary cross-entropy of a probability vector against 0/1 labels.
// Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs. Optional
// per-sample weights multiply each term; the divisor stays the batch size.
Var bce(Tape& tape, const Var& y_hat, const std::vector<double>& labels,
        const std::vector<double>& weights = {});
double bce_loss(const std::vector<double>& y_hat, const std::vector<double>& labels);

// x W + b for x of shape (D) or (N,D), W (D,R), b (R).
Var dense(Tape& tape, const Var& x, const Var& w, const Var& b);

// LSTM cell. Gate blocks are packed [input | forget | candidate | output]
// along the 4Q axis of wx (D,4Q), wh (Q,4Q) and b (4Q).
struct LstmWeights {
  Var wx;
  Var wh;
  Var b;
};

struct LstmState {
  Var h;
  Var c;
};

// One step: x is (D) or (B,D), prev.h/prev.c are (Q) or (B,Q) to match.
LstmState lstm_step(Tape& tape, const Var& x, const LstmState& prev,
                    const LstmWeights& w);

// Max relative error between the analytic gradient of a scalar-valued
// function and central finite differences at `point`.
double grad_check(const std::function<Var(Tape&, const Var&)>& fn,
                  const Tensor& point, double eps);

}  // namespace emoattr
