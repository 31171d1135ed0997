#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "moto/tensor.hpp"

/// Differentiable operations recorded on a Tape. There is no broadcasting:
/// every shape alignment is spelled out by the caller.
namespace moto::ops {

/// [m x k] . [k x n] -> [m x n]. A rank-1 left operand [k] is a row vector
/// and yields a rank-1 result [n].
Var matmul(Var a, Var b);

Var transpose(Var x);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);

Var sigmoid(Var x);
Var tanh(Var x);

/// Numerically stable logistic function on a plain value.
double sigmoid(double x);

/// Adds `bias` [n] to every row of `x` [m x n].
Var add_rowwise(Var x, Var bias);

/// Concatenation of rank-1 tensors (axis 0) or rank-2 tensors along `axis`.
Var concat(std::span<const Var> parts, std::size_t axis = 0);
Var concat(std::initializer_list<Var> parts, std::size_t axis = 0);

/// Contiguous range [offset, offset + length) of a rank-1 tensor.
Var slice(Var x, std::size_t offset, std::size_t length);

/// Row `i` of a rank-2 tensor as a rank-1 tensor.
Var row(Var x, std::size_t i);

/// Stacks equal-length rank-1 tensors into the rows of a matrix.
Var stack_rows(std::span<const Var> rows);

Var reshape(Var x, Shape shape);

/// Rows of `table` selected by `ids`; gradient accumulates into those rows.
Var gather_rows(Var table, std::span<const std::size_t> ids);

/// Softmax over a rank-1 tensor.
Var softmax(Var x);

/// Softmax over each column of a rank-2 tensor, normalizing along the row axis.
Var softmax_columns(Var x);

Var sum(Var x);

/// LSTM cell update from pre-activations `z` [4H] (blocks input, forget,
/// output, candidate) and the previous cell state [H]. Returns [h ; c] of
/// width 2H with c = f * c_prev + i * tanh(z_c) and h = o * tanh(c).
Var lstm_cell(Var z, Var c_prev);

/// -log(max(p[gold], floor)) for a probability vector.
Var neg_log_prob(Var probs, std::size_t gold, double floor = 1e-12);

/// Plain-value softmax used outside the tape.
std::vector<double> softmax_values(std::span<const double> x);

}  // namespace moto::ops
