#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "moto/chargrains.hpp"
#include "moto/tensor.hpp"

namespace moto {

using Rng = std::mt19937_64;

namespace init {

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Embedding rows drawn from U(-a, a) with a = sqrt(3 / D), so each row has
/// unit expected squared norm.
Tensor embedding_uniform(std::size_t rows, std::size_t dim, Rng& rng);

}  // namespace init

/// Gate weights of one LSTM direction. `weight` is [(input + hidden) x 4*hidden]
/// with column blocks ordered input, forget, output, candidate; `bias` is
/// [4*hidden] in the same order.
struct LstmParams {
  Tensor weight;
  Tensor bias;

  std::size_t hidden() const { return bias.size() / 4; }
  std::size_t input() const { return weight.rows() - hidden(); }

  static LstmParams xavier(std::size_t input, std::size_t hidden, Rng& rng);
};

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;

  std::size_t hidden() const { return forward.hidden(); }
  std::size_t output() const { return 2 * hidden(); }

  static BiLstmParams xavier(std::size_t input, std::size_t hidden, Rng& rng);
};

/// Non-overlapping 1-D convolution over the token axis: kernel `width`
/// equals the stride. `weight` is [width x D x D], `bias` is [D].
struct Conv1dParams {
  Tensor weight;
  Tensor bias;

  std::size_t width() const { return weight.shape()[0]; }
  std::size_t channels() const { return bias.size(); }

  static Conv1dParams xavier(std::size_t width, std::size_t channels, Rng& rng);
};

/// Kernel width that maps `length` tokens onto `target` windows.
std::size_t downsample_width(std::size_t length, std::size_t target);

/// Parameters placed on a tape. Binding the same parameter set once and
/// reusing the handles makes every use accumulate into one gradient.
struct LstmVars {
  Var weight;
  Var bias;
  std::size_t hidden() const { return bias.value().size() / 4; }
};

struct BiLstmVars {
  LstmVars forward;
  LstmVars backward;
};

struct Conv1dVars {
  Var weight;
  Var bias;
};

LstmVars bind(Tape& tape, const LstmParams& p);
BiLstmVars bind(Tape& tape, const BiLstmParams& p);
Conv1dVars bind(Tape& tape, const Conv1dParams& p);

/// Row gather from an embedding table [|V| x D].
Var embed(Var table, std::span<const std::size_t> ids);

struct LstmState {
  Var h;
  Var c;
};

/// One LSTM step:
///   [i f o] = sigmoid(z), g = tanh(z) on the four blocks of z = [e; h_prev] W + b
///   c = f * c_prev + i * g,  h = o * tanh(c)
LstmState lstm_step(Var input, Var h_prev, Var c_prev, const LstmVars& p);

/// Forward direction left to right, backward direction right to left, both
/// from zero state; row t of the result is [h_fwd_t ; h_bwd_t].
Var bilstm(Var inputs, const BiLstmVars& p);

/// Inverted dropout. Identity when not training or when `rate` is zero.
Var dropout(Var x, double rate, bool training, Rng& rng);

/// Downsamples [L x D] to exactly [target x D]: the sequence is right-padded
/// with `pad_row` to width * target rows and each non-overlapping window of
/// `width` rows is convolved into one output row.
Var conv1d_downsample(Var inputs, const Conv1dVars& p, std::size_t target, Var pad_row);

/// x W (+ b) for a rank-1 input.
Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt);

/// Counts from importing pretrained vectors.
struct EmbeddingImport {
  Tensor table;
  std::size_t hits = 0;
  std::size_t misses = 0;
};

/// Reads `|V| D` followed by `token v1 ... vD` lines and overwrites the rows
/// of `table` whose token is in `vocab`. Rows for absent tokens keep their
/// initial values.
EmbeddingImport import_embeddings(std::istream& in, const std::string& source, const Vocab& vocab,
                                  const Tensor& table);

}  // namespace moto
