#include "moto/neural.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "moto/error.hpp"
#include "moto/ops.hpp"

namespace moto {

namespace init {

namespace {
Tensor uniform(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values));
}
}  // namespace

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor embedding_uniform(std::size_t rows, std::size_t dim, Rng& rng) {
  return uniform({rows, dim}, std::sqrt(3.0 / static_cast<double>(dim)), rng);
}

}  // namespace init

LstmParams LstmParams::xavier(std::size_t input, std::size_t hidden, Rng& rng) {
  return {init::xavier_uniform({input + hidden, 4 * hidden}, input + hidden, 4 * hidden, rng),
          Tensor::zeros({4 * hidden})};
}

BiLstmParams BiLstmParams::xavier(std::size_t input, std::size_t hidden, Rng& rng) {
  auto fwd = LstmParams::xavier(input, hidden, rng);
  auto bwd = LstmParams::xavier(input, hidden, rng);
  return {std::move(fwd), std::move(bwd)};
}

Conv1dParams Conv1dParams::xavier(std::size_t width, std::size_t channels, Rng& rng) {
  return {init::xavier_uniform({width, channels, channels}, width * channels, channels, rng),
          Tensor::zeros({channels})};
}

std::size_t downsample_width(std::size_t length, std::size_t target) {
  if (target < 1) throw ShapeError("downsample target must be at least 1");
  if (length < 1) throw ShapeError("cannot downsample an empty sequence");
  return (length + target - 1) / target;
}

LstmVars bind(Tape& tape, const LstmParams& p) {
  return {tape.leaf(p.weight), tape.leaf(p.bias)};
}

BiLstmVars bind(Tape& tape, const BiLstmParams& p) {
  return {bind(tape, p.forward), bind(tape, p.backward)};
}

Conv1dVars bind(Tape& tape, const Conv1dParams& p) {
  return {tape.leaf(p.weight), tape.leaf(p.bias)};
}

Var embed(Var table, std::span<const std::size_t> ids) { return ops::gather_rows(table, ids); }

LstmState lstm_step(Var input, Var h_prev, Var c_prev, const LstmVars& p) {
  const std::size_t h = p.hidden();
  const Shape& ws = p.weight.shape();
  if (ws.size() != 2 || ws[1] != 4 * h || ws[0] != input.value().size() + h ||
      h_prev.value().size() != h || c_prev.value().size() != h) {
    throw ShapeError("lstm_step: input " + shape_str(input.shape()) + ", state " +
                     shape_str(h_prev.shape()) + "/" + shape_str(c_prev.shape()) +
                     " do not fit weight " + shape_str(ws));
  }
  Var z = ops::add(ops::matmul(ops::concat({input, h_prev}), p.weight), p.bias);
  Var state = ops::lstm_cell(z, c_prev);
  return {ops::slice(state, 0, h), ops::slice(state, h, h)};
}

Var bilstm(Var inputs, const BiLstmVars& p) {
  const Tensor& x = inputs.value();
  if (x.rank() != 2) throw ShapeError("bilstm: inputs must be [L x D]");
  const std::size_t len = x.rows();
  if (len == 0) throw ShapeError("bilstm: empty sequence");
  Tape& tape = inputs.tape();

  std::vector<Var> steps(len);
  for (std::size_t t = 0; t < len; ++t) steps[t] = ops::row(inputs, t);

  auto run = [&](const LstmVars& dir, bool reverse) {
    const std::size_t h = dir.hidden();
    Var zero = tape.constant(Tensor::zeros({h}));
    LstmState state{zero, zero};
    std::vector<Var> out(len);
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t t = reverse ? len - 1 - k : k;
      state = lstm_step(steps[t], state.h, state.c, dir);
      out[t] = state.h;
    }
    return out;
  };
  const auto fwd = run(p.forward, false);
  const auto bwd = run(p.backward, true);

  std::vector<Var> rows(len);
  for (std::size_t t = 0; t < len; ++t) rows[t] = ops::concat({fwd[t], bwd[t]});
  return ops::stack_rows(rows);
}

Var dropout(Var x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw InputError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double survivor = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = keep(rng) ? survivor : 0.0;
  Var m = x.tape().constant(Tensor(x.shape(), std::move(mask)));
  return ops::mul(x, m);
}

Var conv1d_downsample(Var inputs, const Conv1dVars& p, std::size_t target, Var pad_row) {
  const Tensor& x = inputs.value();
  if (x.rank() != 2) throw ShapeError("conv1d_downsample: inputs must be [L x D]");
  const std::size_t len = x.rows(), dim = x.cols();
  const std::size_t width = downsample_width(len, target);
  const Shape& ws = p.weight.shape();
  if (ws != Shape{width, dim, dim} || p.bias.value().size() != dim) {
    throw ShapeError("conv1d_downsample: " + std::to_string(len) + " rows onto " +
                     std::to_string(target) + " windows needs weight " +
                     shape_str({width, dim, dim}) + ", got " + shape_str(ws));
  }
  if (pad_row.value().size() != dim) throw ShapeError("conv1d_downsample: pad row width");

  Var padded = inputs;
  if (const std::size_t missing = width * target - len; missing > 0) {
    std::vector<Var> fill(missing, pad_row);
    padded = ops::concat({inputs, ops::stack_rows(fill)}, 0);
  }
  // Row t of the reshaped input is window t flattened; the weight viewed as
  // [(width * D) x D] maps it to one output row.
  Var windows = ops::reshape(padded, {target, width * dim});
  Var kernel = ops::reshape(p.weight, {width * dim, dim});
  return ops::add_rowwise(ops::matmul(windows, kernel), p.bias);
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  if (x.value().rank() != 1) throw ShapeError("linear: input must be rank 1");
  Var y = ops::matmul(x, weight);
  if (bias) y = ops::add(y, *bias);
  return y;
}

EmbeddingImport import_embeddings(std::istream& in, const std::string& source, const Vocab& vocab,
                                  const Tensor& table) {
  if (table.rank() != 2 || table.rows() != vocab.size()) {
    throw ShapeError("embedding table does not match vocabulary of " +
                     std::to_string(vocab.size()) + " tokens");
  }
  const std::size_t dim = table.cols();
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header '|V| D'");
  std::size_t declared = 0, file_dim = 0;
  {
    std::istringstream header(line);
    if (!(header >> declared >> file_dim)) throw ParseError(source, 1, "bad header");
  }
  if (file_dim != dim) {
    throw ParseError(source, 1, "vector dimension " + std::to_string(file_dim) +
                                    " does not match model dimension " + std::to_string(dim));
  }
  std::vector<double> values(table.values().begin(), table.values().end());
  std::vector<bool> seen(vocab.size(), false);
  std::size_t rows_read = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> vec;
    vec.reserve(dim);
    std::string number;
    while (fields >> number) {
      try {
        std::size_t used = 0;
        vec.push_back(std::stod(number, &used));
        if (used != number.size()) throw std::invalid_argument(number);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "bad number '" + number + "'");
      }
    }
    if (vec.size() != dim) {
      throw ParseError(source, lineno, "expected " + std::to_string(dim) + " values, got " +
                                           std::to_string(vec.size()));
    }
    require_finite(vec, "embedding import");
    ++rows_read;
    const auto id = vocab.find(token);
    if (!id || seen[*id]) continue;
    seen[*id] = true;
    std::copy(vec.begin(), vec.end(), values.begin() + static_cast<std::ptrdiff_t>(*id * dim));
  }
  if (rows_read != declared) {
    throw ParseError(source, lineno, "header declares " + std::to_string(declared) +
                                         " vectors, file has " + std::to_string(rows_read));
  }
  EmbeddingImport report{Tensor(table.shape(), std::move(values))};
  // Reserved rows are not expected in a pretrained file and are not counted.
  for (std::size_t id = 2; id < vocab.size(); ++id) (seen[id] ? report.hits : report.misses) += 1;
  return report;
}

}  // namespace moto
