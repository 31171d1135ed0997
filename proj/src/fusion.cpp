#include "moto/fusion.hpp"

#include "moto/error.hpp"
#include "moto/ops.hpp"

namespace moto::fusion {

FusionParams FusionParams::xavier(std::size_t dim, Rng& rng) {
  return {init::xavier_uniform({2 * dim, dim}, 2 * dim, dim, rng), Tensor::zeros({dim})};
}

FusionVars bind(Tape& tape, const FusionParams& p) {
  return {tape.leaf(p.weight), tape.leaf(p.bias)};
}

Var relevance(Var aux_states, Var char_states) {
  const Tensor& a = aux_states.value();
  const Tensor& c = char_states.value();
  if (a.rank() != 2 || c.rank() != 2 || a.cols() != c.cols()) {
    throw ShapeError("relevance: state widths differ " + shape_str(a.shape()) + " vs " +
                     shape_str(c.shape()));
  }
  return ops::matmul(aux_states, ops::transpose(char_states));
}

Var attn_weights(Var relevance) { return ops::softmax_columns(relevance); }

Var pool(Var alpha, Var aux_states) {
  const Tensor& a = alpha.value();
  const Tensor& y = aux_states.value();
  if (a.rank() != 2 || y.rank() != 2 || a.rows() != y.rows()) {
    throw ShapeError("pool: weights " + shape_str(a.shape()) + " do not match states " +
                     shape_str(y.shape()));
  }
  return ops::matmul(ops::transpose(alpha), aux_states);
}

Var fuse(Var att, Var char_embeddings, const FusionVars& p) {
  const Tensor& a = att.value();
  const Tensor& e = char_embeddings.value();
  if (a.rank() != 2 || e.rank() != 2 || a.rows() != e.rows()) {
    throw ShapeError("fuse: attention " + shape_str(a.shape()) + " vs embeddings " +
                     shape_str(e.shape()));
  }
  Var joined = ops::concat({att, char_embeddings}, 1);
  return ops::add_rowwise(ops::matmul(joined, p.weight), p.bias);
}

StreamTrace attention_stream(Var char_embeddings, Var char_states, Var aux_embeddings,
                             const BiLstmVars& shared, const FusionVars& p,
                             const std::function<Var(Var)>& on_aux_states) {
  Var aux_states = bilstm(aux_embeddings, shared);
  if (on_aux_states) aux_states = on_aux_states(aux_states);
  Var alpha = attn_weights(relevance(aux_states, char_states));
  Var fused = fuse(pool(alpha, aux_states), char_embeddings, p);
  return {alpha, fused, bilstm(fused, shared)};
}

StreamTrace attention_stream(Var char_embeddings, Var aux_embeddings, const BiLstmVars& shared,
                             const FusionVars& p) {
  return attention_stream(char_embeddings, bilstm(char_embeddings, shared), aux_embeddings, shared,
                          p);
}

}  // namespace moto::fusion
