#pragma once

#include <functional>

#include "moto/neural.hpp"
#include "moto/tensor.hpp"

namespace moto::fusion {

/// Linear map from [att ; e_c] (2D) back to D.
struct FusionParams {
  Tensor weight;  // [2D x D]
  Tensor bias;    // [D]

  static FusionParams xavier(std::size_t dim, Rng& rng);
};

struct FusionVars {
  Var weight;
  Var bias;
};

FusionVars bind(Tape& tape, const FusionParams& p);

/// re[i][j] = <aux_states[i], char_states[j]>, shape [l_aux x lc]. Unscaled.
Var relevance(Var aux_states, Var char_states);

/// Softmax of each column of `relevance` over the auxiliary axis.
Var attn_weights(Var relevance);

/// att[j] = sum_i alpha[i][j] * aux_states[i], shape [lc x D].
Var pool(Var alpha, Var aux_states);

/// Row j of the result is linear([att[j] ; char_embeddings[j]]).
Var fuse(Var att, Var char_embeddings, const FusionVars& p);

/// Intermediate values of one attention stream, kept for inspection.
struct StreamTrace {
  Var alpha;
  Var fused_inputs;
  Var outputs;
};

/// Two-pass fusion of one auxiliary granularity into the character stream.
/// `char_states` are the first-pass states bilstm(char_embeddings); the
/// auxiliary states are computed here with the same shared BiLSTM and the
/// fused inputs are run through it once more. `on_aux_states`, when given,
/// is applied to the auxiliary states before attention (dropout in training).
StreamTrace attention_stream(Var char_embeddings, Var char_states, Var aux_embeddings,
                             const BiLstmVars& shared, const FusionVars& p,
                             const std::function<Var(Var)>& on_aux_states = {});

/// Convenience overload computing the first-pass character states itself.
StreamTrace attention_stream(Var char_embeddings, Var aux_embeddings, const BiLstmVars& shared,
                             const FusionVars& p);

}  // namespace moto::fusion
