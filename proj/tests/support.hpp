#pragma once

// Shared helpers for the unit suites and the acceptance binary: random
// tensors, a central-difference gradient checker, and straight-line scalar
// re-implementations of the model used as oracles. The oracles loop over
// plain nested vectors and never call into moto::ops.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "moto/fusion.hpp"
#include "moto/model.hpp"
#include "moto/neural.hpp"
#include "moto/ops.hpp"
#include "moto/tensor.hpp"

namespace support {

using moto::Rng;
using moto::Shape;
using moto::Tape;
using moto::Tensor;
using moto::Var;

inline std::filesystem::path source_dir() { return MOTO_SOURCE_DIR; }
inline std::filesystem::path data_dir() { return source_dir() / "data"; }

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(moto::shape_size(shape));
  for (double& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline std::vector<std::size_t> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<std::size_t> ids(n);
  for (auto& id : ids) id = random_size(rng, 0, vocab - 1);
  return ids;
}

/// Scalar summary sum(y * w) with fixed weights, so every output element
/// contributes a distinct amount to the checked gradient.
inline Var probe(Var y, const Tensor& w) {
  return moto::ops::sum(moto::ops::mul(y, y.tape().constant(w)));
}

// ---------------------------------------------------------------------------
// Finite differences

struct Graph {
  Var root;
  std::vector<Var> leaves;  // one per input tensor, same order
};

/// Records a scalar function of `inputs` on `tape`.
using Builder = std::function<Graph(Tape&, const std::vector<Tensor>&)>;

inline std::vector<Var> leaves_of(Tape& tape, const std::vector<Tensor>& inputs) {
  std::vector<Var> out;
  for (const auto& t : inputs) out.push_back(tape.leaf(t));
  return out;
}

struct GradCheck {
  double worst = 0.0;  // max |analytic - numeric| / max(1, |analytic|)
  std::size_t entries = 0;
};

inline GradCheck gradcheck(const std::vector<Tensor>& inputs, const Builder& build,
                           double h = 1e-5) {
  Tape tape;
  const Graph g = build(tape, inputs);
  const moto::Gradients grads = tape.backward(g.root);

  const auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t;
    return build(t, xs).root.value()[0];
  };

  GradCheck out;
  std::vector<Tensor> xs = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = grads.of(g.leaves[k]);
    std::vector<double> base(inputs[k].values().begin(), inputs[k].values().end());
    for (std::size_t e = 0; e < base.size(); ++e) {
      std::vector<double> v = base;
      v[e] = base[e] + h;
      xs[k] = Tensor(inputs[k].shape(), v);
      const double up = eval(xs);
      v[e] = base[e] - h;
      xs[k] = Tensor(inputs[k].shape(), v);
      const double down = eval(xs);
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[e];
      out.worst = std::max(out.worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
      ++out.entries;
    }
    xs[k] = inputs[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scalar oracles

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Vec vec(const Tensor& t) { return Vec(t.values().begin(), t.values().end()); }

inline Mat mat(const Tensor& t) {
  Mat m(t.rows(), Vec(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  }
  return m;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Lstm {
  Mat w;  // [(D + H) x 4H]
  Vec b;  // [4H]
  std::size_t hidden;
};

inline Lstm lstm(const moto::LstmParams& p) { return {mat(p.weight), vec(p.bias), p.hidden()}; }

/// One step with gate blocks input, forget, output, candidate.
inline void lstm_step(const Lstm& p, const Vec& e, Vec& h, Vec& c) {
  const std::size_t H = p.hidden;
  Vec x = e;
  x.insert(x.end(), h.begin(), h.end());
  Vec hn(H), cn(H);
  for (std::size_t u = 0; u < H; ++u) {
    double zi = p.b[u], zf = p.b[H + u], zo = p.b[2 * H + u], zg = p.b[3 * H + u];
    for (std::size_t k = 0; k < x.size(); ++k) {
      zi += x[k] * p.w[k][u];
      zf += x[k] * p.w[k][H + u];
      zo += x[k] * p.w[k][2 * H + u];
      zg += x[k] * p.w[k][3 * H + u];
    }
    const double i = sigmoid(zi), f = sigmoid(zf), o = sigmoid(zo), g = std::tanh(zg);
    cn[u] = f * c[u] + i * g;
    hn[u] = o * std::tanh(cn[u]);
  }
  h = hn;
  c = cn;
}

inline Mat bilstm(const Lstm& fwd, const Lstm& bwd, const Mat& x) {
  const std::size_t L = x.size(), H = fwd.hidden;
  Mat y(L, Vec(2 * H));
  Vec h(H, 0.0), c(H, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    lstm_step(fwd, x[t], h, c);
    for (std::size_t u = 0; u < H; ++u) y[t][u] = h[u];
  }
  h.assign(H, 0.0);
  c.assign(H, 0.0);
  for (std::size_t t = L; t-- > 0;) {
    lstm_step(bwd, x[t], h, c);
    for (std::size_t u = 0; u < H; ++u) y[t][H + u] = h[u];
  }
  return y;
}

struct Stream {
  Mat alpha;  // [l_aux x lc]
  Mat fused;
  Mat outputs;
};

inline Stream attention_stream(const Mat& ec, const Mat& yc, const Mat& eaux, const Lstm& fwd,
                               const Lstm& bwd, const Mat& wf, const Vec& bf) {
  const Mat yaux = bilstm(fwd, bwd, eaux);
  const std::size_t la = yaux.size(), lc = yc.size(), D = ec[0].size();
  Stream s;
  s.alpha.assign(la, Vec(lc));
  for (std::size_t j = 0; j < lc; ++j) {
    Vec re(la);
    for (std::size_t i = 0; i < la; ++i) {
      re[i] = 0.0;
      for (std::size_t k = 0; k < yc[j].size(); ++k) re[i] += yaux[i][k] * yc[j][k];
    }
    double total = 0.0;
    for (std::size_t i = 0; i < la; ++i) total += std::exp(re[i]);
    for (std::size_t i = 0; i < la; ++i) s.alpha[i][j] = std::exp(re[i]) / total;
  }
  s.fused.assign(lc, Vec(D));
  for (std::size_t j = 0; j < lc; ++j) {
    Vec att(yaux[0].size(), 0.0);
    for (std::size_t i = 0; i < la; ++i) {
      for (std::size_t k = 0; k < att.size(); ++k) att[k] += s.alpha[i][j] * yaux[i][k];
    }
    for (std::size_t m = 0; m < D; ++m) {
      double v = bf[m];
      for (std::size_t k = 0; k < att.size(); ++k) v += att[k] * wf[k][m];
      for (std::size_t k = 0; k < D; ++k) v += ec[j][k] * wf[att.size() + k][m];
      s.fused[j][m] = v;
    }
  }
  s.outputs = bilstm(fwd, bwd, s.fused);
  return s;
}

struct Forward {
  Vec con;
  Vec logits;
  Vec probabilities;
  std::array<Mat, 3> alpha;
};

/// Eval-mode model without downsampling.
inline Forward model(const moto::ModelParams& p, const moto::EncodedSample& sample) {
  const auto embed = [&](moto::Granularity g) {
    const Mat table = mat(*p.embeddings[static_cast<std::size_t>(g)]);
    Mat rows;
    for (std::size_t id : sample.stream(g)) rows.push_back(table[id]);
    return rows;
  };
  const Lstm fwd = lstm(p.bilstm.forward), bwd = lstm(p.bilstm.backward);
  const Mat ec = embed(moto::Granularity::character);
  const Mat yc = bilstm(fwd, bwd, ec);

  Forward out;
  for (std::size_t s = 0; s < 3; ++s) {
    const moto::Granularity g = moto::kAuxGranularities[s];
    if (!p.spec.streams.enabled(g)) continue;
    const Stream st = attention_stream(ec, yc, embed(g), fwd, bwd, mat(p.fusion[s]->weight),
                                       vec(p.fusion[s]->bias));
    out.alpha[s] = st.alpha;
    out.con.insert(out.con.end(), st.outputs.back().begin(), st.outputs.back().end());
  }
  if (out.con.empty()) out.con = yc.back();

  const Mat w = mat(p.head);
  const std::size_t K = w[0].size();
  out.logits.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t r = 0; r < out.con.size(); ++r) out.logits[k] += out.con[r] * w[r][k];
    if (p.spec.sigmoid_head) out.logits[k] = sigmoid(out.logits[k]);
  }
  double total = 0.0;
  for (double l : out.logits) total += std::exp(l);
  for (double l : out.logits) out.probabilities.push_back(std::exp(l) / total);
  return out;
}

struct Metrics {
  std::vector<double> precision, recall;
  double macro_p = 0.0, macro_r = 0.0;
};

// Recounts TP, FP and FN from the raw pairs for every class.
inline Metrics metrics(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred,
                   std::size_t K) {
  Metrics o;
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (pred[i] == k && gold[i] == k) ++tp;
      if (pred[i] == k && gold[i] != k) ++fp;
      if (pred[i] != k && gold[i] == k) ++fn;
    }
    o.precision.push_back(tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp));
    o.recall.push_back(tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn));
  }
  for (std::size_t k = 0; k < K; ++k) {
    o.macro_p += o.precision[k];
    o.macro_r += o.recall[k];
  }
  o.macro_p /= static_cast<double>(K);
  o.macro_r /= static_cast<double>(K);
  return o;
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Small random models

inline moto::ModelSpec small_spec(std::size_t dim, std::size_t classes, std::size_t length,
                                  std::size_t vocab) {
  moto::ModelSpec s;
  s.dim = dim;
  s.classes = classes;
  s.vocab_sizes = {vocab, vocab, vocab, vocab};
  s.lengths = {length, length, length, length};
  s.pad_ids = {0, 0, 0, 0};
  return s;
}

/// Random ids for every stream of `spec`, honoring its lengths.
inline moto::EncodedSample random_sample(const moto::ModelSpec& spec, Rng& rng) {
  moto::EncodedSample s;
  for (std::size_t g = 0; g < 4; ++g) s.ids[g] = random_ids(spec.lengths[g], spec.vocab_sizes[g], rng);
  s.class_id = random_size(rng, 0, spec.classes - 1);
  return s;
}

/// Replaces every parameter with fresh U(-scale, scale) values, including
/// biases that initialize to zero.
inline void randomize(moto::ModelParams& p, Rng& rng, double scale = 0.5) {
  p.for_each([&](const std::string&, Tensor& t) { t = random_tensor(t.shape(), rng, scale); });
}

// ---------------------------------------------------------------------------
// Gradient-check cases, one random instance per call

struct LayerCase {
  std::string name;
  std::function<GradCheck(Rng&)> run;
};

inline std::vector<LayerCase> layer_cases() {
  namespace ops = moto::ops;
  std::vector<LayerCase> cases;

  cases.push_back({"embedding", [](Rng& rng) {
    const std::size_t V = random_size(rng, 2, 5), D = random_size(rng, 1, 4), n = random_size(rng, 1, 5);
    const auto ids = random_ids(n, V, rng);
    const Tensor w = random_tensor({n, D}, rng);
    return gradcheck({random_tensor({V, D}, rng)}, [&](Tape& t, const std::vector<Tensor>& in) {
      auto l = leaves_of(t, in);
      return Graph{probe(moto::embed(l[0], ids), w), l};
    });
  }});

  cases.push_back({"linear", [](Rng& rng) {
    const std::size_t D = random_size(rng, 1, 5), K = random_size(rng, 1, 5);
    const Tensor w = random_tensor({K}, rng);
    return gradcheck({random_tensor({D}, rng), random_tensor({D, K}, rng), random_tensor({K}, rng)},
                     [&](Tape& t, const std::vector<Tensor>& in) {
                       auto l = leaves_of(t, in);
                       return Graph{probe(moto::linear(l[0], l[1], l[2]), w), l};
                     });
  }});

  cases.push_back({"lstm_step", [](Rng& rng) {
    const std::size_t D = random_size(rng, 1, 4), H = random_size(rng, 1, 3);
    const Tensor w = random_tensor({2 * H}, rng);
    return gradcheck({random_tensor({D}, rng), random_tensor({H}, rng), random_tensor({H}, rng),
                      random_tensor({D + H, 4 * H}, rng), random_tensor({4 * H}, rng)},
                     [&](Tape& t, const std::vector<Tensor>& in) {
                       auto l = leaves_of(t, in);
                       const auto s = moto::lstm_step(l[0], l[1], l[2], {l[3], l[4]});
                       return Graph{probe(ops::concat({s.h, s.c}), w), l};
                     });
  }});

  cases.push_back({"bilstm", [](Rng& rng) {
    const std::size_t L = random_size(rng, 1, 4), D = 2 * random_size(rng, 1, 2), H = D / 2;
    const Tensor w = random_tensor({L, D}, rng);
    return gradcheck({random_tensor({L, D}, rng), random_tensor({D + H, 4 * H}, rng),
                      random_tensor({4 * H}, rng), random_tensor({D + H, 4 * H}, rng),
                      random_tensor({4 * H}, rng)},
                     [&](Tape& t, const std::vector<Tensor>& in) {
                       auto l = leaves_of(t, in);
                       return Graph{probe(moto::bilstm(l[0], {{l[1], l[2]}, {l[3], l[4]}}), w), l};
                     });
  }});

  cases.push_back({"attention.relevance", [](Rng& rng) {
    const std::size_t la = random_size(rng, 1, 4), lc = random_size(rng, 1, 4), D = random_size(rng, 1, 4);
    const Tensor w = random_tensor({la, lc}, rng);
    return gradcheck({random_tensor({la, D}, rng), random_tensor({lc, D}, rng)},
                     [&](Tape& t, const std::vector<Tensor>& in) {
                       auto l = leaves_of(t, in);
                       return Graph{probe(moto::fusion::relevance(l[0], l[1]), w), l};
                     });
  }});

  cases.push_back({"attention.weights", [](Rng& rng) {
    const std::size_t la = random_size(rng, 1, 4), lc = random_size(rng, 1, 4);
    const Tensor w = random_tensor({la, lc}, rng);
    return gradcheck({random_tensor({la, lc}, rng, 2.0)}, [&](Tape& t, const std::vector<Tensor>& in) {
      auto l = leaves_of(t, in);
      return Graph{probe(moto::fusion::attn_weights(l[0]), w), l};
    });
  }});

  cases.push_back({"attention.pool", [](Rng& rng) {
    const std::size_t la = random_size(rng, 1, 4), lc = random_size(rng, 1, 4), D = random_size(rng, 1, 4);
    const Tensor w = random_tensor({lc, D}, rng);
    return gradcheck({random_tensor({la, lc}, rng), random_tensor({la, D}, rng)},
                     [&](Tape& t, const std::vector<Tensor>& in) {
                       auto l = leaves_of(t, in);
                       return Graph{probe(moto::fusion::pool(l[0], l[1]), w), l};
                     });
  }});

  cases.push_back({"attention.fuse", [](Rng& rng) {
    const std::size_t lc = random_size(rng, 1, 4), D = random_size(rng, 1, 4);
    const Tensor w = random_tensor({lc, D}, rng);
    return gradcheck({random_tensor({lc, D}, rng), random_tensor({lc, D}, rng),
                      random_tensor({2 * D, D}, rng), random_tensor({D}, rng)},
                     [&](Tape& t, const std::vector<Tensor>& in) {
                       auto l = leaves_of(t, in);
                       return Graph{probe(moto::fusion::fuse(l[0], l[1], {l[2], l[3]}), w), l};
                     });
  }});

  cases.push_back({"attention.stream", [](Rng& rng) {
    const std::size_t lc = random_size(rng, 1, 3), la = random_size(rng, 1, 3), D = 2 * random_size(rng, 1, 2), H = D / 2;
    const Tensor w = random_tensor({lc, D}, rng);
    return gradcheck({random_tensor({lc, D}, rng), random_tensor({la, D}, rng),
                      random_tensor({D + H, 4 * H}, rng), random_tensor({4 * H}, rng),
                      random_tensor({D + H, 4 * H}, rng), random_tensor({4 * H}, rng),
                      random_tensor({2 * D, D}, rng), random_tensor({D}, rng)},
                     [&](Tape& t, const std::vector<Tensor>& in) {
                       auto l = leaves_of(t, in);
                       const auto s = moto::fusion::attention_stream(l[0], l[1], {{l[2], l[3]}, {l[4], l[5]}},
                                                                     {l[6], l[7]});
                       return Graph{probe(s.outputs, w), l};
                     });
  }});

  cases.push_back({"conv_downsample", [](Rng& rng) {
    const std::size_t L = random_size(rng, 2, 9), T = random_size(rng, 1, 3), D = random_size(rng, 1, 3);
    const std::size_t width = moto::downsample_width(L, T);
    const Tensor w = random_tensor({T, D}, rng);
    return gradcheck({random_tensor({L, D}, rng), random_tensor({width, D, D}, rng),
                      random_tensor({D}, rng), random_tensor({D}, rng)},
                     [&](Tape& t, const std::vector<Tensor>& in) {
                       auto l = leaves_of(t, in);
                       return Graph{probe(moto::conv1d_downsample(l[0], {l[1], l[2]}, T, l[3]), w), l};
                     });
  }});

  cases.push_back({"prediction_head", [](Rng& rng) {
    const std::size_t C = random_size(rng, 1, 6), K = random_size(rng, 2, 4);
    const std::size_t gold = random_size(rng, 0, K - 1);
    const bool squash = random_size(rng, 0, 1) == 1;
    return gradcheck({random_tensor({C}, rng), random_tensor({C, K}, rng)},
                     [&](Tape& t, const std::vector<Tensor>& in) {
                       auto l = leaves_of(t, in);
                       Var scores = ops::matmul(l[0], l[1]);
                       if (squash) scores = ops::sigmoid(scores);
                       return Graph{moto::loss(ops::softmax(scores), gold), l};
                     });
  }});

  cases.push_back({"loss", [](Rng& rng) {
    const std::size_t K = random_size(rng, 2, 6), gold = random_size(rng, 0, K - 1);
    return gradcheck({random_tensor({K}, rng, 3.0)}, [&](Tape& t, const std::vector<Tensor>& in) {
      auto l = leaves_of(t, in);
      return Graph{moto::loss(ops::softmax(l[0]), gold), l};
    });
  }});

  cases.push_back({"model", [](Rng& rng) {
    moto::ModelSpec spec = small_spec(2 * random_size(rng, 1, 2), random_size(rng, 2, 3),
                                      random_size(rng, 1, 3), 4);
    spec.lengths[1] = 5;  // radical stream goes through the downsampler
    spec.downsample_threshold = 4;
    spec.downsample_target = 2;
    spec.dropout = 0.25;
    Rng init(rng());
    moto::ModelParams base = moto::ModelParams::initialize(spec, init);
    randomize(base, rng);
    const moto::EncodedSample sample = random_sample(spec, rng);
    const std::uint64_t mask_seed = rng();
    std::vector<Tensor> inputs;
    base.for_each([&](const std::string&, const Tensor& t) { inputs.push_back(t); });
    return gradcheck(inputs, [&](Tape& t, const std::vector<Tensor>& in) {
      moto::ModelParams p = base;
      std::size_t k = 0;
      p.for_each([&](const std::string&, Tensor& x) { x = in[k++]; });
      const moto::BoundModel m = moto::bind(t, p);
      Rng masks(mask_seed);  // same dropout masks on every evaluation
      const auto f = moto::forward(m, sample, moto::Mode::train, masks);
      return Graph{moto::loss(f.probabilities, sample.class_id), m.leaves};
    });
  }});

  return cases;
}

}  // namespace support
