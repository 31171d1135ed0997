#include "moto/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "moto/error.hpp"
#include "moto/ops.hpp"

namespace moto {

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].shape() != grads[k].shape()) {
      throw ShapeError("adam_step: parameter " + std::to_string(k) + " has shape " +
                       shape_str(params[k].shape()) + ", gradient " +
                       shape_str(grads[k].shape()));
    }
  }
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter list changed between steps");
  }

  const AdamConfig& c = state.config;
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != params[k].size()) throw ShapeError("adam_step: moment size changed");
    const auto g = grads[k].values();
    std::vector<double> updated(params[k].values().begin(), params[k].values().end());
    for (std::size_t i = 0; i < updated.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      updated[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    params[k] = Tensor(params[k].shape(), std::move(updated));
  }
}

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom == 0.0 ? 0.0 : 2.0 * precision * recall / denom;
}

Metrics compute_metrics(std::span<const std::size_t> gold, std::span<const std::size_t> predicted,
                        std::size_t classes) {
  if (gold.size() != predicted.size()) throw InputError("gold and predicted lengths differ");
  if (classes == 0) throw InputError("no classes");
  Metrics m;
  m.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= classes || predicted[i] >= classes) throw InputError("class id out of range");
    ++m.confusion[gold[i]][predicted[i]];
  }
  m.total = gold.size();
  std::size_t correct = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    const std::size_t tp = m.confusion[k][k];
    std::size_t predicted_k = 0, gold_k = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      predicted_k += m.confusion[j][k];
      gold_k += m.confusion[k][j];
    }
    correct += tp;
    m.precision.push_back(predicted_k == 0 ? 0.0 : static_cast<double>(tp) / predicted_k);
    m.recall.push_back(gold_k == 0 ? 0.0 : static_cast<double>(tp) / gold_k);
    m.support.push_back(gold_k);
  }
  const double k = static_cast<double>(classes);
  m.macro_precision = std::accumulate(m.precision.begin(), m.precision.end(), 0.0) / k;
  m.macro_recall = std::accumulate(m.recall.begin(), m.recall.end(), 0.0) / k;
  m.f1 = f1_score(m.macro_precision, m.macro_recall);
  m.accuracy = m.total == 0 ? 0.0 : static_cast<double>(correct) / m.total;
  return m;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct SampleGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

SampleGradient sample_gradient(const ModelParams& params, const EncodedSample& sample,
                               std::uint64_t seed) {
  Tape tape;
  const BoundModel model = bind(tape, params);
  Rng rng(seed);
  const ForwardVars f = forward(model, sample, Mode::train, rng);
  const Var l = loss(f.probabilities, sample.class_id);
  const Gradients grads = tape.backward(l);
  SampleGradient out{l.value()[0], {}};
  out.grads.reserve(model.leaves.size());
  for (const Var& leaf : model.leaves) out.grads.push_back(grads.of(leaf));
  return out;
}

}  // namespace

std::uint64_t sample_seed(std::uint64_t seed, std::size_t epoch, std::size_t sample_index) {
  // splitmix64 over the three inputs
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ epoch) ^ sample_index);
}

BatchGradient batch_gradient(const ModelParams& params, std::span<const EncodedSample* const> batch,
                             std::span<const std::uint64_t> sample_seeds, std::size_t threads) {
  if (batch.empty()) throw InputError("empty batch");
  if (sample_seeds.size() != batch.size()) throw InputError("one seed per sample is required");

  std::vector<std::vector<double>> total;
  std::vector<Shape> shapes;
  params.for_each([&](const std::string&, const Tensor& t) {
    total.emplace_back(t.size(), 0.0);
    shapes.push_back(t.shape());
  });
  std::vector<double> losses;
  losses.reserve(batch.size());

  auto accumulate = [&](const SampleGradient& g) {
    if (!std::isfinite(g.loss)) throw NumericError("non-finite loss");
    losses.push_back(g.loss);
    for (std::size_t k = 0; k < total.size(); ++k) {
      const auto v = g.grads[k].values();
      for (std::size_t i = 0; i < v.size(); ++i) total[k][i] += v[i];
    }
  };

  // Groups of `threads` samples are computed concurrently and folded in
  // sample order.
  const std::size_t group = std::max<std::size_t>(1, threads);
  for (std::size_t start = 0; start < batch.size(); start += group) {
    const std::size_t n = std::min(group, batch.size() - start);
    std::vector<SampleGradient> results(n);
    parallel_for(n, threads, [&](std::size_t i) {
      results[i] = sample_gradient(params, *batch[start + i], sample_seeds[start + i]);
    });
    for (const auto& r : results) accumulate(r);
  }

  BatchGradient out;
  out.loss = batch_loss(losses);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t k = 0; k < total.size(); ++k) {
    for (double& v : total[k]) v *= scale;
    out.grads.emplace_back(shapes[k], std::move(total[k]));
  }
  return out;
}

EvalResult evaluate(const ModelParams& params, std::span<const EncodedSample> samples,
                    std::size_t threads) {
  if (samples.empty()) throw InputError("cannot evaluate an empty corpus");
  std::vector<double> losses(samples.size());
  std::vector<std::size_t> predicted(samples.size()), gold(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const Prediction p = predict_sample(params, samples[i]);
    losses[i] = loss_value(p.probabilities.values(), samples[i].class_id);
    predicted[i] = p.class_id;
  });
  for (std::size_t i = 0; i < samples.size(); ++i) gold[i] = samples[i].class_id;
  EvalResult r;
  r.loss = batch_loss(losses);
  r.metrics = compute_metrics(gold, predicted, params.spec.classes);
  r.predictions = std::move(predicted);
  return r;
}

std::vector<std::vector<std::size_t>> epoch_batches(Rng& rng, std::size_t samples,
                                                    std::size_t batch) {
  if (batch < 1) throw InputError("batch size must be at least 1");
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < samples; start += batch) {
    const std::size_t end = std::min(samples, start + batch);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<EpochReport> train(ModelParams& params, std::span<const EncodedSample> training,
                               std::span<const EncodedSample> dev, const TrainConfig& config,
                               const EpochCallback& on_epoch) {
  if (training.empty()) throw InputError("cannot train on an empty corpus");
  if (config.batch < 1) throw InputError("batch size must be at least 1");
  for (const auto& s : training) check_sample(params.spec, s);

  AdamState adam{config.adam, {}, {}, 0};
  Rng shuffle_rng(config.seed);

  std::vector<EpochReport> reports;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double objective_sum = 0.0;
    std::size_t batches = 0;
    for (const auto& indices : epoch_batches(shuffle_rng, training.size(), config.batch)) {
      std::vector<const EncodedSample*> batch;
      std::vector<std::uint64_t> seeds;
      for (std::size_t i : indices) {
        batch.push_back(&training[i]);
        seeds.push_back(sample_seed(config.seed, epoch, i));
      }
      BatchGradient g = batch_gradient(params, batch, seeds, config.threads);
      std::vector<Tensor> current;
      params.for_each([&](const std::string&, const Tensor& t) { current.push_back(t); });
      adam_step(current, g.grads, adam);
      std::size_t k = 0;
      params.for_each([&](const std::string&, Tensor& t) { t = current[k++]; });
      objective_sum += g.loss;
      ++batches;
    }

    EpochReport report;
    report.epoch = epoch;
    report.objective = objective_sum / static_cast<double>(batches);
    report.train = evaluate(params, training, config.threads);
    if (!std::isfinite(report.train.loss)) throw NumericError("non-finite training loss");
    if (!dev.empty()) report.dev = evaluate(params, dev, config.threads);
    reports.push_back(report);
    if (on_epoch && !on_epoch(report, params)) break;
  }
  return reports;
}

namespace {
std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace

std::string log_line(std::size_t epoch, const std::string& split, const EvalResult& r) {
  return std::to_string(epoch) + '\t' + split + '\t' + fmt6(r.loss) + '\t' +
         fmt6(r.metrics.accuracy) + '\t' + fmt6(r.metrics.macro_precision) + '\t' +
         fmt6(r.metrics.macro_recall) + '\t' + fmt6(r.metrics.f1);
}

std::string metrics_text(const Metrics& m, const LabelSet& labels) {
  std::string out;
  out += "samples: " + std::to_string(m.total) + '\n';
  out += "accuracy: " + fmt6(m.accuracy) + '\n';
  out += "macro precision: " + fmt6(m.macro_precision) + '\n';
  out += "macro recall: " + fmt6(m.macro_recall) + '\n';
  out += "F1: " + fmt6(m.f1) + '\n';
  for (std::size_t k = 0; k < m.classes(); ++k) {
    const std::string name = k < labels.size() ? labels.name(k) : std::to_string(k);
    out += "  " + name + "  P=" + fmt6(m.precision[k]) + " R=" + fmt6(m.recall[k]) +
           " F1=" + fmt6(f1_score(m.precision[k], m.recall[k])) +
           " n=" + std::to_string(m.support[k]) + '\n';
  }
  return out;
}

std::string metrics_tsv(const Metrics& m, const LabelSet& labels) {
  std::string out = "class\tlabel\tprecision\trecall\tf1\tsupport\n";
  for (std::size_t k = 0; k < m.classes(); ++k) {
    const std::string name = k < labels.size() ? labels.name(k) : std::to_string(k);
    out += std::to_string(k) + '\t' + name + '\t' + fmt6(m.precision[k]) + '\t' +
           fmt6(m.recall[k]) + '\t' + fmt6(f1_score(m.precision[k], m.recall[k])) + '\t' +
           std::to_string(m.support[k]) + '\n';
  }
  return out;
}

}  // namespace moto
