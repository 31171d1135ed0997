#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moto/chargrains.hpp"
#include "moto/model.hpp"
#include "moto/tensor.hpp"

namespace moto {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for a fixed list of parameters. `m` and `v` are sized on
/// the first step.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam update of every parameter; increments `state.t` once.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

/// Confusion matrix and macro-averaged scores. Rows are gold classes,
/// columns predictions.
struct Metrics {
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<std::size_t> support;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::size_t total = 0;

  std::size_t classes() const { return confusion.size(); }
};

/// Harmonic mean 2PR/(P+R); 0 when P + R is 0.
double f1_score(double precision, double recall);

/// Per-class precision TP/(TP+FP) and recall TP/(TP+FN) with 0/0 = 0;
/// macro P and R are unweighted means over all classes and F1 combines them.
Metrics compute_metrics(std::span<const std::size_t> gold, std::span<const std::size_t> predicted,
                        std::size_t classes);

struct EvalResult {
  double loss = 0.0;
  Metrics metrics;
  std::vector<std::size_t> predictions;
};

/// Eval-mode forwards over `samples`. Throws InputError when empty.
EvalResult evaluate(const ModelParams& params, std::span<const EncodedSample> samples,
                    std::size_t threads = 1);

struct TrainConfig {
  std::size_t batch = 32;
  std::size_t max_epochs = 30;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  AdamConfig adam;
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  /// Mean of the mini-batch objectives seen during the epoch (train mode).
  double objective = 0.0;
  EvalResult train;
  std::optional<EvalResult> dev;
};

/// Called after each epoch; returning false ends training.
using EpochCallback = std::function<bool(const EpochReport&, const ModelParams&)>;

/// Loss and gradients of the mean loss over `batch`, gradients in
/// ModelParams::for_each order. Per-sample gradients are summed in sample
/// order, so the result does not depend on `threads`.
struct BatchGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

BatchGradient batch_gradient(const ModelParams& params, std::span<const EncodedSample* const> batch,
                             std::span<const std::uint64_t> sample_seeds, std::size_t threads = 1);

/// One epoch's mini-batches: a fresh shuffle of [0, samples) cut into runs
/// of `batch` indices. The last batch may be shorter.
std::vector<std::vector<std::size_t>> epoch_batches(Rng& rng, std::size_t samples,
                                                    std::size_t batch);

/// Shuffled mini-batch training with one Adam step per batch. Partial final
/// batches are trained. Throws NumericError on a non-finite loss.
std::vector<EpochReport> train(ModelParams& params, std::span<const EncodedSample> training,
                               std::span<const EncodedSample> dev, const TrainConfig& config,
                               const EpochCallback& on_epoch = {});

/// Seed for the dropout generator of one sample visit.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t epoch, std::size_t sample_index);

/// `epoch<TAB>split<TAB>loss<TAB>accuracy<TAB>macroP<TAB>macroR<TAB>F1`
std::string log_line(std::size_t epoch, const std::string& split, const EvalResult& result);

/// Human-readable summary with one line per class.
std::string metrics_text(const Metrics& metrics, const LabelSet& labels);
/// `class<TAB>label<TAB>precision<TAB>recall<TAB>f1<TAB>support` rows with a header.
std::string metrics_tsv(const Metrics& metrics, const LabelSet& labels);

}  // namespace moto
