#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moto/chargrains.hpp"
#include "moto/fusion.hpp"
#include "moto/neural.hpp"
#include "moto/tensor.hpp"

namespace moto {

/// Auxiliary granularities, in the order their streams enter Con.
inline constexpr std::array<Granularity, 3> kAuxGranularities = {
    Granularity::radical, Granularity::wubi, Granularity::pinyin};

/// Which auxiliary streams are fused into the character stream. With none
/// enabled the model reads the plain character BiLSTM.
struct StreamSet {
  std::array<bool, 3> aux = {true, true, true};

  bool enabled(Granularity g) const;
  std::size_t count() const;  // number of vectors concatenated into Con
  /// "c", "c,r", "c,r,w,py", ...; "all" is accepted as input.
  std::string str() const;
  static StreamSet parse(std::string_view text);

  friend bool operator==(const StreamSet&, const StreamSet&) = default;
};

/// Structural hyperparameters fixed when a model is created.
struct ModelSpec {
  std::size_t dim = 256;  // D; each BiLSTM direction has D/2 units
  std::size_t classes = 2;
  std::array<std::size_t, 4> vocab_sizes{};
  TargetLengths lengths{};  // encoded stream lengths
  std::array<std::size_t, 4> pad_ids{};
  StreamSet streams;
  bool sigmoid_head = true;
  double dropout = 0.5;  // train mode only
  std::size_t downsample_target = 18;
  std::size_t downsample_threshold = 64;

  std::size_t hidden() const { return dim / 2; }
  bool downsampled(Granularity g) const;
  /// Rows entering the BiLSTM for granularity g.
  std::size_t stream_length(Granularity g) const;
  std::size_t con_width() const { return streams.count() * dim; }

  /// Throws InputError on an inconsistent spec.
  void validate() const;
};

/// Every learnable tensor. All BiLSTM applications share `bilstm`.
struct ModelParams {
  ModelSpec spec;
  std::array<std::optional<Tensor>, 4> embeddings;
  BiLstmParams bilstm;
  std::array<std::optional<fusion::FusionParams>, 3> fusion;  // by kAuxGranularities
  std::array<std::optional<Conv1dParams>, 4> conv;
  Tensor head;  // [con_width x K]

  /// Xavier-uniform weights, zero biases, uniform embedding rows.
  static ModelParams initialize(const ModelSpec& spec, Rng& rng);

  /// Visits (name, tensor) pairs in the canonical checkpoint order.
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);

  std::size_t parameter_count() const;
};

enum class Mode { train, eval };

/// Parameters placed on one tape.
struct BoundModel {
  const ModelSpec* spec = nullptr;
  std::array<std::optional<Var>, 4> embeddings;
  BiLstmVars bilstm;
  std::array<std::optional<fusion::FusionVars>, 3> fusion;
  std::array<std::optional<Conv1dVars>, 4> conv;
  Var head;
  /// Leaves in ModelParams::for_each order.
  std::vector<Var> leaves;
};

BoundModel bind(Tape& tape, const ModelParams& params);

struct ForwardVars {
  Var con;
  Var logits;
  Var probabilities;
  /// Attention weights per auxiliary stream, [l_aux x lc]; unset for disabled
  /// streams.
  std::array<std::optional<Var>, 3> alpha;
  /// Final states of each stream entering Con.
  std::vector<Var> stream_outputs;
};

/// Records one sample's forward pass on the tape that `model` is bound to.
ForwardVars forward(const BoundModel& model, const EncodedSample& sample, Mode mode, Rng& rng);

struct Prediction {
  Tensor logits;
  Tensor probabilities;
  std::size_t class_id = 0;
  std::array<std::optional<Tensor>, 3> alpha;
};

/// Eval-mode forward on a private tape.
Prediction predict_sample(const ModelParams& params, const EncodedSample& sample);

/// -log p_gold with p clamped at 1e-12.
Var loss(Var probabilities, std::size_t gold);
double loss_value(std::span<const double> probabilities, std::size_t gold);
/// Mean of per-sample losses.
double batch_loss(std::span<const double> losses);

/// Argmax; the lowest index wins ties.
std::size_t predict(std::span<const double> probabilities);

/// Checks that an encoded sample fits the model's vocabularies and lengths.
void check_sample(const ModelSpec& spec, const EncodedSample& sample);

// Checkpoint file:
//   "MOTO1\n"
//   repeated: u64 name length, name, u64 rank, rank x u64 dims, f64 values
//   final:    u64 4, "META", u64 byte length, UTF-8 "key=value\n" lines
// All integers and floats are little-endian.
namespace checkpoint {

using Meta = std::map<std::string, std::string>;

struct Contents {
  std::vector<std::pair<std::string, Tensor>> tensors;
  Meta meta;
};

std::string encode(const Contents& contents);
Contents decode(std::string_view bytes);

/// Serialized model plus `extra` META entries. Structural keys written by
/// the model itself take precedence.
std::string serialize(const ModelParams& params, const Meta& extra = {});
/// Rebuilds the parameters; throws CompatibilityError if the sections do not
/// describe a consistent model.
ModelParams deserialize(std::string_view bytes, Meta* meta_out = nullptr);

void save(const std::filesystem::path& path, const ModelParams& params, const Meta& extra = {});
ModelParams load(const std::filesystem::path& path, Meta* meta_out = nullptr);

/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace checkpoint

}  // namespace moto
