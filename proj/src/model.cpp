#include "moto/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "moto/error.hpp"
#include "moto/ops.hpp"

namespace moto {

namespace {

std::size_t aux_index(Granularity g) { return static_cast<std::size_t>(g) - 1; }
std::size_t index(Granularity g) { return static_cast<std::size_t>(g); }

}  // namespace

bool StreamSet::enabled(Granularity g) const {
  if (g == Granularity::character) return true;
  return aux[aux_index(g)];
}

std::size_t StreamSet::count() const {
  const auto n = static_cast<std::size_t>(std::count(aux.begin(), aux.end(), true));
  return std::max<std::size_t>(n, 1);
}

std::string StreamSet::str() const {
  std::string out = "c";
  for (Granularity g : kAuxGranularities) {
    if (enabled(g)) {
      out += ',';
      out += short_name(g);
    }
  }
  return out;
}

StreamSet StreamSet::parse(std::string_view text) {
  if (text == "all") return StreamSet{};
  StreamSet s{{false, false, false}};
  bool has_char = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto name = utf8::trim(text.substr(start, end - start));
    const auto g = parse_granularity(name);
    if (!g) throw InputError("unknown stream '" + std::string(name) + "'");
    if (*g == Granularity::character) {
      has_char = true;
    } else {
      s.aux[aux_index(*g)] = true;
    }
    start = end + 1;
  }
  if (!has_char) throw InputError("stream list must include the character stream 'c'");
  return s;
}

bool ModelSpec::downsampled(Granularity g) const {
  return lengths[index(g)] > downsample_threshold;
}

std::size_t ModelSpec::stream_length(Granularity g) const {
  return downsampled(g) ? downsample_target : lengths[index(g)];
}

void ModelSpec::validate() const {
  if (dim == 0 || dim % 2 != 0) throw InputError("dimension D must be positive and even");
  if (classes < 2) throw InputError("at least 2 classes are required");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InputError("dropout must be in [0, 1)");
  if (downsample_target < 1) throw InputError("downsample target must be at least 1");
  for (Granularity g : kGranularities) {
    if (!streams.enabled(g)) continue;
    const auto k = index(g);
    if (lengths[k] < 1) throw InputError("target length must be positive");
    if (vocab_sizes[k] < 2) throw InputError("vocabulary must hold the reserved tokens");
    if (pad_ids[k] >= vocab_sizes[k]) throw InputError("pad id outside vocabulary");
  }
}

ModelParams ModelParams::initialize(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  ModelParams p;
  p.spec = spec;
  const std::size_t d = spec.dim;
  for (Granularity g : kGranularities) {
    if (!spec.streams.enabled(g)) continue;
    p.embeddings[index(g)] = init::embedding_uniform(spec.vocab_sizes[index(g)], d, rng);
  }
  p.bilstm = BiLstmParams::xavier(d, spec.hidden(), rng);
  for (Granularity g : kAuxGranularities) {
    if (spec.streams.enabled(g)) p.fusion[aux_index(g)] = fusion::FusionParams::xavier(d, rng);
  }
  for (Granularity g : kGranularities) {
    if (spec.streams.enabled(g) && spec.downsampled(g)) {
      const std::size_t width = downsample_width(spec.lengths[index(g)], spec.downsample_target);
      p.conv[index(g)] = Conv1dParams::xavier(width, d, rng);
    }
  }
  p.head = init::xavier_uniform({spec.con_width(), spec.classes}, spec.con_width(), spec.classes,
                                rng);
  return p;
}

namespace {

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  for (Granularity g : kGranularities) {
    if (p.embeddings[index(g)]) fn("embedding." + std::string(short_name(g)), *p.embeddings[index(g)]);
  }
  fn(std::string("bilstm.forward.weight"), p.bilstm.forward.weight);
  fn(std::string("bilstm.forward.bias"), p.bilstm.forward.bias);
  fn(std::string("bilstm.backward.weight"), p.bilstm.backward.weight);
  fn(std::string("bilstm.backward.bias"), p.bilstm.backward.bias);
  for (Granularity g : kAuxGranularities) {
    if (auto& f = p.fusion[aux_index(g)]) {
      const std::string base = "fusion." + std::string(short_name(g));
      fn(base + ".weight", f->weight);
      fn(base + ".bias", f->bias);
    }
  }
  for (Granularity g : kGranularities) {
    if (auto& c = p.conv[index(g)]) {
      const std::string base = "conv." + std::string(short_name(g));
      fn(base + ".weight", c->weight);
      fn(base + ".bias", c->bias);
    }
  }
  fn(std::string("head.weight"), p.head);
}

}  // namespace

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_params(*this, fn);
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_params(*this, fn);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

BoundModel bind(Tape& tape, const ModelParams& params) {
  BoundModel m;
  m.spec = &params.spec;
  for (Granularity g : kGranularities) {
    if (params.embeddings[index(g)]) {
      m.embeddings[index(g)] = tape.leaf(*params.embeddings[index(g)]);
      m.leaves.push_back(*m.embeddings[index(g)]);
    }
  }
  m.bilstm = bind(tape, params.bilstm);
  for (Var v : {m.bilstm.forward.weight, m.bilstm.forward.bias, m.bilstm.backward.weight,
                m.bilstm.backward.bias})
    m.leaves.push_back(v);
  for (Granularity g : kAuxGranularities) {
    if (const auto& f = params.fusion[aux_index(g)]) {
      m.fusion[aux_index(g)] = fusion::bind(tape, *f);
      m.leaves.push_back(m.fusion[aux_index(g)]->weight);
      m.leaves.push_back(m.fusion[aux_index(g)]->bias);
    }
  }
  for (Granularity g : kGranularities) {
    if (const auto& c = params.conv[index(g)]) {
      m.conv[index(g)] = bind(tape, *c);
      m.leaves.push_back(m.conv[index(g)]->weight);
      m.leaves.push_back(m.conv[index(g)]->bias);
    }
  }
  m.head = tape.leaf(params.head);
  m.leaves.push_back(m.head);
  return m;
}

void check_sample(const ModelSpec& spec, const EncodedSample& sample) {
  if (sample.class_id >= spec.classes) {
    throw CompatibilityError("class id " + std::to_string(sample.class_id) + " outside " +
                             std::to_string(spec.classes) + " classes");
  }
  for (Granularity g : kGranularities) {
    if (!spec.streams.enabled(g)) continue;
    const auto& ids = sample.stream(g);
    if (ids.size() != spec.lengths[index(g)]) {
      throw CompatibilityError(std::string(long_name(g)) + " stream has " +
                               std::to_string(ids.size()) + " ids, model expects " +
                               std::to_string(spec.lengths[index(g)]));
    }
    for (std::size_t id : ids) {
      if (id >= spec.vocab_sizes[index(g)]) {
        throw CompatibilityError(std::string(long_name(g)) + " id " + std::to_string(id) +
                                 " outside vocabulary of " +
                                 std::to_string(spec.vocab_sizes[index(g)]));
      }
    }
  }
}

ForwardVars forward(const BoundModel& model, const EncodedSample& sample, Mode mode, Rng& rng) {
  const ModelSpec& spec = *model.spec;
  check_sample(spec, sample);
  const bool training = mode == Mode::train;
  const auto regularize = [&](Var x) { return dropout(x, spec.dropout, training, rng); };

  std::array<std::optional<Var>, 4> inputs;
  for (Granularity g : kGranularities) {
    if (!spec.streams.enabled(g)) continue;
    const Var table = *model.embeddings[index(g)];
    Var e = embed(table, sample.stream(g));
    if (const auto& conv = model.conv[index(g)]) {
      e = conv1d_downsample(e, *conv, spec.downsample_target,
                            ops::row(table, spec.pad_ids[index(g)]));
    }
    inputs[index(g)] = e;
  }

  ForwardVars out;
  const Var char_inputs = *inputs[index(Granularity::character)];
  const Var char_states = regularize(bilstm(char_inputs, model.bilstm));
  for (Granularity g : kAuxGranularities) {
    if (!spec.streams.enabled(g)) continue;
    auto trace = fusion::attention_stream(char_inputs, char_states, *inputs[index(g)],
                                          model.bilstm, *model.fusion[aux_index(g)], regularize);
    out.alpha[aux_index(g)] = trace.alpha;
    out.stream_outputs.push_back(ops::row(trace.outputs, trace.outputs.value().rows() - 1));
  }
  if (out.stream_outputs.empty()) {
    out.stream_outputs.push_back(ops::row(char_states, char_states.value().rows() - 1));
  }

  out.con = regularize(ops::concat(out.stream_outputs));
  Var scores = ops::matmul(out.con, model.head);
  out.logits = spec.sigmoid_head ? ops::sigmoid(scores) : scores;
  out.probabilities = ops::softmax(out.logits);
  return out;
}

Prediction predict_sample(const ModelParams& params, const EncodedSample& sample) {
  Tape tape;
  const BoundModel model = bind(tape, params);
  Rng unused(0);
  const ForwardVars f = forward(model, sample, Mode::eval, unused);
  Prediction p{f.logits.value(), f.probabilities.value(), predict(f.probabilities.value().values()),
               {}};
  for (std::size_t k = 0; k < 3; ++k) {
    if (f.alpha[k]) p.alpha[k] = f.alpha[k]->value();
  }
  return p;
}

Var loss(Var probabilities, std::size_t gold) { return ops::neg_log_prob(probabilities, gold); }

double loss_value(std::span<const double> probabilities, std::size_t gold) {
  if (gold >= probabilities.size()) {
    throw ShapeError("gold class " + std::to_string(gold) + " out of range");
  }
  return -std::log(std::max(probabilities[gold], 1e-12));
}

double batch_loss(std::span<const double> losses) {
  if (losses.empty()) throw InputError("empty batch");
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

std::size_t predict(std::span<const double> probabilities) {
  if (probabilities.empty()) throw ShapeError("empty probability vector");
  return static_cast<std::size_t>(
      std::max_element(probabilities.begin(), probabilities.end()) - probabilities.begin());
}

namespace checkpoint {

namespace {

constexpr std::string_view kMagic = "MOTO1\n";
constexpr std::string_view kMetaName = "META";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string_view take(std::uint64_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw CompatibilityError("checkpoint truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string meta_text(const Meta& meta) {
  std::string out;
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw InputError("META entry '" + k + "' contains '=' in the key or a newline");
    }
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

Meta parse_meta(std::string_view text) {
  Meta meta;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) throw CompatibilityError("META must end with a newline");
    const auto line = text.substr(start, end - start);
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw CompatibilityError("META line without '='");
    meta.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    start = end + 1;
  }
  return meta;
}

std::string join(std::span<const std::size_t> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stoull(item));
  return out;
}

const std::string& require(const Meta& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw CompatibilityError("checkpoint META lacks '" + key + "'");
  return it->second;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string encode(const Contents& contents) {
  std::string out(kMagic);
  for (const auto& [name, t] : contents.tensors) {
    if (name == kMetaName) throw InputError("tensor section may not be named META");
    put_u64(out, name.size());
    out += name;
    put_u64(out, t.rank());
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.values()) put_f64(out, v);
  }
  const std::string text = meta_text(contents.meta);
  put_u64(out, kMetaName.size());
  out += kMetaName;
  put_u64(out, text.size());
  out += text;
  return out;
}

Contents decode(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw CompatibilityError("not a checkpoint file");
  Reader r(bytes.substr(kMagic.size()));
  Contents c;
  while (true) {
    if (r.done()) throw CompatibilityError("checkpoint lacks a META section");
    const auto name = std::string(r.take(r.u64()));
    if (name == kMetaName) {
      c.meta = parse_meta(r.take(r.u64()));
      if (!r.done()) throw CompatibilityError("data after META section");
      return c;
    }
    const std::uint64_t rank = r.u64();
    if (rank > 8) throw CompatibilityError("implausible rank in section " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = shape_size(shape);
    if (n > bytes.size() / 8) throw CompatibilityError("section " + name + " exceeds file size");
    std::vector<double> values(n);
    for (double& v : values) v = r.f64();
    c.tensors.emplace_back(name, Tensor(std::move(shape), std::move(values)));
  }
}

std::string serialize(const ModelParams& params, const Meta& extra) {
  Contents c;
  params.for_each([&](const std::string& name, const Tensor& t) { c.tensors.emplace_back(name, t); });
  c.meta = extra;
  const ModelSpec& s = params.spec;
  c.meta["D"] = std::to_string(s.dim);
  c.meta["H"] = std::to_string(s.hidden());
  c.meta["K"] = std::to_string(s.classes);
  c.meta["streams"] = s.streams.str();
  c.meta["sigmoid_head"] = s.sigmoid_head ? "1" : "0";
  c.meta["dropout"] = format_double(s.dropout);
  c.meta["downsample_target"] = std::to_string(s.downsample_target);
  c.meta["downsample_threshold"] = std::to_string(s.downsample_threshold);
  c.meta["lengths"] = join(s.lengths);
  c.meta["pad_ids"] = join(s.pad_ids);
  c.meta["vocab_sizes"] = join(s.vocab_sizes);
  if (!c.meta.contains("init")) {
    c.meta["init"] = "xavier_uniform weights, zero biases, uniform(sqrt(3/D)) embeddings";
  }
  return encode(c);
}

ModelParams deserialize(std::string_view bytes, Meta* meta_out) {
  Contents c = decode(bytes);
  ModelSpec s;
  try {
    s.dim = std::stoull(require(c.meta, "D"));
    s.classes = std::stoull(require(c.meta, "K"));
    s.streams = StreamSet::parse(require(c.meta, "streams"));
    s.sigmoid_head = require(c.meta, "sigmoid_head") == "1";
    s.dropout = std::stod(require(c.meta, "dropout"));
    s.downsample_target = std::stoull(require(c.meta, "downsample_target"));
    s.downsample_threshold = std::stoull(require(c.meta, "downsample_threshold"));
    const auto copy4 = [&](const std::string& key, std::array<std::size_t, 4>& dst) {
      const auto v = split_sizes(require(c.meta, key));
      if (v.size() != 4) throw CompatibilityError("META '" + key + "' needs 4 values");
      std::copy(v.begin(), v.end(), dst.begin());
    };
    copy4("lengths", s.lengths);
    copy4("pad_ids", s.pad_ids);
    copy4("vocab_sizes", s.vocab_sizes);
    s.validate();
  } catch (const CompatibilityError&) {
    throw;
  } catch (const std::exception& e) {
    throw CompatibilityError(std::string("bad checkpoint META: ") + e.what());
  }

  // Shapes come from a freshly initialized model of the same spec.
  Rng rng(0);
  ModelParams p = ModelParams::initialize(s, rng);
  std::size_t k = 0;
  p.for_each([&](const std::string& name, Tensor& t) {
    if (k >= c.tensors.size() || c.tensors[k].first != name) {
      throw CompatibilityError("checkpoint section " + std::to_string(k) + " should be '" + name +
                               "'");
    }
    if (c.tensors[k].second.shape() != t.shape()) {
      throw CompatibilityError("section '" + name + "' has shape " +
                               shape_str(c.tensors[k].second.shape()) + ", expected " +
                               shape_str(t.shape()));
    }
    t = c.tensors[k].second;
    ++k;
  });
  if (k != c.tensors.size()) throw CompatibilityError("unexpected extra checkpoint sections");
  if (meta_out) *meta_out = std::move(c.meta);
  return p;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save(const std::filesystem::path& path, const ModelParams& params, const Meta& extra) {
  write_file(path, serialize(params, extra));
}

ModelParams load(const std::filesystem::path& path, Meta* meta_out) {
  return deserialize(read_file(path), meta_out);
}

}  // namespace checkpoint

}  // namespace moto
