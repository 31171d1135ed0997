#include "moto/config.hpp"

#include <algorithm>
#include <sstream>

#include "moto/error.hpp"

namespace moto {

namespace {

std::string normalize(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value.front() == '-') throw std::invalid_argument(value);
    const auto v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw InputError(key + ": expected a non-negative integer, got '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw InputError(key + ": expected a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "off" || value == "no") return false;
  throw InputError(key + ": expected on/off, got '" + value + "'");
}

std::string format(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "train",        "test",        "dev",
      "dict-radical", "dict-wubi",   "dict-pinyin",
      "embeddings",   "ckpt",        "out",
      "report",       "dump-attention", "text",
      "dim",          "dropout",     "lr",
      "batch",        "max-epochs",  "downsample-target",
      "downsample-threshold", "seed", "threads",
      "streams",      "sigmoid-head", "max-non-chinese"};
  return keys;
}

void Config::set(const std::string& raw_key, const std::string& value) {
  const std::string key = normalize(raw_key);
  if (key == "train") train = value;
  else if (key == "test") test = value;
  else if (key == "dev") dev = value;
  else if (key == "dict-radical") dict_radical = value;
  else if (key == "dict-wubi") dict_wubi = value;
  else if (key == "dict-pinyin") dict_pinyin = value;
  else if (key == "embeddings") embeddings = value;
  else if (key == "ckpt") ckpt = value;
  else if (key == "out") out = value;
  else if (key == "report") report = value;
  else if (key == "dump-attention") dump_attention = value;
  else if (key == "text") text = value;
  else if (key == "dim") dim = to_size(key, value);
  else if (key == "dropout") dropout = to_double(key, value);
  else if (key == "lr") lr = to_double(key, value);
  else if (key == "batch") batch = to_size(key, value);
  else if (key == "max-epochs") max_epochs = to_size(key, value);
  else if (key == "downsample-target") downsample_target = to_size(key, value);
  else if (key == "downsample-threshold") downsample_threshold = to_size(key, value);
  else if (key == "seed") seed = to_size(key, value);
  else if (key == "threads") threads = to_size(key, value);
  else if (key == "streams") streams = StreamSet::parse(value);
  else if (key == "sigmoid-head") sigmoid_head = to_bool(key, value);
  else if (key == "max-non-chinese") max_non_chinese = to_double(key, value);
  else throw InputError("unknown configuration key '" + raw_key + "'");
}

void Config::validate() const {
  if (dim == 0 || dim % 2 != 0) throw InputError("dim must be a positive even number");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InputError("dropout must be in [0, 1)");
  if (batch < 1) throw InputError("batch must be at least 1");
  if (!(lr > 0.0)) throw InputError("lr must be positive");
  if (threads < 1) throw InputError("threads must be at least 1");
  if (downsample_target < 1) throw InputError("downsample-target must be at least 1");
  if (max_non_chinese && (*max_non_chinese < 0.0 || *max_non_chinese > 1.0)) {
    throw InputError("max-non-chinese must be in [0, 1]");
  }
}

std::map<std::string, std::string> Config::effective() const {
  std::map<std::string, std::string> m;
  m["train"] = train.string();
  m["dev"] = dev.string();
  m["dict-radical"] = dict_radical.string();
  m["dict-wubi"] = dict_wubi.string();
  m["dict-pinyin"] = dict_pinyin.string();
  m["embeddings"] = embeddings;
  m["dim"] = std::to_string(dim);
  m["dropout"] = format(dropout);
  m["lr"] = format(lr);
  m["batch"] = std::to_string(batch);
  m["max-epochs"] = std::to_string(max_epochs);
  m["downsample-target"] = std::to_string(downsample_target);
  m["downsample-threshold"] = std::to_string(downsample_threshold);
  m["seed"] = std::to_string(seed);
  m["streams"] = streams.str();
  m["sigmoid-head"] = sigmoid_head ? "on" : "off";
  m["max-non-chinese"] = max_non_chinese ? format(*max_non_chinese) : "";
  return m;
}

std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in,
                                                              const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected 'key = value'");
    std::string key = normalize(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));
    if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end()) {
      throw ParseError(source, lineno, "unknown key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

}  // namespace moto
