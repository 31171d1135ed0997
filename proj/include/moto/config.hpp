#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "moto/model.hpp"

namespace moto {

/// Everything a command needs. Defaults follow the reference setup: D = 256,
/// dropout 0.5, lr 0.001, batch 32.
struct Config {
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path dev;
  std::filesystem::path dict_radical;
  std::filesystem::path dict_wubi;
  std::filesystem::path dict_pinyin;
  /// Either one path (character table) or `g=path` entries joined by commas.
  std::string embeddings;
  std::filesystem::path ckpt;
  std::filesystem::path out;
  std::filesystem::path report;
  std::filesystem::path dump_attention;
  std::string text;

  std::size_t dim = 256;
  double dropout = 0.5;
  double lr = 0.001;
  std::size_t batch = 32;
  std::size_t max_epochs = 30;
  std::size_t downsample_target = 18;
  std::size_t downsample_threshold = 64;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  StreamSet streams;
  bool sigmoid_head = true;
  std::optional<double> max_non_chinese;

  /// Sets one field from its key (flag name without dashes; '_' and '-' are
  /// interchangeable). Throws InputError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  /// Throws InputError unless D is even and positive, 0 <= dropout < 1 and
  /// batch >= 1.
  void validate() const;

  /// Settings that influence results, as `key=value` pairs for the checkpoint.
  /// Output locations and the thread count are left out.
  std::map<std::string, std::string> effective() const;
};

/// Parses sectionless `key = value` lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in,
                                                              const std::string& source);

/// Every key accepted by Config::set.
const std::vector<std::string>& config_keys();

}  // namespace moto
