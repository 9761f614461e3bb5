#pragma once

#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace telephone {

/// Bad usage or configuration (exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key=value settings. Every key has a default; unknown keys are
/// rejected by name.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(const std::string& text, const std::string& source = "config");
  static RunConfig load(const std::string& path);
  /// Sorted key = value lines; parse(serialize()) reproduces the config.
  std::string serialize() const;

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  /// Relative path values are taken relative to base.
  void resolve_paths(const std::string& base);
  /// Throws ConfigError naming the first bad key.
  void validate() const;

  const std::map<std::string, std::string>& values() const { return values_; }
  bool operator==(const RunConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

extern const std::vector<std::string> kPathKeys;

// Each command writes under get("out") and returns the digests of its data
// products, keyed by path relative to the output directory.
using Digests = std::map<std::string, std::string>;

Digests cmd_train(const RunConfig& cfg, std::ostream& log);
Digests cmd_select_stimuli(const RunConfig& cfg, std::ostream& log);
Digests cmd_simulate(const RunConfig& cfg, std::ostream& log);
/// Alignments of every consecutive accepted pair in the log.
Digests cmd_align(const RunConfig& cfg, const std::string& log_path, std::ostream& log);
Digests cmd_analyze(const RunConfig& cfg, const std::string& log_path, std::ostream& log);
Digests cmd_report(const RunConfig& cfg, std::ostream& log);

/// Full command line, argv[0] excluded. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace telephone
