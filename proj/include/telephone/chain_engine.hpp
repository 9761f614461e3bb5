#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "telephone/noisy_channel.hpp"

namespace telephone {

enum class NodeState { protected_stimulus, accepted, downstream_flagged, self_flagged, auto_flagged };

std::string to_string(NodeState s);
NodeState parse_node_state(const std::string& s);
inline bool is_flagged(NodeState s) {
  return s == NodeState::downstream_flagged || s == NodeState::self_flagged || s == NodeState::auto_flagged;
}

/// listener: the agent who heard the parent and produced this recording.
/// speaker: the agent who produced the parent (-1 for the original stimulus).
struct RecordingNode {
  std::size_t id = 0;
  std::size_t stimulus = 0;
  std::optional<std::size_t> parent;
  std::string transcription;
  int speaker = -1;
  int listener = -1;
  NodeState state = NodeState::accepted;
  std::string flag_reason;
  int generation = 0;
  std::uint64_t seed = 0;
};

struct FilterConfig {
  double char_ratio = 0.20;
  int word_delta = 2;
  double similarity_threshold = 0.58;
  int max_words = 0;  // 0: no cap

  void validate() const;
};

struct Verdict {
  bool accepted = true;
  std::string reason;  // blank, length, word_count, max_words, similarity
};

/// Nonspace characters, counting UTF-8 code points.
std::size_t nonspace_chars(const std::string& s);

/// Damerau-Levenshtein (optimal string alignment: adjacent transpositions,
/// no substring edited twice) over max length. Operates on UTF-8 code points.
double norm_lev_damerau(const std::string& a, const std::string& b);

/// prev must be nonempty. Checks run in order blank, length, word_count,
/// max_words, similarity; the first failure names the reason.
Verdict apply_filters(const FilterConfig& cfg, const std::string& prev, const std::string& next);

struct Lease {
  std::size_t stimulus = 0;
  std::size_t node = 0;
  int agent = -1;
  long long expiry = 0;  // valid while now < expiry
  std::uint64_t token = 0;
};

class BusyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LeaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Recording history of each stimulus. Non-flagged nodes always form a single
/// path from the protected stimulus; a participant is offered its last node.
class TransmissionGraph {
 public:
  explicit TransmissionGraph(const std::vector<std::string>& stimuli, FilterConfig filters = {},
                             long long lease_ticks = 1);

  std::size_t stimulus_count() const { return by_stimulus_.size(); }
  const std::vector<RecordingNode>& nodes() const { return nodes_; }
  const RecordingNode& node(std::size_t id) const { return nodes_.at(id); }
  const std::vector<std::size_t>& stimulus_nodes(std::size_t s) const { return by_stimulus_.at(s); }
  const FilterConfig& filters() const { return filters_; }

  /// Last non-flagged node of the stimulus (the protected node at worst).
  const RecordingNode& current(std::size_t s) const;
  /// Protected node followed by accepted nodes, in generation order.
  std::vector<std::size_t> chain(std::size_t s) const;
  const std::optional<Lease>& active_lease(std::size_t s) const { return leases_.at(s); }

  /// Throws BusyError while another agent holds an unexpired lease. An expired
  /// lease is dropped; the same agent asking again gets its lease back.
  Lease next_input(std::size_t s, int agent, long long now);

  /// Returns the new node id, or nothing when the trial ended with an upstream
  /// flag. Releases the lease. Throws LeaseError for a stale or foreign lease.
  std::optional<std::size_t> submit_recording(const Lease& lease, const std::string& response, long long now,
                                              const std::optional<std::string>& upstream_flag = {},
                                              const std::optional<std::string>& self_flag = {},
                                              std::uint64_t seed = 0);

  /// Drops the lease without a recording.
  void release(const Lease& lease);

 private:
  void check_lease(const Lease& lease, long long now) const;

  FilterConfig filters_;
  long long lease_ticks_;
  std::vector<RecordingNode> nodes_;
  std::vector<std::vector<std::size_t>> by_stimulus_;
  std::vector<std::size_t> current_;
  std::vector<std::optional<Lease>> leases_;
  std::uint64_t next_token_ = 1;
};

/// Simulated flag events. The upstream total splits across reasons in the
/// proportions observed with human raters: speech errors 4.5, cut off 3.5,
/// other 7.3 (percent of all recordings).
struct FlagRates {
  double upstream = 0.153;
  double self = 0.0;

  void validate() const;
};

const char* upstream_reason(double u01);

struct ChainConfig {
  int generations = 25;
  int max_trials = 0;  // per chain; 0 means 3 * generations
  FilterConfig filters;
  FlagRates flags;
  std::uint64_t seed = 1;
};

struct ChainLogRow {
  std::size_t chain_id = 0;
  int generation = 0;
  int listener_id = -1;
  int speaker_id = -1;
  std::string transcription;
  NodeState state = NodeState::accepted;
  std::string flag_reason;
  std::uint64_t seed = 0;

  bool operator==(const ChainLogRow&) const = default;
};

struct ChainLog {
  std::vector<ChainLogRow> rows;

  /// Transcriptions of the protected node and accepted nodes, per chain,
  /// in generation order.
  std::vector<std::vector<std::string>> accepted_chains() const;
  /// Per chain: true when accepted generations run 0, 1, 2, ... with no gaps.
  bool gap_free() const;

  void write_csv(std::ostream& out) const;
  std::string csv() const;
  static ChainLog read_csv(std::istream& in);
  nlohmann::json to_json() const;
  static ChainLog from_json(const nlohmann::json& j);

  bool operator==(const ChainLog&) const = default;
};

extern const std::vector<std::string> kChainLogColumns;

/// One chain per stimulus, each advanced trial by trial: pick an agent, roll
/// for an upstream flag, take a Telephone step, roll for a self flag, then
/// filter. Stops once the chain is `generations` deep or after max_trials trials.
/// Chains run on an OpenMP work pool; output is independent of scheduling.
ChainLog run_chains(const ChainConfig& cfg, const std::vector<Utterance>& stimuli,
                    const std::vector<ListenerAgent>& agents);
/// Single-threaded reference producing the same log.
ChainLog run_chains_serial(const ChainConfig& cfg, const std::vector<Utterance>& stimuli,
                           const std::vector<ListenerAgent>& agents);

}  // namespace telephone
