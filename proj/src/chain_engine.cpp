#include "telephone/chain_engine.hpp"

#include <algorithm>
#include <exception>
#include <map>
#include <sstream>

#include "telephone/io.hpp"
#include "telephone/random.hpp"

namespace telephone {

namespace {

std::vector<char32_t> code_points(const std::string& s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : (c >> 5) == 6 ? 2 : (c >> 4) == 14 ? 3 : (c >> 3) == 30 ? 4 : 1;
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1f) : len == 3 ? (c & 0x0f) : (c & 0x07);
    for (int k = 1; k < len && i + static_cast<std::size_t>(k) < s.size(); ++k) {
      cp = (cp << 6) | (static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]) & 0x3f);
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

bool is_space(char32_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::string to_string(NodeState s) {
  switch (s) {
    case NodeState::protected_stimulus: return "protected";
    case NodeState::accepted: return "accepted";
    case NodeState::downstream_flagged: return "downstream_flagged";
    case NodeState::self_flagged: return "self_flagged";
    case NodeState::auto_flagged: return "auto_flagged";
  }
  return "?";
}

NodeState parse_node_state(const std::string& s) {
  for (auto st : {NodeState::protected_stimulus, NodeState::accepted, NodeState::downstream_flagged,
                  NodeState::self_flagged, NodeState::auto_flagged}) {
    if (to_string(st) == s) return st;
  }
  throw std::invalid_argument("unknown node state: " + s);
}

// ---------------------------------------------------------------------------
// Filters

void FilterConfig::validate() const {
  if (!(char_ratio >= 0.0 && char_ratio < 1.0)) throw std::invalid_argument("char_ratio must be in [0, 1)");
  if (word_delta < 0) throw std::invalid_argument("word_delta must be >= 0");
  if (!(similarity_threshold >= 0.0 && similarity_threshold <= 1.0)) {
    throw std::invalid_argument("similarity_threshold must be in [0, 1]");
  }
  if (max_words < 0) throw std::invalid_argument("max_words must be >= 0");
}

std::size_t nonspace_chars(const std::string& s) {
  std::size_t n = 0;
  for (char32_t c : code_points(s)) n += is_space(c) ? 0 : 1;
  return n;
}

double norm_lev_damerau(const std::string& a, const std::string& b) {
  auto x = code_points(a), y = code_points(b);
  const std::size_t n = x.size(), m = y.size();
  if (n == 0 && m == 0) return 0.0;
  // three rolling rows: i-2, i-1, i
  std::vector<std::size_t> r2(m + 1), r1(m + 1), r0(m + 1);
  for (std::size_t j = 0; j <= m; ++j) r1[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    r0[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t cost = x[i - 1] == y[j - 1] ? 0 : 1;
      std::size_t d = std::min({r1[j] + 1, r0[j - 1] + 1, r1[j - 1] + cost});
      if (i > 1 && j > 1 && x[i - 1] == y[j - 2] && x[i - 2] == y[j - 1]) d = std::min(d, r2[j - 2] + 1);
      r0[j] = d;
    }
    std::swap(r2, r1);
    std::swap(r1, r0);
  }
  return static_cast<double>(r1[m]) / static_cast<double>(std::max(n, m));
}

Verdict apply_filters(const FilterConfig& cfg, const std::string& prev, const std::string& next) {
  const long long cp = static_cast<long long>(nonspace_chars(prev));
  if (cp == 0) throw std::invalid_argument("apply_filters: previous transcription is blank");
  const long long cn = static_cast<long long>(nonspace_chars(next));
  if (cn == 0) return {false, "blank"};

  // ratio in millionths keeps the 20% boundary exact: 50 chars allows 40..60
  constexpr long long kScale = 1000000;
  const long long r = std::llround(cfg.char_ratio * kScale);
  if (cn * kScale > cp * (kScale + r) || cn * kScale < cp * (kScale - r)) return {false, "length"};

  auto wp = tokenize(prev), wn = tokenize(next);
  long long delta = static_cast<long long>(wn.size()) - static_cast<long long>(wp.size());
  if (std::llabs(delta) > cfg.word_delta) return {false, "word_count"};
  if (cfg.max_words > 0 && wn.size() > static_cast<std::size_t>(cfg.max_words)) return {false, "max_words"};

  if (norm_lev_damerau(join_words(wp), join_words(wn)) > cfg.similarity_threshold) return {false, "similarity"};
  return {true, ""};
}

// ---------------------------------------------------------------------------
// Graph

TransmissionGraph::TransmissionGraph(const std::vector<std::string>& stimuli, FilterConfig filters,
                                     long long lease_ticks)
    : filters_(filters), lease_ticks_(lease_ticks) {
  filters_.validate();
  if (lease_ticks < 1) throw std::invalid_argument("lease_ticks must be >= 1");
  for (std::size_t s = 0; s < stimuli.size(); ++s) {
    if (nonspace_chars(stimuli[s]) == 0) throw std::invalid_argument("stimulus " + std::to_string(s) + " is blank");
    RecordingNode n;
    n.id = nodes_.size();
    n.stimulus = s;
    n.transcription = stimuli[s];
    n.state = NodeState::protected_stimulus;
    by_stimulus_.push_back({n.id});
    current_.push_back(n.id);
    leases_.emplace_back();
    nodes_.push_back(std::move(n));
  }
}

const RecordingNode& TransmissionGraph::current(std::size_t s) const { return nodes_[current_.at(s)]; }

std::vector<std::size_t> TransmissionGraph::chain(std::size_t s) const {
  std::vector<std::size_t> out;
  for (std::size_t id : by_stimulus_.at(s)) {
    auto st = nodes_[id].state;
    if (st == NodeState::protected_stimulus || st == NodeState::accepted) out.push_back(id);
  }
  std::stable_sort(out.begin(), out.end(),
                   [&](std::size_t a, std::size_t b) { return nodes_[a].generation < nodes_[b].generation; });
  return out;
}

Lease TransmissionGraph::next_input(std::size_t s, int agent, long long now) {
  auto& held = leases_.at(s);
  if (held && now < held->expiry) {
    if (held->agent == agent) return *held;
    throw BusyError("stimulus " + std::to_string(s) + " is leased by agent " + std::to_string(held->agent));
  }
  held = Lease{s, current_[s], agent, now + lease_ticks_, next_token_++};
  return *held;
}

void TransmissionGraph::check_lease(const Lease& lease, long long now) const {
  if (lease.stimulus >= leases_.size()) throw LeaseError("lease for unknown stimulus");
  const auto& held = leases_[lease.stimulus];
  if (!held || held->token != lease.token) throw LeaseError("lease is not held");
  if (now >= held->expiry) throw LeaseError("lease expired");
}

void TransmissionGraph::release(const Lease& lease) {
  auto& held = leases_.at(lease.stimulus);
  if (held && held->token == lease.token) held.reset();
}

std::optional<std::size_t> TransmissionGraph::submit_recording(const Lease& lease, const std::string& response,
                                                              long long now,
                                                              const std::optional<std::string>& upstream_flag,
                                                              const std::optional<std::string>& self_flag,
                                                              std::uint64_t seed) {
  check_lease(lease, now);
  const std::size_t s = lease.stimulus;
  leases_[s].reset();

  if (upstream_flag) {
    auto& parent = nodes_[lease.node];
    // the original stimulus is accepted by fiat and cannot be flagged away
    if (parent.state != NodeState::protected_stimulus) {
      parent.state = NodeState::downstream_flagged;
      parent.flag_reason = *upstream_flag;
      current_[s] = *parent.parent;
    }
    return std::nullopt;
  }

  const RecordingNode& parent = nodes_[lease.node];
  RecordingNode n;
  n.id = nodes_.size();
  n.stimulus = s;
  n.parent = parent.id;
  n.transcription = response;
  n.listener = lease.agent;
  n.speaker = parent.listener;
  n.generation = parent.generation + 1;
  n.seed = seed;
  if (self_flag) {
    n.state = NodeState::self_flagged;
    n.flag_reason = *self_flag;
  } else {
    Verdict v = apply_filters(filters_, parent.transcription, response);
    n.state = v.accepted ? NodeState::accepted : NodeState::auto_flagged;
    n.flag_reason = v.reason;
  }
  if (n.state == NodeState::accepted) current_[s] = n.id;
  by_stimulus_[s].push_back(n.id);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

// ---------------------------------------------------------------------------
// Simulation

void FlagRates::validate() const {
  if (!(upstream >= 0.0 && upstream <= 1.0)) throw std::invalid_argument("flag_rate must be in [0, 1]");
  if (!(self >= 0.0 && self <= 1.0)) throw std::invalid_argument("self_flag_rate must be in [0, 1]");
}

const char* upstream_reason(double u01) {
  const double x = u01 * 0.153;
  if (x < 0.045) return "speech_errors";
  if (x < 0.080) return "cut_off";
  return "other";
}

namespace {

std::vector<ChainLogRow> run_one_chain(const ChainConfig& cfg, std::size_t chain_id, const Utterance& stimulus,
                                       const std::vector<ListenerAgent>& agents) {
  TransmissionGraph g({stimulus.text}, cfg.filters, 1);
  const int max_trials = cfg.max_trials > 0 ? cfg.max_trials : 3 * cfg.generations;
  // flags can remove accepted nodes, so progress is the depth of the chain
  for (int trial = 0; trial < max_trials && g.current(0).generation < cfg.generations; ++trial) {
    const long long now = trial;
    const std::uint64_t seed = derive_seed(cfg.seed, {chain_id, static_cast<std::uint64_t>(trial)});
    std::mt19937_64 rng(derive_seed(seed, {2}));
    const int agent_id = static_cast<int>(rng() % agents.size());
    // every draw happens on every trial so the stream never shifts
    const double u_up = uniform01(rng), u_up_reason = uniform01(rng);
    const double u_self = uniform01(rng), u_self_reason = uniform01(rng);

    Lease lease = g.next_input(0, agent_id, now);
    if (u_up < cfg.flags.upstream) {
      g.submit_recording(lease, "", now, std::string(upstream_reason(u_up_reason)));
      continue;
    }
    const ListenerAgent& agent = agents[static_cast<std::size_t>(agent_id)];
    Utterance heard = agent.noise->vocabulary().encode(g.node(lease.node).transcription);
    Utterance said = step_chain(agent, heard, seed);
    std::optional<std::string> self;
    if (u_self < cfg.flags.self) self = upstream_reason(u_self_reason);
    g.submit_recording(lease, said.text, now, std::nullopt, self, seed);
  }

  std::vector<ChainLogRow> rows;
  for (const auto& n : g.nodes()) {
    rows.push_back({chain_id, n.generation, n.listener, n.speaker, n.transcription, n.state, n.flag_reason, n.seed});
  }
  return rows;
}

void validate_run(const ChainConfig& cfg, const std::vector<Utterance>& stimuli,
                  const std::vector<ListenerAgent>& agents) {
  if (cfg.generations < 1) throw std::invalid_argument("generations must be >= 1");
  if (cfg.max_trials < 0) throw std::invalid_argument("max_trials must be >= 0");
  if (stimuli.empty()) throw std::invalid_argument("no stimuli");
  if (agents.empty()) throw std::invalid_argument("no listener agents");
  for (const auto& a : agents) {
    if (!a.prior || !a.noise) throw std::invalid_argument("listener agent without prior or noise model");
  }
  cfg.filters.validate();
  cfg.flags.validate();
}

}  // namespace

ChainLog run_chains_serial(const ChainConfig& cfg, const std::vector<Utterance>& stimuli,
                           const std::vector<ListenerAgent>& agents) {
  validate_run(cfg, stimuli, agents);
  ChainLog log;
  for (std::size_t c = 0; c < stimuli.size(); ++c) {
    auto rows = run_one_chain(cfg, c, stimuli[c], agents);
    log.rows.insert(log.rows.end(), rows.begin(), rows.end());
  }
  return log;
}

ChainLog run_chains(const ChainConfig& cfg, const std::vector<Utterance>& stimuli,
                    const std::vector<ListenerAgent>& agents) {
  validate_run(cfg, stimuli, agents);
  const long long n = static_cast<long long>(stimuli.size());
  std::vector<std::vector<ChainLogRow>> per(stimuli.size());
  std::vector<std::exception_ptr> errors(stimuli.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long long c = 0; c < n; ++c) {
    auto i = static_cast<std::size_t>(c);
    try {
      per[i] = run_one_chain(cfg, i, stimuli[i], agents);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  ChainLog log;
  for (auto& rows : per) log.rows.insert(log.rows.end(), rows.begin(), rows.end());
  return log;
}

// ---------------------------------------------------------------------------
// Log

const std::vector<std::string> kChainLogColumns = {"chain_id",      "generation", "listener_id", "speaker_id",
                                                   "transcription", "state",      "flag_reason", "seed"};

std::vector<std::vector<std::string>> ChainLog::accepted_chains() const {
  std::map<std::size_t, std::vector<std::pair<int, std::string>>> by_chain;
  for (const auto& r : rows) {
    if (r.state == NodeState::protected_stimulus || r.state == NodeState::accepted) {
      by_chain[r.chain_id].push_back({r.generation, r.transcription});
    }
  }
  std::vector<std::vector<std::string>> out;
  for (auto& [id, v] : by_chain) {
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> texts;
    for (auto& [gen, t] : v) texts.push_back(t);
    out.push_back(std::move(texts));
  }
  return out;
}

bool ChainLog::gap_free() const {
  std::map<std::size_t, std::vector<int>> gens;
  for (const auto& r : rows) {
    if (r.state == NodeState::protected_stimulus || r.state == NodeState::accepted) gens[r.chain_id].push_back(r.generation);
  }
  for (auto& [id, g] : gens) {
    std::sort(g.begin(), g.end());
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] != static_cast<int>(i)) return false;
    }
  }
  return true;
}

void ChainLog::write_csv(std::ostream& out) const {
  write_csv_row(out, kChainLogColumns);
  for (const auto& r : rows) {
    write_csv_row(out, {std::to_string(r.chain_id), std::to_string(r.generation), std::to_string(r.listener_id),
                        std::to_string(r.speaker_id), r.transcription, to_string(r.state), r.flag_reason,
                        std::to_string(r.seed)});
  }
}

std::string ChainLog::csv() const {
  std::ostringstream ss;
  write_csv(ss);
  return ss.str();
}

ChainLog ChainLog::read_csv(std::istream& in) {
  CsvTable t = telephone::read_csv(in);
  std::vector<std::size_t> col;
  for (const auto& name : kChainLogColumns) col.push_back(t.column(name));
  ChainLog log;
  for (const auto& row : t.rows) {
    ChainLogRow r;
    r.chain_id = std::stoull(row[col[0]]);
    r.generation = std::stoi(row[col[1]]);
    r.listener_id = std::stoi(row[col[2]]);
    r.speaker_id = std::stoi(row[col[3]]);
    r.transcription = row[col[4]];
    r.state = parse_node_state(row[col[5]]);
    r.flag_reason = row[col[6]];
    r.seed = std::stoull(row[col[7]]);
    log.rows.push_back(std::move(r));
  }
  return log;
}

nlohmann::json ChainLog::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"chain_id", r.chain_id},
                   {"generation", r.generation},
                   {"listener_id", r.listener_id},
                   {"speaker_id", r.speaker_id},
                   {"transcription", r.transcription},
                   {"state", to_string(r.state)},
                   {"flag_reason", r.flag_reason},
                   {"seed", r.seed}});
  }
  return {{"rows", arr}};
}

ChainLog ChainLog::from_json(const nlohmann::json& j) {
  ChainLog log;
  for (const auto& x : j.at("rows")) {
    ChainLogRow r;
    r.chain_id = x.at("chain_id").get<std::size_t>();
    r.generation = x.at("generation").get<int>();
    r.listener_id = x.at("listener_id").get<int>();
    r.speaker_id = x.at("speaker_id").get<int>();
    r.transcription = x.at("transcription").get<std::string>();
    r.state = parse_node_state(x.at("state").get<std::string>());
    r.flag_reason = x.at("flag_reason").get<std::string>();
    r.seed = x.at("seed").get<std::uint64_t>();
    log.rows.push_back(std::move(r));
  }
  return log;
}

}  // namespace telephone
