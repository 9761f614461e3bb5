#include "telephone/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "telephone/alignment.hpp"
#include "telephone/analysis.hpp"
#include "telephone/chain_engine.hpp"
#include "telephone/io.hpp"
#include "telephone/ngram_lm.hpp"
#include "telephone/noisy_channel.hpp"
#include "telephone/pcfg_lm.hpp"
#include "telephone/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace telephone {

namespace {

const std::map<std::string, std::string> kDefaults = {
    {"corpus", "data/fixture_corpus.txt"},
    {"treebank", "data/fixture_treebank.txt"},
    {"norms", "data/fixture_norms.csv"},
    {"out", "out"},
    {"stimuli_file", ""},  // empty: <out>/stimuli.csv
    {"models", "unigram,bigram,trigram,pcfg"},
    {"smoothing", "modified_kneser_ney"},
    {"unigram_smoothing", "mle_oov"},
    {"oov_mass", "0.01"},
    {"max_types", "0"},
    {"heldout_fraction", "0.1"},
    {"pcfg_top_k", "50"},
    {"pcfg_unknown", "singleton"},
    {"stimuli", "40"},
    {"stimulus_words", "0"},
    {"stimulus_chars", "0"},
    {"prior", "pcfg"},
    {"listener", "map"},
    {"agents", "20"},
    {"lambda", "8"},
    {"p_delete", "0.03"},
    {"p_insert", "0.01"},
    {"insert_top_n", "10"},
    {"beam_width", "4"},
    {"max_candidates", "256"},
    {"generations", "25"},
    {"max_trials", "0"},
    {"flag_upstream", "0.153"},
    {"flag_self", "0"},
    {"char_ratio", "0.2"},
    {"word_delta", "2"},
    {"similarity_threshold", "0.58"},
    {"max_words", "0"},
    {"regression_l2", "0"},
    {"group_l2", "1"},
    {"seed", "1"},
};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T x{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
  return x;
}

int ngram_order(const std::string& id) {
  static const std::map<std::string, int> orders = {
      {"unigram", 1}, {"bigram", 2}, {"trigram", 3}, {"fourgram", 4}, {"fivegram", 5}};
  auto it = orders.find(id);
  return it == orders.end() ? 0 : it->second;
}

fs::path out_dir(const RunConfig& cfg) { return cfg.get("out"); }
fs::path model_dir(const RunConfig& cfg) { return out_dir(cfg) / "models"; }

fs::path model_path(const RunConfig& cfg, const std::string& id) {
  return model_dir(cfg) / (id == "pcfg" ? "pcfg.grammar" : id + ".arpa");
}

fs::path stimuli_path(const RunConfig& cfg) {
  return cfg.get("stimuli_file").empty() ? out_dir(cfg) / "stimuli.csv" : fs::path(cfg.get("stimuli_file"));
}

void require_file(const std::string& key, const fs::path& p) {
  if (!fs::is_regular_file(p)) throw ConfigError(key + ": no such file: " + p.string());
}

// writes and records the digest under its path relative to out
void emit(const RunConfig& cfg, Digests& d, const fs::path& path, const std::string& content) {
  write_file_atomic(path.string(), content);
  d[fs::relative(path, out_dir(cfg)).generic_string()] = digest_hex(content);
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(const std::vector<T>& all, double heldout, std::uint64_t seed) {
  auto idx = shuffled(all.size(), seed);
  auto n_held = static_cast<std::size_t>(std::llround(heldout * static_cast<double>(all.size())));
  std::vector<std::size_t> held(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_held));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_held), idx.end());
  std::sort(held.begin(), held.end());
  std::sort(train.begin(), train.end());
  std::pair<std::vector<T>, std::vector<T>> out;
  for (auto i : train) out.first.push_back(all[i]);
  for (auto i : held) out.second.push_back(all[i]);
  return out;
}

json heldout_summary(const LanguageModel& m, const std::vector<std::vector<std::string>>& sentences) {
  double bits = 0;
  std::size_t words = 0, excluded = 0;
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    double lp = m.sentence_logprob(s);
    if (!std::isfinite(lp)) {
      ++excluded;
      continue;
    }
    bits -= lp;
    words += s.size();
  }
  json j;
  j["heldout_sentences"] = sentences.size();
  j["heldout_words"] = words;
  j["heldout_excluded"] = excluded;
  j["bits_per_word"] = words ? bits / static_cast<double>(words) : std::nan("");
  return j;
}

struct Models {
  std::vector<std::string> ids;
  std::map<std::string, std::shared_ptr<const LanguageModel>> by_id;
  const LanguageModel& at(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError("models: '" + id + "' is required here");
    return *it->second;
  }
};

Models load_models(const RunConfig& cfg) {
  Models m;
  for (const auto& id : cfg.get_list("models")) {
    auto p = model_path(cfg, id);
    if (!fs::is_regular_file(p)) throw ConfigError("models: " + p.string() + " is missing; run train first");
    if (id == "pcfg") {
      auto g = std::make_shared<const Pcfg>(read_grammar_file(p.string()));
      m.by_id[id] = std::make_shared<PcfgModel>(g, cfg.get_int("pcfg_top_k"));
    } else {
      m.by_id[id] = std::make_shared<NGramModel>(read_arpa_file(p.string()));
    }
    m.ids.push_back(id);
  }
  return m;
}

std::shared_ptr<const Vocabulary> load_vocab(const RunConfig& cfg) {
  auto p = model_dir(cfg) / "vocab.tsv";
  if (!fs::is_regular_file(p)) throw ConfigError("models: " + p.string() + " is missing; run train first");
  std::ifstream in(p);
  return std::make_shared<const Vocabulary>(Vocabulary::read(in));
}

struct StimulusMeta {
  std::vector<std::string> text;
  std::vector<int> structure, dataset;
};

StimulusMeta load_stimuli(const RunConfig& cfg) {
  auto p = stimuli_path(cfg);
  require_file("stimuli_file", p);
  auto t = read_csv_file(p.string());
  StimulusMeta s;
  const auto tc = t.column("text");
  auto optional_col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - t.header.begin());
  };
  auto sc = optional_col("abstract_structure"), dc = optional_col("dataset");
  for (const auto& r : t.rows) {
    s.text.push_back(r.at(tc));
    s.structure.push_back(sc ? parse_number<int>("abstract_structure", r.at(*sc)) : 0);
    s.dataset.push_back(dc ? parse_number<int>("dataset", r.at(*dc)) : 0);
  }
  if (s.text.empty()) throw ConfigError("stimuli_file: no stimuli in " + p.string());
  return s;
}

ChainLog load_log(const std::string& path) {
  require_file("log", path);
  std::ifstream in(path);
  return ChainLog::read_csv(in);
}

std::string fmt(double x) { return std::isfinite(x) ? format_double(x) : (std::isnan(x) ? "nan" : x > 0 ? "inf" : "-inf"); }

json number(double x) { return std::isfinite(x) ? json(x) : json(fmt(x)); }

}  // namespace

const std::vector<std::string> kPathKeys = {"corpus", "treebank", "norms", "out", "stimuli_file"};

// ---------------------------------------------------------------------------
// RunConfig

RunConfig::RunConfig() : values_(kDefaults) {}

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(n) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  require_file("config", path);
  auto cfg = parse(read_file(path), path);
  cfg.resolve_paths(fs::absolute(path).parent_path().string());
  return cfg;
}

std::string RunConfig::serialize() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
  return s;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!kDefaults.count(key)) throw ConfigError("unknown config key: " + key);
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

double RunConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  if (v == "inf") return std::numeric_limits<double>::infinity();
  return parse_number<double>(key, v);
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void RunConfig::resolve_paths(const std::string& base) {
  for (const auto& k : kPathKeys) {
    auto& v = values_[k];
    if (!v.empty() && fs::path(v).is_relative()) v = (fs::path(base) / v).lexically_normal().string();
  }
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + ": " + what);
  };
  for (const auto& [k, v] : values_) {
    (void)v;
    if (k == "models" || k == "smoothing" || k == "unigram_smoothing" || k == "prior" || k == "listener" || k == "pcfg_unknown") continue;
    if (std::find(kPathKeys.begin(), kPathKeys.end(), k) != kPathKeys.end()) continue;
    if (k == "seed") {
      get_u64(k);
    } else {
      get_double(k);
    }
  }
  auto models = get_list("models");
  check(!models.empty(), "models", "at least one model is needed");
  std::set<std::string> seen;
  for (const auto& m : models) {
    check(m == "pcfg" || ngram_order(m) > 0, "models", "unknown model '" + m + "'");
    check(seen.insert(m).second, "models", "'" + m + "' listed twice");
  }
  check(seen.count(get("prior")) > 0, "prior", "must be one of the listed models");
  try {
    parse_smoothing(get("smoothing"));
    parse_smoothing(get("unigram_smoothing"));
    parse_decision_rule(get("listener"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("smoothing/listener: ") + e.what());
  }
  check(get("pcfg_unknown") == "singleton" || get("pcfg_unknown") == "none", "pcfg_unknown", "singleton or none");
  check(get_int("stimuli") >= 2 && get_int("stimuli") % 2 == 0, "stimuli", "must be an even number >= 2");
  check(get_int("generations") >= 1, "generations", "must be >= 1");
  check(get_int("max_trials") >= 0, "max_trials", "must be >= 0");
  check(get_int("agents") >= 1, "agents", "must be >= 1");
  check(get_double("lambda") > 0, "lambda", "must be positive");
  for (const char* k : {"p_delete", "p_insert", "flag_upstream", "flag_self"}) {
    check(get_double(k) >= 0 && get_double(k) <= 1, k, "must be in [0, 1]");
  }
  check(get_double("p_delete") < 1, "p_delete", "must be below 1");
  check(get_double("heldout_fraction") >= 0 && get_double("heldout_fraction") < 1, "heldout_fraction",
        "must be in [0, 1)");
  check(get_int("beam_width") >= 1, "beam_width", "must be >= 1");
  check(get_int("max_candidates") >= 1, "max_candidates", "must be >= 1");
  check(get_int("insert_top_n") >= 0, "insert_top_n", "must be >= 0");
  check(get_int("max_types") >= 0, "max_types", "must be >= 0");
  check(get_double("oov_mass") >= 0 && get_double("oov_mass") < 1, "oov_mass", "must be in [0, 1)");
  check(get_double("regression_l2") >= 0, "regression_l2", "must be >= 0");
  check(get_double("group_l2") > 0, "group_l2", "must be positive");
  FilterConfig f{get_double("char_ratio"), get_int("word_delta"), get_double("similarity_threshold"),
                 get_int("max_words")};
  try {
    f.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("filters: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Commands

Digests cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  Digests d;
  const auto seed = cfg.get_u64("seed");
  const double heldout = cfg.get_double("heldout_fraction");
  const auto ids = cfg.get_list("models");
  json summary;

  const bool any_ngram = std::any_of(ids.begin(), ids.end(), [](const std::string& id) { return id != "pcfg"; });
  if (any_ngram) {
    require_file("corpus", cfg.get("corpus"));
    auto corpus = read_corpus_file(cfg.get("corpus"));
    if (corpus.empty()) throw ConfigError("corpus: no sentences in " + cfg.get("corpus"));
    auto max_types = static_cast<std::size_t>(cfg.get_int("max_types"));
    auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(corpus, max_types ? max_types : SIZE_MAX));
    std::ostringstream vs;
    vocab->write(vs);
    emit(cfg, d, model_dir(cfg) / "vocab.tsv", vs.str());
    auto [train, held] = split(corpus, heldout, derive_seed(seed, {1}));
    log << "corpus: " << corpus.size() << " sentences, " << train.size() << " train, " << held.size()
        << " held out, " << vocab->size() << " types\n";
    for (const auto& id : ids) {
      if (id == "pcfg") continue;
      const int order = ngram_order(id);
      NGramOptions o{order, parse_smoothing(cfg.get(order == 1 ? "unigram_smoothing" : "smoothing")),
                     cfg.get_double("oov_mass")};
      auto m = fit_ngram(train, vocab, o);
      std::ostringstream os;
      write_arpa(m, os);
      emit(cfg, d, model_path(cfg, id), os.str());
      summary[id] = heldout_summary(m, held);
      summary[id]["file"] = fs::relative(model_path(cfg, id), out_dir(cfg)).generic_string();
    }
  }
  if (std::find(ids.begin(), ids.end(), "pcfg") != ids.end()) {
    require_file("treebank", cfg.get("treebank"));
    auto tb = read_treebank_file(cfg.get("treebank"));
    if (tb.sentences.empty()) throw ConfigError("treebank: no trees in " + cfg.get("treebank"));
    auto [train, held] = split(tb.sentences, heldout, derive_seed(seed, {2}));
    auto g = fit_pcfg({train});
    if (cfg.get("pcfg_unknown") == "none") g = Pcfg::from_rules(g.root(), g.rules());
    std::ostringstream os;
    write_grammar(g, os);
    emit(cfg, d, model_path(cfg, "pcfg"), os.str());
    std::vector<std::vector<std::string>> held_words;
    for (const auto& t : held) held_words.push_back(tree_yield(t));
    PcfgModel m(std::make_shared<const Pcfg>(std::move(g)), cfg.get_int("pcfg_top_k"));
    summary["pcfg"] = heldout_summary(m, held_words);
    summary["pcfg"]["file"] = fs::relative(model_path(cfg, "pcfg"), out_dir(cfg)).generic_string();
    log << "treebank: " << tb.sentences.size() << " trees, " << train.size() << " train\n";
  }
  for (const auto& id : ids) {
    const auto& s = summary[id];
    log << std::left << std::setw(10) << id << " held-out bits/word "
        << (s["bits_per_word"].is_number() ? fmt(s["bits_per_word"].get<double>()) : "n/a") << "  ("
        << s["heldout_words"].get<std::size_t>() << " words, " << s["heldout_excluded"].get<std::size_t>()
        << " sentences unscored)\n";
  }
  emit(cfg, d, out_dir(cfg) / "train_summary.json", summary.dump(2) + "\n");
  return d;
}

Digests cmd_select_stimuli(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  require_file("corpus", cfg.get("corpus"));
  auto models = load_models(cfg);
  auto corpus = read_corpus_file(cfg.get("corpus"));
  SelectOptions o;
  o.tranches = cfg.get_int("stimuli") / 2;
  o.words = cfg.get_int("stimulus_words");
  o.chars = cfg.get_int("stimulus_chars");
  o.seed = derive_seed(cfg.get_u64("seed"), {3});
  auto sel = select_stimuli(corpus, models.at("unigram"), models.at("trigram"), o);

  std::ostringstream os;
  write_csv_row(os, {"text", "model", "tranche", "unigram_logprob", "trigram_logprob", "unigram_tranche",
                     "trigram_tranche", "abstract_structure", "dataset"});
  for (const auto& c : sel.chosen) {
    write_csv_row(os, {c.text, c.model, std::to_string(c.tranche), fmt(c.unigram_logprob), fmt(c.trigram_logprob),
                       std::to_string(c.unigram_tranche), std::to_string(c.trigram_tranche), "0",
                       c.model == "unigram" ? "0" : "1"});
  }
  Digests d;
  emit(cfg, d, stimuli_path(cfg), os.str());
  log << "cohort: " << sel.cohort_size << " sentences of " << sel.words << " words"
      << (sel.chars > 0 ? ", " + std::to_string(sel.chars) + " characters" : std::string()) << "\n"
      << "chose " << sel.chosen.size() << " stimuli";
  if (!sel.empty_tranches.empty()) {
    log << "; empty tranches:";
    for (const auto& t : sel.empty_tranches) log << ' ' << t;
  }
  log << "\n";
  return d;
}

Digests cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  auto stimuli = load_stimuli(cfg);
  auto vocab = load_vocab(cfg);
  RunConfig only_prior = cfg;
  only_prior.set("models", cfg.get("prior"));
  auto prior = load_models(only_prior).by_id.at(cfg.get("prior"));

  NoiseParams np{cfg.get_double("lambda"), cfg.get_double("p_delete"), cfg.get_double("p_insert"),
                 cfg.get_int("insert_top_n")};
  auto noise = std::make_shared<const NoiseModel>(vocab, np);
  ListenerAgent agent;
  agent.prior = prior;
  agent.noise = noise;
  agent.mode = parse_decision_rule(cfg.get("listener"));
  agent.candidates = {cfg.get_int("beam_width"), cfg.get_int("max_candidates")};
  std::vector<ListenerAgent> agents(static_cast<std::size_t>(cfg.get_int("agents")), agent);

  ChainConfig cc;
  cc.generations = cfg.get_int("generations");
  cc.max_trials = cfg.get_int("max_trials");
  cc.filters = {cfg.get_double("char_ratio"), cfg.get_int("word_delta"), cfg.get_double("similarity_threshold"),
                cfg.get_int("max_words")};
  cc.flags = {cfg.get_double("flag_upstream"), cfg.get_double("flag_self")};
  cc.seed = cfg.get_u64("seed");
  std::vector<Utterance> utts;
  for (const auto& t : stimuli.text) utts.push_back(vocab->encode(t));
  auto chains = run_chains(cc, utts, agents);

  Digests d;
  emit(cfg, d, out_dir(cfg) / "chains.csv", chains.csv());
  emit(cfg, d, out_dir(cfg) / "chains.json", chains.to_json().dump(1) + "\n");
  write_file_atomic((out_dir(cfg) / "run.cfg").string(), cfg.serialize());

  std::map<std::string, std::size_t> states;
  for (const auto& r : chains.rows) ++states[to_string(r.state)];
  auto acc = chains.accepted_chains();
  std::size_t complete = 0;
  for (const auto& c : acc) complete += c.size() == static_cast<std::size_t>(cc.generations) + 1;
  log << "chains: " << acc.size() << " (" << complete << " reached generation " << cc.generations << "), "
      << chains.rows.size() << " recordings:";
  for (const auto& [s, n] : states) log << ' ' << s << '=' << n;
  log << "\n";
  return d;
}

Digests cmd_align(const RunConfig& cfg, const std::string& log_path, std::ostream& log) {
  auto chains = load_log(log_path);
  std::ostringstream al, wc;
  write_csv_row(al, {"chain_id", "generation", "op", "source_word", "target_word", "source_position"});
  write_csv_row(wc, {"chain_id", "generation", "listener_id", "speaker_id", "word", "position", "changed"});
  double wer_sum = 0;
  std::size_t n = 0, changed = 0, words = 0;
  for (const auto& t : transmissions(chains)) {
    auto script = align_texts(t.source, t.target);
    int pos = 0;
    for (const auto& s : script.steps) {
      write_csv_row(al, {std::to_string(t.meta.chain_id), std::to_string(t.meta.generation),
                         std::string(1, static_cast<char>(s.op)), s.source.value_or(""), s.target.value_or(""),
                         s.source ? std::to_string(++pos) : ""});
    }
    for (const auto& e : word_change_events(script, t.meta)) {
      write_csv_row(wc, {std::to_string(e.chain_id), std::to_string(e.generation), std::to_string(e.listener_id),
                         std::to_string(e.speaker_id), e.word, std::to_string(e.position), std::to_string(e.changed)});
      changed += static_cast<std::size_t>(e.changed);
      ++words;
    }
    if (script.source_length() > 0) {
      wer_sum += wer(script);
      ++n;
    }
  }
  Digests d;
  emit(cfg, d, out_dir(cfg) / "alignments.csv", al.str());
  emit(cfg, d, out_dir(cfg) / "word_changes.csv", wc.str());
  log << "transmissions: " << n << ", mean WER " << fmt(n ? wer_sum / static_cast<double>(n) : 0.0)
      << ", words changed " << changed << "/" << words << "\n";
  return d;
}

Digests cmd_analyze(const RunConfig& cfg, const std::string& log_path, std::ostream& log) {
  cfg.validate();
  auto chains = load_log(log_path);
  auto models = load_models(cfg);
  auto accepted = chains.accepted_chains();
  const fs::path dir = out_dir(cfg) / "analysis";
  Digests d;
  json summary;

  // trajectories and convergence
  std::ostringstream traj, conv;
  write_csv_row(traj, {"model", "generation", "mean", "se", "count"});
  write_csv_row(conv, {"model", "generation", "present", "q1_mean", "q2_mean", "q3_mean", "q4_mean", "variance",
                       "ratio"});
  for (const auto& id : models.ids) {
    const auto& m = models.at(id);
    for (const auto& p : surprisal_trajectory(accepted, m, id)) {
      write_csv_row(traj, {id, std::to_string(p.generation), fmt(p.mean), fmt(p.se), std::to_string(p.count)});
    }
    try {
      auto rep = convergence_report(accepted, m, id);
      for (const auto& p : rep) {
        write_csv_row(conv, {id, std::to_string(p.generation), p.present ? "1" : "0", fmt(p.group_means[0]),
                             fmt(p.group_means[1]), fmt(p.group_means[2]), fmt(p.group_means[3]), fmt(p.variance),
                             p.present ? fmt(p.ratio) : ""});
      }
      const ConvergencePoint* last = nullptr;
      for (const auto& p : rep) {
        if (p.present) last = &p;
      }
      summary["convergence"][id] = {{"last_generation", last->generation}, {"ratio", number(last->ratio)}};
      auto st = surprisal_sign_test(chain_surprisals(accepted, m), 1, last->generation);
      summary["slope"][id] = {{"from", st.from},           {"to", st.to},
                              {"decreases", st.decreases}, {"increases", st.increases},
                              {"ties", st.ties},           {"p_value", number(st.p_value)}};
    } catch (const std::exception& e) {
      summary["convergence"][id] = {{"error", e.what()}};
    }
  }
  emit(cfg, d, dir / "trajectories.csv", traj.str());
  emit(cfg, d, dir / "convergence.csv", conv.str());

  // word-change regression
  std::unordered_map<std::string, WordNorms> norms;
  if (!cfg.get("norms").empty()) {
    require_file("norms", cfg.get("norms"));
    try {
      norms = read_norms(read_csv_file(cfg.get("norms")));
    } catch (const std::runtime_error& e) {
      throw ConfigError(std::string("norms: ") + e.what());
    }
  }
  std::vector<NamedModel> ordered = {{"unigram", models.by_id.count("unigram") ? models.by_id.at("unigram") : nullptr},
                                     {"trigram", models.by_id.count("trigram") ? models.by_id.at("trigram") : nullptr}};
  if (!ordered[0].model || !ordered[1].model) throw ConfigError("models: analyze needs unigram and trigram");
  for (const auto& id : models.ids) {
    if (id != "unigram" && id != "trigram") ordered.push_back({id, models.by_id.at(id)});
  }
  json regression;
  std::ostringstream auc;
  write_csv_row(auc, {"model", "terms", "n", "log_likelihood", "aic", "auc"});
  try {
    auto table = build_predictors(chains, ordered, norms);
    regression["rows"] = table.records.size();
    regression["dropped_missing_norms"] = table.dropped_missing_norms;
    regression["dropped_infinite"] = table.dropped_infinite;
    regression["changed"] = table.y.sum();
    LogisticOptions lo;
    lo.l2 = cfg.get_double("regression_l2");
    lo.group_l2 = cfg.get_double("group_l2");
    lo.listener_intercepts = lo.speaker_intercepts = true;
    // nested fits: position and norms, then one surprisal column at a time
    const std::size_t n_surprisal = ordered.size();
    std::vector<Eigen::Index> base;
    for (std::size_t k = n_surprisal; k < table.columns.size(); ++k) base.push_back(static_cast<Eigen::Index>(k));
    for (std::size_t step = 0; step <= n_surprisal; ++step) {
      std::vector<Eigen::Index> cols = base;
      for (std::size_t k = 0; k < step; ++k) cols.push_back(static_cast<Eigen::Index>(k));
      std::string name = step == 0 ? "baseline" : "+" + ordered[step - 1].id;
      Eigen::MatrixXd x(table.x.rows(), static_cast<Eigen::Index>(cols.size()));
      std::vector<std::string> names;
      for (std::size_t k = 0; k < cols.size(); ++k) {
        x.col(static_cast<Eigen::Index>(k)) = table.x.col(cols[k]);
        names.push_back(table.columns[static_cast<std::size_t>(cols[k])]);
      }
      json fit;
      try {
        auto m = fit_logistic(x, names, table.y, table.listener, table.speaker, lo);
        auto p = m.predict(x, table.listener, table.speaker);
        std::vector<int> labels;
        for (Eigen::Index i = 0; i < table.y.size(); ++i) labels.push_back(static_cast<int>(table.y[i]));
        double a = roc_auc({p.data(), p.data() + p.size()}, labels);
        for (std::size_t k = 0; k < m.terms.size(); ++k) {
          auto ik = static_cast<Eigen::Index>(k);
          fit["coefficients"][m.terms[k]] = {{"beta", number(m.beta[ik])}, {"se", number(m.se[ik])},
                                             {"z", number(m.z[ik])}};
        }
        fit["log_likelihood"] = m.log_likelihood;
        fit["aic"] = m.aic;
        fit["k"] = m.k;
        fit["iterations"] = m.iterations;
        fit["auc"] = a;
        write_csv_row(auc, {name, std::to_string(names.size()), std::to_string(table.y.size()), fmt(m.log_likelihood),
                            fmt(m.aic), fmt(a)});
      } catch (const std::exception& e) {
        fit["error"] = e.what();
        write_csv_row(auc, {name, std::to_string(names.size()), std::to_string(table.y.size()), "", "", ""});
      }
      regression["logistic"][name] = fit;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    regression["error"] = e.what();
  }

  // surprisal on generation, per model
  for (const auto& id : models.ids) {
    StimulusMeta meta;
    try {
      meta = load_stimuli(cfg);
    } catch (const ConfigError&) {
    }
    std::vector<SurprisalRecord> rows;
    auto s = chain_surprisals(accepted, models.at(id));
    for (std::size_t c = 0; c < s.size(); ++c) {
      for (std::size_t g = 0; g < s[c].size(); ++g) {
        if (!std::isfinite(s[c][g])) continue;
        int st = c < meta.structure.size() ? meta.structure[c] : 0;
        int ds = c < meta.dataset.size() ? meta.dataset[c] : 0;
        rows.push_back({c, static_cast<int>(g), id, s[c][g], st, ds});
      }
    }
    json fit;
    try {
      auto lm = fit_linear_fe(rows, true);
      for (std::size_t k = 0; k < lm.terms.size(); ++k) {
        auto ik = static_cast<Eigen::Index>(k);
        fit["coefficients"][lm.terms[k]] = {{"beta", number(lm.beta[ik])}, {"se", number(lm.se[ik])}};
      }
      fit["n"] = lm.n;
      fit["aic"] = number(lm.aic);
      fit["sigma2"] = number(lm.sigma2);
    } catch (const std::exception& e) {
      fit["error"] = e.what();
    }
    regression["linear"][id] = fit;
  }
  emit(cfg, d, dir / "regression.json", regression.dump(2) + "\n");
  emit(cfg, d, dir / "auc.csv", auc.str());

  // model similarity over every distinct accepted utterance
  std::set<std::string> texts;
  for (const auto& c : accepted) texts.insert(c.begin(), c.end());
  std::map<std::string, std::vector<double>> per_model;
  for (const auto& id : models.ids) per_model[id];
  for (const auto& t : texts) {
    auto w = tokenize(t);
    if (w.empty()) continue;
    std::vector<double> v;
    for (const auto& id : models.ids) v.push_back(models.at(id).sentence_logprob(w));
    if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) continue;
    for (std::size_t k = 0; k < v.size(); ++k) per_model[models.ids[k]].push_back(v[k]);
  }
  std::ostringstream sim, den;
  try {
    auto sm = spearman_matrix(per_model);
    std::vector<std::string> head = {"model"};
    head.insert(head.end(), sm.names.begin(), sm.names.end());
    write_csv_row(sim, head);
    for (Eigen::Index i = 0; i < sm.rho.rows(); ++i) {
      std::vector<std::string> row = {sm.names[static_cast<std::size_t>(i)]};
      for (Eigen::Index j = 0; j < sm.rho.cols(); ++j) row.push_back(fmt(sm.rho(i, j)));
      write_csv_row(sim, row);
    }
    Eigen::MatrixXd dis = Eigen::MatrixXd::Ones(sm.rho.rows(), sm.rho.cols()) - sm.rho;
    dis.diagonal().setZero();
    auto dg = ward_dendrogram(dis);
    write_csv_row(den, {"step", "a", "b", "height", "size"});
    for (std::size_t k = 0; k < dg.merges.size(); ++k) {
      const auto& m = dg.merges[k];
      write_csv_row(den, {std::to_string(k), std::to_string(m.a), std::to_string(m.b), fmt(m.height),
                          std::to_string(m.size)});
    }
    for (int leaf : dg.leaf_order) summary["leaf_order"].push_back(sm.names[static_cast<std::size_t>(leaf)]);
    summary["similarity_sentences"] = per_model.begin()->second.size();
  } catch (const std::exception& e) {
    summary["similarity_error"] = e.what();
  }
  emit(cfg, d, dir / "similarity.csv", sim.str());
  emit(cfg, d, dir / "dendrogram.csv", den.str());
  summary["chains"] = accepted.size();
  emit(cfg, d, dir / "summary.json", summary.dump(2) + "\n");

  log << "analysis: " << accepted.size() << " chains, " << models.ids.size() << " models\n";
  for (const auto& [id, c] : summary["convergence"].items()) {
    if (c.contains("ratio")) log << "  " << id << " variance ratio at generation " << c["last_generation"] << ": " << c["ratio"] << "\n";
  }
  return d;
}

Digests cmd_report(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = out_dir(cfg) / "analysis";
  for (const char* f : {"summary.json", "trajectories.csv", "auc.csv", "similarity.csv"}) {
    require_file("out", dir / f);
  }
  auto summary = json::parse(read_file((dir / "summary.json").string()));
  std::ostringstream md;
  md << "# Serial reproduction report\n\n";
  md << "Chains: " << summary.value("chains", 0) << "\n\n";

  md << "## Convergence (inter-quartile variance ratio)\n\n| model | generation | ratio |\n|---|---|---|\n";
  for (const auto& [id, c] : summary["convergence"].items()) {
    if (c.contains("error")) {
      md << "| " << id << " | | " << c["error"].get<std::string>() << " |\n";
    } else {
      md << "| " << id << " | " << c["last_generation"] << " | " << c["ratio"].dump() << " |\n";
    }
  }

  md << "\n## Average per-word surprisal\n\n| model | first generation | last generation |\n|---|---|---|\n";
  auto traj = read_csv_file((dir / "trajectories.csv").string());
  std::map<std::string, std::pair<std::string, std::string>> ends;
  const auto mc = traj.column("model"), gc = traj.column("generation"), vc = traj.column("mean");
  for (const auto& r : traj.rows) {
    auto& e = ends[r[mc]];
    if (e.first.empty()) e.first = "g" + r[gc] + ": " + r[vc];
    e.second = "g" + r[gc] + ": " + r[vc];
  }
  for (const auto& [id, e] : ends) md << "| " << id << " | " << e.first << " | " << e.second << " |\n";

  md << "\n## Word-change models\n\n| model | terms | AIC | AUC |\n|---|---|---|---|\n";
  auto auc = read_csv_file((dir / "auc.csv").string());
  for (const auto& r : auc.rows) {
    md << "| " << r[auc.column("model")] << " | " << r[auc.column("terms")] << " | " << r[auc.column("aic")] << " | "
       << r[auc.column("auc")] << " |\n";
  }

  md << "\n## Model similarity (Spearman)\n\n";
  auto sim = read_csv_file((dir / "similarity.csv").string());
  if (!sim.header.empty()) {
    md << "|";
    for (const auto& h : sim.header) md << ' ' << h << " |";
    md << "\n|";
    for (std::size_t k = 0; k < sim.header.size(); ++k) md << "---|";
    md << "\n";
    for (const auto& r : sim.rows) {
      md << "|";
      for (const auto& c : r) md << ' ' << c << " |";
      md << "\n";
    }
  }
  if (summary.contains("leaf_order")) {
    md << "\nWard leaf order:";
    for (const auto& l : summary["leaf_order"]) md << ' ' << l.get<std::string>();
    md << "\n";
  }

  Digests d;
  emit(cfg, d, out_dir(cfg) / "report.md", md.str());
  // digests of everything under out, report included
  std::vector<std::string> lines;
  for (const auto& e : fs::recursive_directory_iterator(out_dir(cfg))) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), out_dir(cfg)).generic_string();
    if (rel == "digests.txt" || rel.ends_with(".tmp")) continue;
    lines.push_back(digest_hex(read_file(e.path().string())) + "  " + rel);
  }
  std::sort(lines.begin(), lines.end(), [](const std::string& a, const std::string& b) { return a.substr(18) < b.substr(18); });
  std::string all;
  for (const auto& l : lines) all += l + "\n";
  emit(cfg, d, out_dir(cfg) / "digests.txt", all);
  log << md.str();
  return d;
}

// ---------------------------------------------------------------------------
// Command line

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Serial reproduction simulations with probabilistic language models", "telephone"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_path, models, log_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> generations;
  std::vector<std::string> overrides, texts;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_path, "output directory");
  app.add_option("--model", models, "comma-separated model list");
  app.add_option("--generations", generations, "accepted generations per chain");
  app.add_option("--set", overrides, "key=value override (repeatable)");

  auto* train = app.add_subcommand("train", "fit the language models");
  auto* select = app.add_subcommand("select-stimuli", "choose stimuli stratified by prior probability");
  auto* simulate = app.add_subcommand("simulate", "run the transmission chains");
  auto* align_cmd = app.add_subcommand("align", "word alignments of a chain log, or of two texts");
  align_cmd->add_option("--log", log_path, "chain log CSV (default <out>/chains.csv)");
  align_cmd->add_option("texts", texts, "source and target text")->expected(0, 2);
  auto* analyze = app.add_subcommand("analyze", "convergence, regression and similarity reports");
  analyze->add_option("--log", log_path, "chain log CSV (default <out>/chains.csv)");
  auto* report = app.add_subcommand("report", "summarize the analysis and write digests");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    if (config_path.empty()) cfg.resolve_paths(fs::current_path().string());
    for (const auto& o : overrides) {
      auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
      cfg.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (!out_path.empty()) cfg.set("out", out_path);
    if (!models.empty()) cfg.set("models", models);
    if (generations) cfg.set("generations", std::to_string(*generations));
    cfg.resolve_paths(fs::current_path().string());
    cfg.validate();
    std::string log = log_path.empty() ? (out_dir(cfg) / "chains.csv").string() : log_path;

    Digests d;
    if (train->parsed()) d = cmd_train(cfg, out);
    if (select->parsed()) d = cmd_select_stimuli(cfg, out);
    if (simulate->parsed()) d = cmd_simulate(cfg, out);
    if (align_cmd->parsed()) {
      if (texts.size() == 2) {
        auto s = align_texts(texts[0], texts[1]);
        out << s.op_string() << "\n";
        if (s.source_length() > 0) out << "WER " << fmt(wer(s)) << "\n";
        return 0;
      }
      if (!texts.empty()) throw ConfigError("align takes a source and a target text");
      d = cmd_align(cfg, log, out);
    }
    if (analyze->parsed()) d = cmd_analyze(cfg, log, out);
    if (report->parsed()) d = cmd_report(cfg, out);
    for (const auto& [path, digest] : d) out << "digest " << digest << "  " << path << "\n";
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace telephone
