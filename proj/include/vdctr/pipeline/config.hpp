#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vdctr/ctr/model.hpp"
#include "vdctr/dataset/generator.hpp"
#include "vdctr/encoder/augment.hpp"
#include "vdctr/encoder/model.hpp"
#include "vdctr/encoder/training.hpp"
#include "vdctr/errors.hpp"
#include "vdctr/io/binary.hpp"

namespace vdctr::pipeline {

struct EvalConfig {
  std::vector<std::size_t> k_list{10, 100};
  std::int64_t low_impression_threshold = 5;
};

/// Everything one pipeline run reads. The root seed feeds every stage through
/// named sub-streams, so a run is reproducible from (config, seed).
struct PipelineConfig {
  std::uint64_t seed = 7;
  std::string out = "run";
  data::GeneratorConfig generator{};
  encoder::EncoderConfig encoder{};
  encoder::AugmentationConfig augmentation{};
  encoder::StageConfig classifier{};
  encoder::StageConfig s1{};
  encoder::StageConfig s2{};
  ctr::CtrConfig ctr{};
  EvalConfig eval{};

  PipelineConfig() {
    classifier.epochs = 20;
    s1.epochs = 20;
    s2.epochs = 1;
    s2.optimizer.learning_rate = 0.01;
    ctr.epochs = 3;
    ctr.debias.gate_bias = true;
    ctr.debias.gate_bias_init = 1.0;
  }

  /// Pushes the root seed into every component.
  void apply_seed(std::uint64_t s) {
    seed = s;
    generator.seed = s;
    classifier.seed = s;
    s1.seed = s;
    s2.seed = s;
    ctr.seed = s;
  }

  void validate() const {
    generator.validate();
    augmentation.validate();
    if (encoder.dim == 0) throw ConfigError("encoder.dim must be positive");
    if (!(encoder.temperature > 0.0) || !(ctr.debias.temperature > 0.0)) {
      throw ConfigError("temperatures must be positive");
    }
    for (const auto* st : {&classifier, &s1, &s2}) {
      if (st->epochs < 0 || st->batch_size == 0) throw ConfigError("stage epochs >= 0, batch_size > 0");
    }
    if (s2.negatives == 0) throw ConfigError("s2.negatives must be positive");
    if (ctr.epochs < 0 || ctr.batch_size < 2) throw ConfigError("ctr epochs >= 0, batch_size >= 2");
    if (ctr.top_k == 0) throw ConfigError("debias.top_k must be positive");
    if (ctr.lambda < 0.0) throw ConfigError("debias.lambda must be non-negative");
    if (eval.k_list.empty()) throw ConfigError("eval.k_list must not be empty");
    for (std::size_t k : eval.k_list) {
      if (k == 0 || static_cast<std::int64_t>(k) > generator.n_items) {
        throw ConfigError("eval.k_list entry " + std::to_string(k) + " outside [1, n_items]");
      }
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  if (!v.empty() && v[0] == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError(key + ": cannot parse '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::string parse_string(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') {
    throw ConfigError(key + ": expected a quoted string, got '" + v + "'");
  }
  return v.substr(1, v.size() - 2);
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw ConfigError(key + ": expected a list like [10, 100], got '" + v + "'");
  }
  std::vector<std::size_t> out;
  std::stringstream ss(v.substr(1, v.size() - 2));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(parse_number<std::size_t>(key, tok));
  }
  return out;
}

inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string format_list(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

struct Field {
  std::function<void(const std::string&, const std::string&)> set;
  std::function<std::string()> get;
};

// Binds "section.key" names to config members; the table drives both parsing
// and the resolved-config dump, so the two cannot drift apart.
class Binder {
 public:
  std::vector<std::string> order;
  std::map<std::string, Field> fields;

  void add(const std::string& name, Field f) {
    order.push_back(name);
    fields.emplace(name, std::move(f));
  }

  template <typename T>
  void integer(const std::string& name, T& ref) {
    add(name, {[&ref](const std::string& k, const std::string& v) { ref = parse_number<T>(k, v); },
               [&ref] { return std::to_string(ref); }});
  }
  void real(const std::string& name, double& ref) {
    add(name, {[&ref](const std::string& k, const std::string& v) { ref = parse_number<double>(k, v); },
               [&ref] { return format_double(ref); }});
  }
  void boolean(const std::string& name, bool& ref) {
    add(name, {[&ref](const std::string& k, const std::string& v) { ref = parse_bool(k, v); },
               [&ref] { return std::string(ref ? "true" : "false"); }});
  }
  void string(const std::string& name, std::string& ref) {
    add(name, {[&ref](const std::string& k, const std::string& v) { ref = parse_string(k, v); },
               [&ref] { return "\"" + ref + "\""; }});
  }
  void sizes(const std::string& name, std::vector<std::size_t>& ref) {
    add(name, {[&ref](const std::string& k, const std::string& v) { ref = parse_size_list(k, v); },
               [&ref] { return format_list(ref); }});
  }
};

inline void bind_stage(Binder& b, const std::string& sec, encoder::StageConfig& st) {
  b.integer(sec + ".epochs", st.epochs);
  b.integer(sec + ".batch_size", st.batch_size);
  b.real(sec + ".learning_rate", st.optimizer.learning_rate);
}

inline Binder bind(PipelineConfig& c) {
  Binder b;
  b.integer("seed", c.seed);
  b.string("out", c.out);

  auto& g = c.generator;
  b.integer("generator.n_items", g.n_items);
  b.integer("generator.n_queries", g.n_queries);
  b.integer("generator.n_users", g.n_users);
  b.integer("generator.n_categories", g.n_categories);
  b.integer("generator.d_latent", g.d_latent);
  b.integer("generator.d_obs", g.d_obs);
  b.real("generator.obs_noise", g.obs_noise);
  b.integer("generator.d_nuisance", g.d_nuisance);
  b.real("generator.nuisance_scale", g.nuisance_scale);
  b.real("generator.style_spread", g.style_spread);
  b.real("generator.category_max_cosine", g.category_max_cosine);
  b.real("generator.pareto_shape", g.pareto_shape);
  b.real("generator.popularity_style_coupling", g.popularity_style_coupling);
  b.integer("generator.slots_per_query", g.slots_per_query);
  b.integer("generator.sessions_per_query", g.sessions_per_query);
  b.integer("generator.n_days", g.n_days);
  b.real("generator.exposure_gamma", g.exposure_gamma);
  b.real("generator.relevance_gain", g.relevance_gain);
  b.real("generator.click_bias", g.click_bias);
  b.real("generator.position_decay", g.position_decay);
  b.real("generator.relevance_threshold", g.relevance_threshold);
  b.boolean("generator.identity_lift", g.identity_lift);

  b.integer("encoder.dim", c.encoder.dim);
  b.sizes("encoder.hidden", c.encoder.hidden);
  b.real("encoder.temperature", c.encoder.temperature);
  b.boolean("encoder.literal_denominator", c.encoder.literal_denominator);

  b.real("augment.mask_fraction", c.augmentation.mask_fraction);
  b.real("augment.jitter_sigma", c.augmentation.jitter_sigma);
  b.real("augment.grey_prob", c.augmentation.grey_prob);
  b.real("augment.flip_prob", c.augmentation.flip_prob);

  bind_stage(b, "classifier", c.classifier);
  bind_stage(b, "s1", c.s1);
  bind_stage(b, "s2", c.s2);
  b.integer("s2.negatives", c.s2.negatives);

  auto& d = c.ctr.debias;
  b.integer("debias.top_k", c.ctr.top_k);
  b.integer("debias.non_displayed_threshold", c.ctr.non_displayed_threshold);
  b.real("debias.lambda", c.ctr.lambda);
  b.real("debias.temperature", d.temperature);
  b.boolean("debias.literal_denominator", d.literal_denominator);
  b.add("debias.gate", {[&d](const std::string& k, const std::string& v) {
                          const std::string s = parse_string(k, v);
                          if (s == "elementwise") d.gate = debias::GateMode::kElementwise;
                          else if (s == "scalar") d.gate = debias::GateMode::kScalar;
                          else throw ConfigError(k + ": expected \"elementwise\" or \"scalar\"");
                        },
                        [&d] {
                          return std::string(d.gate == debias::GateMode::kScalar ? "\"scalar\""
                                                                                 : "\"elementwise\"");
                        }});
  b.boolean("debias.gate_bias", d.gate_bias);
  b.real("debias.gate_bias_init", d.gate_bias_init);

  b.sizes("ctr.tower", c.ctr.tower);
  b.integer("ctr.embed_width", c.ctr.embed_width);
  b.integer("ctr.epochs", c.ctr.epochs);
  b.integer("ctr.batch_size", c.ctr.batch_size);
  b.real("ctr.learning_rate", c.ctr.optimizer.learning_rate);

  b.sizes("eval.k_list", c.eval.k_list);
  b.integer("eval.low_impression_threshold", c.eval.low_impression_threshold);
  return b;
}

}  // namespace detail

/// Parses the sectioned key = value format. Later keys override earlier ones;
/// unknown sections or keys are rejected with their line number.
inline PipelineConfig parse_config(const std::string& text, PipelineConfig base = {}) {
  auto binder = detail::bind(base);
  std::istringstream in(text);
  std::string raw, section;
  std::size_t lineno = 0;
  bool seed_set = false;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string name = section.empty() ? key : section + "." + key;
    auto it = binder.fields.find(name);
    if (it == binder.fields.end()) throw ConfigError(where + ": unknown key '" + name + "'");
    it->second.set(name, value);
    seed_set = seed_set || name == "seed";
  }
  if (seed_set) base.apply_seed(base.seed);
  base.validate();
  return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path));
}

/// The resolved configuration in the same format parse_config reads.
inline std::string to_text(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  auto binder = detail::bind(copy);
  std::string out, section;
  for (const std::string& name : binder.order) {
    const auto dot = name.find('.');
    const std::string sec = dot == std::string::npos ? "" : name.substr(0, dot);
    const std::string key = dot == std::string::npos ? name : name.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += key + " = " + binder.fields.at(name).get() + "\n";
  }
  return out;
}

}  // namespace vdctr::pipeline
