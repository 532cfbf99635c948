#include "meb/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "meb/common.hpp"

namespace meb::cfg {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest decimal rendering that round-trips the double.
std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  check(ec == std::errc(), "config: cannot format double");
  return std::string(buf, ptr);
}

struct Context {
  std::string origin;
  int line = 0;

  std::string where() const {
    return origin + (line > 0 ? ":" + std::to_string(line) : "");
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(where() + ": " + msg);
  }
};

long long parse_int(const std::string& v, const Context& ctx, const std::string& key) {
  long long out = 0;
  const char* b = v.data();
  const char* e = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || ptr != e) ctx.fail("key '" + key + "': expected integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& v, const Context& ctx, const std::string& key) {
  std::uint64_t out = 0;
  const char* b = v.data();
  const char* e = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || ptr != e) ctx.fail("key '" + key + "': expected unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v, const Context& ctx, const std::string& key) {
  // std::from_chars<double> is used for exact round-trips of our own output.
  double out = 0.0;
  const char* b = v.data();
  const char* e = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || ptr != e) ctx.fail("key '" + key + "': expected number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v, const Context& ctx, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  ctx.fail("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> split_ws(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<int> parse_int_list(const std::string& v, const Context& ctx,
                                const std::string& key) {
  std::vector<int> out;
  for (const std::string& tok : split_ws(v)) {
    out.push_back(static_cast<int>(parse_int(tok, ctx, key)));
  }
  return out;
}

// Tracks which expert specs came from the file vs the stock defaults.
struct ParseState {
  ExperimentConfig cfg = default_config();
  bool explicit_experts = false;
  std::vector<int> spec_feature_dim_set;  // parallels cfg.experts when explicit

  model::ArchitectureSpec& begin_expert(const std::string& name, const Context& ctx) {
    if (!explicit_experts) {
      cfg.experts.clear();
      explicit_experts = true;
    }
    for (const auto& s : cfg.experts) {
      if (s.name == name) ctx.fail("duplicate expert section '" + name + "'");
    }
    model::ArchitectureSpec spec;
    spec.name = name;
    spec.feature_dim = 0;  // filled from [experts] feature_dim unless overridden
    spec.activations.clear();
    cfg.experts.push_back(std::move(spec));
    spec_feature_dim_set.push_back(0);
    return cfg.experts.back();
  }

  void finish() {
    for (std::size_t i = 0; i < cfg.experts.size(); ++i) {
      if (explicit_experts && spec_feature_dim_set[i] == 0) {
        cfg.experts[i].feature_dim = feature_dim_default();
      }
    }
    if (!explicit_experts) {
      cfg.experts = model::default_architectures(cfg.feature_dim);
    }
    cfg.generator.seed = cfg.seed;
    cfg.pretrain.seed = cfg.seed;
    cfg.adapt.seed = cfg.seed;
  }

  int feature_dim_default() const { return cfg.feature_dim; }
};

void apply_top(ParseState& st, const std::string& key, const std::string& value,
               const Context& ctx) {
  auto& c = st.cfg;
  if (key == "seed") c.seed = parse_u64(value, ctx, key);
  else if (key == "out") c.out = value;
  else ctx.fail("unknown key '" + key + "' at top level");
}

void apply_generator(ParseState& st, const std::string& key, const std::string& value,
                     const Context& ctx) {
  auto& g = st.cfg.generator;
  auto& sh = st.cfg.shift;
  if (key == "num_identities") g.num_identities = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "cameras_per_domain") g.cameras_per_domain = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "samples_per_identity") g.samples_per_identity = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "query_per_identity") g.query_per_identity = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "gallery_per_identity") g.gallery_per_identity = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "input_dim") g.input_dim = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "identity_separation") g.identity_separation = parse_double(value, ctx, key);
  else if (key == "camera_shared_sd") g.camera_shared_sd = parse_double(value, ctx, key);
  else if (key == "camera_jitter_sd") g.camera_jitter_sd = parse_double(value, ctx, key);
  else if (key == "noise_sd") g.noise_sd = parse_double(value, ctx, key);
  else if (key == "apply_shift") sh.apply = parse_bool(value, ctx, key);
  else if (key == "shift_min_scale") sh.min_scale = parse_double(value, ctx, key);
  else if (key == "shift_max_scale") sh.max_scale = parse_double(value, ctx, key);
  else if (key == "shift_offset_sd") sh.offset_sd = parse_double(value, ctx, key);
  else ctx.fail("unknown key '" + key + "' in section [generator]");
}

void apply_experts(ParseState& st, const std::string& key, const std::string& value,
                   const Context& ctx) {
  if (key == "feature_dim") st.cfg.feature_dim = static_cast<int>(parse_int(value, ctx, key));
  else ctx.fail("unknown key '" + key + "' in section [experts]");
}

void apply_expert_spec(model::ArchitectureSpec& spec, int& fdim_set,
                       const std::string& key, const std::string& value,
                       const Context& ctx) {
  if (key == "widths") {
    spec.widths = parse_int_list(value, ctx, key);
  } else if (key == "activations") {
    spec.activations.clear();
    for (const std::string& tok : split_ws(value)) {
      try {
        spec.activations.push_back(model::parse_activation(tok));
      } catch (const Error& e) {
        ctx.fail(std::string("key 'activations': ") + e.what());
      }
    }
  } else if (key == "skip") {
    try {
      spec.skip = model::parse_skip_pattern(value);
    } catch (const Error& e) {
      ctx.fail(std::string("key 'skip': ") + e.what());
    }
  } else if (key == "feature_dim") {
    spec.feature_dim = static_cast<int>(parse_int(value, ctx, key));
    fdim_set = 1;
  } else {
    ctx.fail("unknown key '" + key + "' in section [expert " + spec.name + "]");
  }
}

void apply_pretrain(ParseState& st, const std::string& key, const std::string& value,
                    const Context& ctx) {
  auto& p = st.cfg.pretrain;
  if (key == "epochs") p.epochs = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "lr") p.lr = parse_double(value, ctx, key);
  else if (key == "lr_milestones") p.lr_milestones = parse_int_list(value, ctx, key);
  else if (key == "weight_decay") p.weight_decay = parse_double(value, ctx, key);
  else if (key == "p") p.p = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "k") p.k = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "epsilon") p.epsilon = parse_double(value, ctx, key);
  else if (key == "eval_ranks") p.eval_ranks = static_cast<int>(parse_int(value, ctx, key));
  else ctx.fail("unknown key '" + key + "' in section [pretrain]");
}

void apply_adapt(ParseState& st, const std::string& key, const std::string& value,
                 const Context& ctx) {
  auto& a = st.cfg.adapt;
  if (key == "epochs") a.epochs = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "iterations_per_epoch") a.iterations_per_epoch = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "alpha") a.alpha = parse_double(value, ctx, key);
  else if (key == "m_t") a.m_t = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "lr") a.lr = parse_double(value, ctx, key);
  else if (key == "weight_decay") a.weight_decay = parse_double(value, ctx, key);
  else if (key == "p") a.p = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "k") a.k = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "epsilon") a.epsilon = parse_double(value, ctx, key);
  else if (key == "cluster_batch") a.cluster_batch = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "cluster_iters") a.cluster_iters = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "eval_ranks") a.eval_ranks = static_cast<int>(parse_int(value, ctx, key));
  else if (key == "no_ema") a.no_ema = parse_bool(value, ctx, key);
  else if (key == "no_mid") a.no_mid = parse_bool(value, ctx, key);
  else if (key == "no_mtri") a.no_mtri = parse_bool(value, ctx, key);
  else if (key == "no_ar") a.no_ar = parse_bool(value, ctx, key);
  else if (key == "voting_only") a.voting_only = parse_bool(value, ctx, key);
  else if (key == "baseline_ensemble") a.baseline_ensemble = parse_bool(value, ctx, key);
  else ctx.fail("unknown key '" + key + "' in section [adapt]");
}

ExperimentConfig parse_sections(const std::string& text, const std::string& origin) {
  ParseState st;
  enum class Section { kTop, kGenerator, kExperts, kExpertSpec, kPretrain, kAdapt };
  Section section = Section::kTop;
  model::ArchitectureSpec* spec = nullptr;
  int* spec_fdim = nullptr;
  std::set<std::string> seen;  // "<section>\n<key>" duplicate guard
  std::string section_tag = "";

  std::istringstream in(text);
  std::string raw;
  Context ctx{origin, 0};
  while (std::getline(in, raw)) {
    ctx.line += 1;
    std::string line = raw;
    // Comments run to end of line: a leading '#' or one preceded by space.
    if (std::size_t pos = line.find('#'); pos != std::string::npos) {
      if (pos == 0 || line[pos - 1] == ' ' || line[pos - 1] == '\t') {
        line = line.substr(0, pos);
      }
    }
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') ctx.fail("unterminated section header '" + raw + "'");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name == "generator") section = Section::kGenerator;
      else if (name == "experts") section = Section::kExperts;
      else if (name == "pretrain") section = Section::kPretrain;
      else if (name == "adapt") section = Section::kAdapt;
      else if (name == "expert" || name.rfind("expert ", 0) == 0) {
        const std::string ename = name.size() > 6 ? trim(name.substr(7)) : "";
        if (ename.empty()) ctx.fail("expert section needs a name");
        section = Section::kExpertSpec;
        spec = &st.begin_expert(ename, ctx);
        spec_fdim = &st.spec_feature_dim_set.back();
      } else {
        ctx.fail("unknown section [" + name + "]");
      }
      section_tag = name;
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) ctx.fail("expected key = value, got '" + raw + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) ctx.fail("empty key");
    if (!seen.insert(section_tag + "\n" + key).second) {
      ctx.fail("duplicate key '" + key + "' in section [" + section_tag + "]");
    }

    switch (section) {
      case Section::kTop: apply_top(st, key, value, ctx); break;
      case Section::kGenerator: apply_generator(st, key, value, ctx); break;
      case Section::kExperts: apply_experts(st, key, value, ctx); break;
      case Section::kExpertSpec: apply_expert_spec(*spec, *spec_fdim, key, value, ctx); break;
      case Section::kPretrain: apply_pretrain(st, key, value, ctx); break;
      case Section::kAdapt: apply_adapt(st, key, value, ctx); break;
    }
  }
  st.finish();
  return st.cfg;
}

// Best-effort line of a key's first occurrence in the raw JSON text.
int json_key_line(const std::string& text, const std::string& key) {
  const std::size_t pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where, const std::string& text,
                    const std::string& origin) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      Context ctx{origin, json_key_line(text, key)};
      ctx.fail("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void take(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

ExperimentConfig parse_json(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(origin + ": " + e.what());
  }
  check(root.is_object(), origin + ": top-level JSON value must be an object");

  ParseState st;
  auto& c = st.cfg;
  try {
    reject_unknown(root, {"seed", "out", "generator", "experts", "pretrain", "adapt"},
                   "the top-level object", text, origin);
    take(root, "seed", c.seed);
    take(root, "out", c.out);

    if (root.contains("generator")) {
      const json& g = root.at("generator");
      reject_unknown(g,
                     {"num_identities", "cameras_per_domain", "samples_per_identity",
                      "query_per_identity", "gallery_per_identity", "input_dim",
                      "identity_separation", "camera_shared_sd", "camera_jitter_sd", "noise_sd",
                      "apply_shift", "shift_min_scale", "shift_max_scale",
                      "shift_offset_sd"},
                     "\"generator\"", text, origin);
      take(g, "num_identities", c.generator.num_identities);
      take(g, "cameras_per_domain", c.generator.cameras_per_domain);
      take(g, "samples_per_identity", c.generator.samples_per_identity);
      take(g, "query_per_identity", c.generator.query_per_identity);
      take(g, "gallery_per_identity", c.generator.gallery_per_identity);
      take(g, "input_dim", c.generator.input_dim);
      take(g, "identity_separation", c.generator.identity_separation);
      take(g, "camera_shared_sd", c.generator.camera_shared_sd);
      take(g, "camera_jitter_sd", c.generator.camera_jitter_sd);
      take(g, "noise_sd", c.generator.noise_sd);
      take(g, "apply_shift", c.shift.apply);
      take(g, "shift_min_scale", c.shift.min_scale);
      take(g, "shift_max_scale", c.shift.max_scale);
      take(g, "shift_offset_sd", c.shift.offset_sd);
    }

    if (root.contains("experts")) {
      const json& ex = root.at("experts");
      reject_unknown(ex, {"feature_dim", "specs"}, "\"experts\"", text, origin);
      take(ex, "feature_dim", c.feature_dim);
      if (ex.contains("specs")) {
        check(ex.at("specs").is_array(), origin + ": \"experts.specs\" must be an array");
        for (const json& js : ex.at("specs")) {
          reject_unknown(js, {"name", "widths", "activations", "skip", "feature_dim"},
                         "an expert spec", text, origin);
          check(js.contains("name"), origin + ": expert spec needs a \"name\"");
          Context ctx{origin, json_key_line(text, js.at("name").get<std::string>())};
          auto& spec = st.begin_expert(js.at("name").get<std::string>(), ctx);
          take(js, "widths", spec.widths);
          if (js.contains("activations")) {
            for (const json& a : js.at("activations")) {
              spec.activations.push_back(model::parse_activation(a.get<std::string>()));
            }
          }
          if (js.contains("skip")) {
            spec.skip = model::parse_skip_pattern(js.at("skip").get<std::string>());
          }
          if (js.contains("feature_dim")) {
            spec.feature_dim = js.at("feature_dim").get<int>();
            st.spec_feature_dim_set.back() = 1;
          }
        }
      }
    }

    if (root.contains("pretrain")) {
      const json& p = root.at("pretrain");
      reject_unknown(p,
                     {"epochs", "lr", "lr_milestones", "weight_decay", "p", "k",
                      "epsilon", "eval_ranks"},
                     "\"pretrain\"", text, origin);
      take(p, "epochs", c.pretrain.epochs);
      take(p, "lr", c.pretrain.lr);
      take(p, "lr_milestones", c.pretrain.lr_milestones);
      take(p, "weight_decay", c.pretrain.weight_decay);
      take(p, "p", c.pretrain.p);
      take(p, "k", c.pretrain.k);
      take(p, "epsilon", c.pretrain.epsilon);
      take(p, "eval_ranks", c.pretrain.eval_ranks);
    }

    if (root.contains("adapt")) {
      const json& a = root.at("adapt");
      reject_unknown(a,
                     {"epochs", "iterations_per_epoch", "alpha", "m_t", "lr",
                      "weight_decay", "p", "k", "epsilon", "cluster_batch",
                      "cluster_iters", "eval_ranks", "no_ema", "no_mid", "no_mtri",
                      "no_ar", "voting_only", "baseline_ensemble"},
                     "\"adapt\"", text, origin);
      take(a, "epochs", c.adapt.epochs);
      take(a, "iterations_per_epoch", c.adapt.iterations_per_epoch);
      take(a, "alpha", c.adapt.alpha);
      take(a, "m_t", c.adapt.m_t);
      take(a, "lr", c.adapt.lr);
      take(a, "weight_decay", c.adapt.weight_decay);
      take(a, "p", c.adapt.p);
      take(a, "k", c.adapt.k);
      take(a, "epsilon", c.adapt.epsilon);
      take(a, "cluster_batch", c.adapt.cluster_batch);
      take(a, "cluster_iters", c.adapt.cluster_iters);
      take(a, "eval_ranks", c.adapt.eval_ranks);
      take(a, "no_ema", c.adapt.no_ema);
      take(a, "no_mid", c.adapt.no_mid);
      take(a, "no_mtri", c.adapt.no_mtri);
      take(a, "no_ar", c.adapt.no_ar);
      take(a, "voting_only", c.adapt.voting_only);
      take(a, "baseline_ensemble", c.adapt.baseline_ensemble);
    }
  } catch (const json::exception& e) {
    throw Error(origin + ": " + e.what());
  }
  st.finish();
  return st.cfg;
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.experts = model::default_architectures(c.feature_dim);

  c.pretrain.epochs = 6;
  c.pretrain.lr_milestones = {5};

  c.adapt.epochs = 25;
  c.adapt.iterations_per_epoch = 50;
  c.adapt.alpha = 0.98;
  c.adapt.m_t = 20;

  c.generator.seed = c.seed;
  c.pretrain.seed = c.seed;
  c.adapt.seed = c.seed;
  return c;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') continue;
    if (ch == '{') return parse_json(text, origin);
    break;
  }
  return parse_sections(text, origin);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.is_open(), "config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string resolved_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "seed = " << cfg.seed << "\n";
  out << "out = " << cfg.out << "\n";
  out << "\n[generator]\n";
  const auto& g = cfg.generator;
  out << "num_identities = " << g.num_identities << "\n";
  out << "cameras_per_domain = " << g.cameras_per_domain << "\n";
  out << "samples_per_identity = " << g.samples_per_identity << "\n";
  out << "query_per_identity = " << g.query_per_identity << "\n";
  out << "gallery_per_identity = " << g.gallery_per_identity << "\n";
  out << "input_dim = " << g.input_dim << "\n";
  out << "identity_separation = " << fmt_double(g.identity_separation) << "\n";
  out << "camera_shared_sd = " << fmt_double(g.camera_shared_sd) << "\n";
  out << "camera_jitter_sd = " << fmt_double(g.camera_jitter_sd) << "\n";
  out << "noise_sd = " << fmt_double(g.noise_sd) << "\n";
  out << "apply_shift = " << (cfg.shift.apply ? "true" : "false") << "\n";
  out << "shift_min_scale = " << fmt_double(cfg.shift.min_scale) << "\n";
  out << "shift_max_scale = " << fmt_double(cfg.shift.max_scale) << "\n";
  out << "shift_offset_sd = " << fmt_double(cfg.shift.offset_sd) << "\n";
  out << "\n[experts]\n";
  out << "feature_dim = " << cfg.feature_dim << "\n";
  for (const auto& spec : cfg.experts) {
    out << "\n[expert " << spec.name << "]\n";
    out << "widths =";
    for (int w : spec.widths) out << " " << w;
    out << "\n";
    out << "activations =";
    for (auto a : spec.activations) out << " " << model::activation_name(a);
    out << "\n";
    out << "skip = " << model::skip_pattern_name(spec.skip) << "\n";
    out << "feature_dim = " << spec.feature_dim << "\n";
  }
  out << "\n[pretrain]\n";
  const auto& p = cfg.pretrain;
  out << "epochs = " << p.epochs << "\n";
  out << "lr = " << fmt_double(p.lr) << "\n";
  out << "lr_milestones =";
  for (int m : p.lr_milestones) out << " " << m;
  out << "\n";
  out << "weight_decay = " << fmt_double(p.weight_decay) << "\n";
  out << "p = " << p.p << "\n";
  out << "k = " << p.k << "\n";
  out << "epsilon = " << fmt_double(p.epsilon) << "\n";
  out << "eval_ranks = " << p.eval_ranks << "\n";
  out << "\n[adapt]\n";
  const auto& a = cfg.adapt;
  out << "epochs = " << a.epochs << "\n";
  out << "iterations_per_epoch = " << a.iterations_per_epoch << "\n";
  out << "alpha = " << fmt_double(a.alpha) << "\n";
  out << "m_t = " << a.m_t << "\n";
  out << "lr = " << fmt_double(a.lr) << "\n";
  out << "weight_decay = " << fmt_double(a.weight_decay) << "\n";
  out << "p = " << a.p << "\n";
  out << "k = " << a.k << "\n";
  out << "epsilon = " << fmt_double(a.epsilon) << "\n";
  out << "cluster_batch = " << a.cluster_batch << "\n";
  out << "cluster_iters = " << a.cluster_iters << "\n";
  out << "eval_ranks = " << a.eval_ranks << "\n";
  out << "no_ema = " << (a.no_ema ? "true" : "false") << "\n";
  out << "no_mid = " << (a.no_mid ? "true" : "false") << "\n";
  out << "no_mtri = " << (a.no_mtri ? "true" : "false") << "\n";
  out << "no_ar = " << (a.no_ar ? "true" : "false") << "\n";
  out << "voting_only = " << (a.voting_only ? "true" : "false") << "\n";
  out << "baseline_ensemble = " << (a.baseline_ensemble ? "true" : "false") << "\n";
  return out.str();
}

data::GeneratorConfig resolved_generator(const ExperimentConfig& cfg) {
  data::GeneratorConfig g = cfg.generator;
  g.seed = cfg.seed;
  if (cfg.shift.apply) {
    // Splitmix-style seed derivation keeps the shift stream disjoint from
    // the generator's own stream at the same seed.
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
    g.domain_shift = data::random_domain_shift(g.input_dim, rng, cfg.shift.min_scale,
                                               cfg.shift.max_scale, cfg.shift.offset_sd);
  } else {
    g.domain_shift = {};
  }
  return g;
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {
      "no_ema", "no_mid", "no_mtri", "no_ar", "voting_only", "baseline_ensemble"};
  return names;
}

void set_ablation(train::AdaptConfig& adapt, const std::string& name) {
  if (name.empty() || name == "full") {
    adapt.no_ema = adapt.no_mid = adapt.no_mtri = adapt.no_ar = false;
    adapt.voting_only = adapt.baseline_ensemble = false;
    return;
  }
  if (name == "no_ema") adapt.no_ema = true;
  else if (name == "no_mid") adapt.no_mid = true;
  else if (name == "no_mtri") adapt.no_mtri = true;
  else if (name == "no_ar") adapt.no_ar = true;
  else if (name == "voting_only") adapt.voting_only = true;
  else if (name == "baseline_ensemble") adapt.baseline_ensemble = true;
  else {
    std::string valid = "full";
    for (const auto& n : ablation_names()) valid += ", " + n;
    throw Error("unknown ablation '" + name + "' (valid: " + valid + ")");
  }
}

std::string ablation_name(const train::AdaptConfig& adapt) {
  std::string name;
  auto tag = [&](bool on, const char* n) {
    if (!on) return;
    if (!name.empty()) name += "+";
    name += n;
  };
  tag(adapt.no_ema, "no_ema");
  tag(adapt.no_mid, "no_mid");
  tag(adapt.no_mtri, "no_mtri");
  tag(adapt.no_ar, "no_ar");
  tag(adapt.voting_only, "voting_only");
  tag(adapt.baseline_ensemble, "baseline_ensemble");
  return name.empty() ? "full" : name;
}

}  // namespace meb::cfg
