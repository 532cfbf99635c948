#include "meb/experts.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace meb::model {

namespace {

using num::Tensor;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

const char* act_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation parse_act(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw Error("unknown activation '" + s + "'");
}

const char* skip_name(SkipPattern p) {
  switch (p) {
    case SkipPattern::kNone: return "none";
    case SkipPattern::kResidual: return "residual";
    case SkipPattern::kDenseConcat: return "dense-concat";
    case SkipPattern::kParallel: return "parallel";
  }
  throw Error("unknown skip pattern");
}

SkipPattern parse_skip(const std::string& s) {
  if (s == "none") return SkipPattern::kNone;
  if (s == "residual") return SkipPattern::kResidual;
  if (s == "dense-concat") return SkipPattern::kDenseConcat;
  if (s == "parallel") return SkipPattern::kParallel;
  throw Error("unknown skip pattern '" + s + "'");
}

void validate_spec(const ArchitectureSpec& spec) {
  check(!spec.name.empty(), "architecture spec: name must not be empty");
  check(!spec.widths.empty(), "architecture '" + spec.name + "': widths must not be empty");
  for (int w : spec.widths) {
    check(w >= 1, "architecture '" + spec.name + "': widths must be >= 1");
  }
  check(spec.activations.size() == spec.widths.size(),
        "architecture '" + spec.name + "': one activation per layer required");
  check(spec.feature_dim >= 1,
        "architecture '" + spec.name + "': feature_dim must be >= 1");
  if (spec.skip == SkipPattern::kResidual) {
    for (std::size_t l = 1; l < spec.widths.size(); ++l) {
      check(spec.widths[l] == spec.widths[l - 1],
            "architecture '" + spec.name + "': residual layers need equal widths");
    }
  }
}

int native_width(const ArchitectureSpec& spec) {
  if (spec.skip == SkipPattern::kParallel) {
    int total = 0;
    for (int w : spec.widths) total += w;
    return total;
  }
  return spec.widths.back();
}

// Input width of encoder layer l under the given wiring.
int layer_input_width(const ArchitectureSpec& spec, int input_dim, std::size_t l) {
  switch (spec.skip) {
    case SkipPattern::kParallel:
      return input_dim;
    case SkipPattern::kDenseConcat: {
      int w = input_dim;
      for (std::size_t j = 0; j < l; ++j) w += spec.widths[j];
      return w;
    }
    case SkipPattern::kNone:
    case SkipPattern::kResidual:
      return l == 0 ? input_dim : spec.widths[l - 1];
  }
  throw Error("unknown skip pattern");
}

Tensor init_weight(int rows, int cols, Rng& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<float> data(static_cast<std::size_t>(rows) * cols);
  for (auto& v : data) v = static_cast<float>(rng.normal(0.0, sd));
  return Tensor::from_data({rows, cols}, std::move(data), true);
}

const Tensor* find_param(const std::vector<NamedTensor>& set, const std::string& name) {
  for (const auto& nt : set) {
    if (nt.name == name) return &nt.value;
  }
  return nullptr;
}

void upsert_param(std::vector<NamedTensor>& set, const std::string& name, Tensor t) {
  for (auto& nt : set) {
    if (nt.name == name) {
      nt.value = std::move(t);
      return;
    }
  }
  set.push_back({name, std::move(t)});
}

Tensor apply_act(Activation a, const Tensor& x) {
  return a == Activation::kRelu ? num::relu(x) : num::tanh_act(x);
}

Tensor encoder_forward(const ArchitectureSpec& spec,
                       const std::vector<NamedTensor>& set, const Tensor& x) {
  auto layer = [&](std::size_t l, const Tensor& in) {
    const std::string base = "enc." + std::to_string(l);
    const Tensor* w = find_param(set, base + ".w");
    const Tensor* b = find_param(set, base + ".b");
    check(w != nullptr && b != nullptr, "missing encoder parameters for layer " + std::to_string(l));
    return apply_act(spec.activations[l], num::affine(in, *w, *b));
  };

  switch (spec.skip) {
    case SkipPattern::kNone: {
      Tensor h = x;
      for (std::size_t l = 0; l < spec.widths.size(); ++l) h = layer(l, h);
      return h;
    }
    case SkipPattern::kResidual: {
      Tensor h = layer(0, x);
      for (std::size_t l = 1; l < spec.widths.size(); ++l) h = num::add(layer(l, h), h);
      return h;
    }
    case SkipPattern::kDenseConcat: {
      Tensor carry = x;
      Tensor h;
      for (std::size_t l = 0; l < spec.widths.size(); ++l) {
        h = layer(l, carry);
        if (l + 1 < spec.widths.size()) {
          std::vector<Tensor> parts = {carry, h};
          carry = num::concat_cols(parts);
        }
      }
      return h;
    }
    case SkipPattern::kParallel: {
      std::vector<Tensor> branches;
      branches.reserve(spec.widths.size());
      for (std::size_t l = 0; l < spec.widths.size(); ++l) branches.push_back(layer(l, x));
      return num::concat_cols(branches);
    }
  }
  throw Error("unknown skip pattern");
}

}  // namespace

const char* activation_name(Activation a) { return act_name(a); }
Activation parse_activation(const std::string& s) { return parse_act(s); }
const char* skip_pattern_name(SkipPattern p) { return skip_name(p); }
SkipPattern parse_skip_pattern(const std::string& s) { return parse_skip(s); }

std::vector<ArchitectureSpec> default_architectures(int feature_dim) {
  std::vector<ArchitectureSpec> specs(3);
  specs[0].name = "dense-mlp";
  specs[0].widths = {64, 64, 64};
  specs[0].activations = {Activation::kRelu, Activation::kRelu, Activation::kRelu};
  specs[0].skip = SkipPattern::kDenseConcat;
  specs[0].feature_dim = feature_dim;

  specs[1].name = "res-mlp";
  specs[1].widths = {128, 128};
  specs[1].activations = {Activation::kRelu, Activation::kRelu};
  specs[1].skip = SkipPattern::kResidual;
  specs[1].feature_dim = feature_dim;

  specs[2].name = "incept-mlp";
  specs[2].widths = {32, 32, 64};
  specs[2].activations = {Activation::kRelu, Activation::kTanh, Activation::kRelu};
  specs[2].skip = SkipPattern::kParallel;
  specs[2].feature_dim = feature_dim;
  return specs;
}

bool ExpertModel::has_target_head() const {
  return find_param(theta, "head_tgt.w") != nullptr;
}

std::vector<ExpertModel> build_experts(const std::vector<ArchitectureSpec>& specs,
                                       int input_dim, int num_source_identities,
                                       std::uint64_t seed) {
  check(specs.size() >= 2, "build_experts: need at least 2 expert architectures");
  check(input_dim >= 1, "build_experts: input_dim must be >= 1");
  check(num_source_identities >= 2, "build_experts: need at least 2 source identities");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    validate_spec(specs[i]);
    check(specs[i].feature_dim == specs[0].feature_dim,
          "build_experts: all experts must share the same feature_dim");
    for (std::size_t j = i + 1; j < specs.size(); ++j) {
      check(specs[i].name != specs[j].name,
            "build_experts: duplicate architecture '" + specs[i].name + "'");
    }
  }

  Rng rng(seed);
  std::vector<ExpertModel> experts;
  experts.reserve(specs.size());
  for (const auto& spec : specs) {
    ExpertModel m;
    m.arch = spec;
    m.input_dim = input_dim;
    for (std::size_t l = 0; l < spec.widths.size(); ++l) {
      const int in_w = layer_input_width(spec, input_dim, l);
      const std::string base = "enc." + std::to_string(l);
      m.theta.push_back({base + ".w", init_weight(in_w, spec.widths[l], rng)});
      m.theta.push_back({base + ".b", Tensor::zeros({spec.widths[l]}, true)});
    }
    const int native = native_width(spec);
    if (native > spec.feature_dim) {
      m.theta.push_back({"proj.w", init_weight(native, spec.feature_dim, rng)});
      m.theta.push_back({"proj.b", Tensor::zeros({spec.feature_dim}, true)});
    }
    m.theta.push_back({"head_src.w", init_weight(spec.feature_dim, num_source_identities, rng)});
    m.theta.push_back({"head_src.b", Tensor::zeros({num_source_identities}, true)});

    m.theta_avg.reserve(m.theta.size());
    for (const auto& nt : m.theta) {
      Tensor copy = nt.value.detach();
      m.theta_avg.push_back({nt.name, std::move(copy)});
    }
    experts.push_back(std::move(m));
  }
  return experts;
}

ExpertOutput forward(const ExpertModel& m, Params which, const num::Tensor& x) {
  check(x.defined() && x.rank() == 2, "expert forward: input must be [B, D]");
  check(x.dim(1) == m.input_dim, "expert forward: input dim " + std::to_string(x.dim(1)) +
                                     " does not match model dim " + std::to_string(m.input_dim));
  const auto& set = which == Params::kTheta ? m.theta : m.theta_avg;

  Tensor enc = encoder_forward(m.arch, set, x);
  Tensor features;
  const int native = native_width(m.arch);
  if (native > m.arch.feature_dim) {
    const Tensor* pw = find_param(set, "proj.w");
    const Tensor* pb = find_param(set, "proj.b");
    check(pw != nullptr && pb != nullptr, "expert forward: missing projection parameters");
    features = num::affine(enc, *pw, *pb);
  } else if (native < m.arch.feature_dim) {
    features = num::pad_cols(enc, m.arch.feature_dim);
  } else {
    features = enc;
  }

  ExpertOutput out;
  out.features = features;
  const Tensor* hw = find_param(set, "head_src.w");
  const Tensor* hb = find_param(set, "head_src.b");
  check(hw != nullptr && hb != nullptr, "expert forward: missing source head");
  out.logits_src = num::affine(features, *hw, *hb);

  const Tensor* tw = find_param(set, "head_tgt.w");
  const Tensor* tb = find_param(set, "head_tgt.b");
  if (tw != nullptr && tb != nullptr) {
    out.logits_tgt = num::affine(features, *tw, *tb);
  }
  return out;
}

void ema_update(ExpertModel& m, double alpha) {
  check(alpha >= 0.0 && alpha <= 1.0, "ema_update: alpha must lie in [0, 1]");
  check(m.theta.size() == m.theta_avg.size(),
        "ema_update: parameter sets diverged in size");
  for (auto& avg : m.theta_avg) {
    const Tensor* cur = find_param(m.theta, avg.name);
    check(cur != nullptr, "ema_update: '" + avg.name + "' missing from theta");
    check(cur->shape() == avg.value.shape(),
          "ema_update: shape mismatch for '" + avg.name + "'");
    auto dst = avg.value.mutable_data();
    const auto src = cur->data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<float>(alpha * static_cast<double>(dst[i]) +
                                  (1.0 - alpha) * static_cast<double>(src[i]));
    }
  }
}

void reset_target_head(ExpertModel& m, const num::Tensor& centroids) {
  check(centroids.defined() && centroids.rank() == 2,
        "reset_target_head: centroids must be [M_t, F]");
  const int mt = centroids.dim(0);
  const int f = centroids.dim(1);
  check(f == m.arch.feature_dim,
        "reset_target_head: centroid width does not match feature_dim");
  check(mt >= 1, "reset_target_head: need at least one centroid");

  std::vector<float> w(static_cast<std::size_t>(f) * mt);
  for (int j = 0; j < mt; ++j) {
    double norm = 0.0;
    for (int k = 0; k < f; ++k) {
      norm += static_cast<double>(centroids.at(j, k)) * static_cast<double>(centroids.at(j, k));
    }
    norm = std::sqrt(norm);
    check(norm > 1e-12, "reset_target_head: centroid " + std::to_string(j) +
                            " is all-zero (degenerate)");
    for (int k = 0; k < f; ++k) {
      w[static_cast<std::size_t>(k) * mt + j] =
          static_cast<float>(static_cast<double>(centroids.at(j, k)) / norm);
    }
  }

  upsert_param(m.theta, "head_tgt.w", Tensor::from_data({f, mt}, w, true));
  upsert_param(m.theta, "head_tgt.b", Tensor::zeros({mt}, true));
  upsert_param(m.theta_avg, "head_tgt.w", Tensor::from_data({f, mt}, w, false));
  upsert_param(m.theta_avg, "head_tgt.b", Tensor::zeros({mt}, false));
}

void save_checkpoint(const std::string& stem, const ExpertModel& m) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "meb-checkpoint v1";
  nlohmann::ordered_json arch;
  arch["name"] = m.arch.name;
  arch["widths"] = m.arch.widths;
  std::vector<std::string> acts;
  for (Activation a : m.arch.activations) acts.emplace_back(act_name(a));
  arch["activations"] = acts;
  arch["skip"] = skip_name(m.arch.skip);
  arch["feature_dim"] = m.arch.feature_dim;
  manifest["arch"] = arch;
  manifest["input_dim"] = m.input_dim;

  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::ofstream blob(stem + ".bin", std::ios::binary);
  check(blob.is_open(), "save_checkpoint: cannot open '" + stem + ".bin'");
  std::size_t offset = 0;
  auto dump_set = [&](const char* set_name, const std::vector<NamedTensor>& set) {
    for (const auto& nt : set) {
      nlohmann::ordered_json entry;
      entry["set"] = set_name;
      entry["name"] = nt.name;
      entry["shape"] = nt.value.shape();
      entry["offset"] = offset;
      tensors.push_back(entry);
      const auto data = nt.value.data();
      blob.write(reinterpret_cast<const char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(float)));
      offset += data.size() * sizeof(float);
    }
  };
  dump_set("theta", m.theta);
  dump_set("theta_avg", m.theta_avg);
  blob.flush();
  check(blob.good(), "save_checkpoint: write to '" + stem + ".bin' failed");
  manifest["tensors"] = tensors;

  std::ofstream mf(stem + ".json", std::ios::binary);
  check(mf.is_open(), "save_checkpoint: cannot open '" + stem + ".json'");
  mf << manifest.dump(2) << "\n";
  mf.flush();
  check(mf.good(), "save_checkpoint: write to '" + stem + ".json' failed");
}

ExpertModel load_checkpoint(const std::string& stem) {
  std::ifstream mf(stem + ".json", std::ios::binary);
  check(mf.is_open(), "load_checkpoint: cannot open '" + stem + ".json'");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_checkpoint: bad manifest '" + stem + ".json': " + e.what());
  }

  try {
    check(manifest.at("format").get<std::string>() == "meb-checkpoint v1",
          "load_checkpoint: unsupported format in '" + stem + ".json'");
    ExpertModel m;
    const auto& arch = manifest.at("arch");
    m.arch.name = arch.at("name").get<std::string>();
    m.arch.widths = arch.at("widths").get<std::vector<int>>();
    for (const auto& a : arch.at("activations")) {
      m.arch.activations.push_back(parse_act(a.get<std::string>()));
    }
    m.arch.skip = parse_skip(arch.at("skip").get<std::string>());
    m.arch.feature_dim = arch.at("feature_dim").get<int>();
    m.input_dim = manifest.at("input_dim").get<int>();
    validate_spec(m.arch);

    std::ifstream blob(stem + ".bin", std::ios::binary);
    check(blob.is_open(), "load_checkpoint: cannot open '" + stem + ".bin'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(blob)),
                            std::istreambuf_iterator<char>());

    for (const auto& entry : manifest.at("tensors")) {
      const std::string set_name = entry.at("set").get<std::string>();
      const std::string name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<num::Shape>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t count = static_cast<std::size_t>(num::shape_size(shape));
      check(offset + count * sizeof(float) <= bytes.size(),
            "load_checkpoint: blob '" + stem + ".bin' is too short for '" + name + "'");
      std::vector<float> data(count);
      std::memcpy(data.data(), bytes.data() + offset, count * sizeof(float));
      const bool is_theta = set_name == "theta";
      check(is_theta || set_name == "theta_avg",
            "load_checkpoint: unknown tensor set '" + set_name + "'");
      auto& dst = is_theta ? m.theta : m.theta_avg;
      dst.push_back({name, Tensor::from_data(shape, std::move(data), is_theta)});
    }
    check(m.theta.size() == m.theta_avg.size() && !m.theta.empty(),
          "load_checkpoint: parameter sets are incomplete");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_checkpoint: bad manifest '" + stem + ".json': " + e.what());
  }
}

std::int64_t parameter_count(const ExpertModel& m) {
  std::int64_t n = 0;
  for (const auto& nt : m.theta) n += nt.value.size();
  return n;
}

ExpertModel clone_expert(const ExpertModel& m, const std::string& new_name) {
  ExpertModel out;
  out.arch = m.arch;
  out.arch.name = new_name;
  out.input_dim = m.input_dim;
  for (const auto& nt : m.theta) out.theta.push_back({nt.name, nt.value.clone()});
  for (const auto& nt : m.theta_avg) out.theta_avg.push_back({nt.name, nt.value.clone()});
  return out;
}

}  // namespace meb::model
