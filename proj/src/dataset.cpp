#include "meb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "meb/textio.hpp"

namespace meb::data {

namespace {

using textio::format_float;
using textio::parse_float;
using textio::parse_int;
using textio::split;
using textio::trim;

std::vector<double> gaussian_matrix(int rows, int cols, Rng& rng, double sd) {
  std::vector<double> m(static_cast<std::size_t>(rows) * cols);
  for (auto& v : m) v = rng.normal(0.0, sd);
  return m;
}

// Orthonormalizes the rows of a square matrix in place (Gram-Schmidt).
void orthonormalize_rows(std::vector<double>& m, int d) {
  for (int i = 0; i < d; ++i) {
    double* row = m.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < i; ++j) {
      const double* prev = m.data() + static_cast<std::size_t>(j) * d;
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += row[k] * prev[k];
      for (int k = 0; k < d; ++k) row[k] -= dot * prev[k];
    }
    double norm = 0.0;
    for (int k = 0; k < d; ++k) norm += row[k] * row[k];
    norm = std::sqrt(norm);
    check(norm > 1e-8, "random_domain_shift: degenerate basis draw");
    for (int k = 0; k < d; ++k) row[k] /= norm;
  }
}

std::vector<float> apply_shift(const DomainShift& shift, const std::vector<double>& x,
                               int d) {
  std::vector<float> out(static_cast<std::size_t>(d));
  if (shift.matrix.empty()) {
    for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(x[static_cast<std::size_t>(i)]);
  } else {
    check(static_cast<int>(shift.matrix.size()) == d * d,
          "domain_shift matrix size does not match input_dim");
    for (int i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        acc += static_cast<double>(shift.matrix[static_cast<std::size_t>(i) * d + k]) *
               x[static_cast<std::size_t>(k)];
      }
      out[static_cast<std::size_t>(i)] = static_cast<float>(acc);
    }
  }
  if (!shift.offset.empty()) {
    check(static_cast<int>(shift.offset.size()) == d,
          "domain_shift offset size does not match input_dim");
    for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] += shift.offset[static_cast<std::size_t>(i)];
  }
  return out;
}

void validate_config(const GeneratorConfig& cfg) {
  check(cfg.input_dim >= 2, "generator config: input_dim must be at least 2");
  check(cfg.num_identities >= 1 && cfg.cameras_per_domain >= 1 &&
            cfg.samples_per_identity >= 1 && cfg.query_per_identity >= 1 &&
            cfg.gallery_per_identity >= 1,
        "generator config: all counts must be >= 1");
  check(cfg.identity_separation >= 0.0 && cfg.camera_shared_sd >= 0.0 &&
            cfg.camera_jitter_sd >= 0.0 && cfg.noise_sd >= 0.0,
        "generator config: standard deviations must be >= 0");
}

const char* domain_name(Domain d) {
  return d == Domain::kSource ? "source" : "target";
}

}  // namespace

int SplitDataset::dim() const {
  if (!train.empty()) return static_cast<int>(train.front().features.size());
  if (!query.empty()) return static_cast<int>(query.front().features.size());
  check(!gallery.empty(), "SplitDataset::dim: dataset is empty");
  return static_cast<int>(gallery.front().features.size());
}

DomainShift random_domain_shift(int dim, Rng& rng, double min_scale,
                                double max_scale, double offset_sd) {
  check(dim >= 2, "random_domain_shift: dim must be at least 2");
  check(min_scale > 0.0 && max_scale >= min_scale,
        "random_domain_shift: scales must satisfy 0 < min <= max");
  auto q1 = gaussian_matrix(dim, dim, rng, 1.0);
  orthonormalize_rows(q1, dim);
  auto q2 = gaussian_matrix(dim, dim, rng, 1.0);
  orthonormalize_rows(q2, dim);
  std::vector<double> scales(static_cast<std::size_t>(dim));
  for (auto& s : scales) s = min_scale + rng.uniform() * (max_scale - min_scale);

  DomainShift shift;
  shift.matrix.resize(static_cast<std::size_t>(dim) * dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (int k = 0; k < dim; ++k) {
        acc += q1[static_cast<std::size_t>(i) * dim + k] * scales[static_cast<std::size_t>(k)] *
               q2[static_cast<std::size_t>(k) * dim + j];
      }
      shift.matrix[static_cast<std::size_t>(i) * dim + j] = static_cast<float>(acc);
    }
  }
  shift.offset.resize(static_cast<std::size_t>(dim));
  for (auto& v : shift.offset) v = static_cast<float>(rng.normal(0.0, offset_sd));
  return shift;
}

DomainPair generate(const GeneratorConfig& cfg) {
  validate_config(cfg);
  Rng rng(cfg.seed);
  const int d = cfg.input_dim;
  const int m = cfg.num_identities;
  const int c = cfg.cameras_per_domain;

  // Fixed draw order: source prototypes, target prototypes, source shared
  // camera offsets, source per-identity camera jitter (identity-major),
  // target shared camera offsets, target per-identity camera jitter, then
  // per-sample noise in emission order.
  std::vector<std::vector<double>> src_proto(static_cast<std::size_t>(m));
  for (auto& p : src_proto) {
    p = gaussian_matrix(1, d, rng, cfg.identity_separation);
  }
  std::vector<std::vector<double>> tgt_proto(static_cast<std::size_t>(m));
  for (auto& p : tgt_proto) {
    p = gaussian_matrix(1, d, rng, cfg.identity_separation);
  }
  std::vector<std::vector<double>> src_cam(static_cast<std::size_t>(c));
  for (auto& j : src_cam) j = gaussian_matrix(1, d, rng, cfg.camera_shared_sd);
  std::vector<std::vector<double>> src_jit(static_cast<std::size_t>(m) * c);
  for (auto& j : src_jit) j = gaussian_matrix(1, d, rng, cfg.camera_jitter_sd);
  std::vector<std::vector<double>> tgt_cam(static_cast<std::size_t>(c));
  for (auto& j : tgt_cam) j = gaussian_matrix(1, d, rng, cfg.camera_shared_sd);
  std::vector<std::vector<double>> tgt_jit(static_cast<std::size_t>(m) * c);
  for (auto& j : tgt_jit) j = gaussian_matrix(1, d, rng, cfg.camera_jitter_sd);

  // The domain shift warps the fully assembled target sample (prototype plus
  // viewpoint offset plus noise), the way a different sensor warps everything
  // it sees. Relative geometry inside the target domain is preserved, so the
  // warp costs a source-trained encoder accuracy without changing how
  // clusterable the target is in its own space.
  auto emit = [&](Domain dom, int local_id, int identity, int camera,
                  const std::vector<double>& proto,
                  const std::vector<std::vector<double>>& cams,
                  const std::vector<std::vector<double>>& jits,
                  const DomainShift* warp) {
    SampleRecord r;
    r.identity = identity;
    r.camera = camera;
    r.domain = dom;
    const auto& cam = cams[static_cast<std::size_t>(camera)];
    const auto& jit = jits[static_cast<std::size_t>(local_id) * c +
                           static_cast<std::size_t>(camera)];
    std::vector<double> raw(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
      raw[static_cast<std::size_t>(k)] = proto[static_cast<std::size_t>(k)] +
                                         cam[static_cast<std::size_t>(k)] +
                                         jit[static_cast<std::size_t>(k)] +
                                         rng.normal(0.0, cfg.noise_sd);
    }
    if (warp != nullptr) {
      r.features = apply_shift(*warp, raw, d);
    } else {
      r.features.resize(static_cast<std::size_t>(d));
      for (int k = 0; k < d; ++k) {
        r.features[static_cast<std::size_t>(k)] =
            static_cast<float>(raw[static_cast<std::size_t>(k)]);
      }
    }
    return r;
  };

  auto fill_split = [&](SplitDataset& ds, Domain dom, int id_base) {
    ds.domain = dom;
    ds.num_identities = m;
    const bool src = dom == Domain::kSource;
    const auto& protos = src ? src_proto : tgt_proto;
    const auto& cams = src ? src_cam : tgt_cam;
    const auto& jits = src ? src_jit : tgt_jit;
    const DomainShift* warp = src ? nullptr : &cfg.domain_shift;
    for (int i = 0; i < m; ++i) {
      const auto& proto = protos[static_cast<std::size_t>(i)];
      for (int s = 0; s < cfg.samples_per_identity; ++s) {
        ds.train.push_back(emit(dom, i, id_base + i, (i + s) % c, proto, cams, jits, warp));
      }
      for (int s = 0; s < cfg.query_per_identity; ++s) {
        ds.query.push_back(emit(dom, i, id_base + i, (i + s) % c, proto, cams, jits, warp));
      }
      for (int s = 0; s < cfg.gallery_per_identity; ++s) {
        ds.gallery.push_back(emit(dom, i, id_base + i, (i + s + 1) % c, proto, cams, jits, warp));
      }
    }
  };

  DomainPair out;
  fill_split(out.source, Domain::kSource, 0);
  fill_split(out.target, Domain::kTarget, m);
  return out;
}

std::vector<int> pk_sample(const std::vector<SampleRecord>& records,
                           const std::vector<int>& labels, int p, int k, Rng& rng) {
  check(labels.size() == records.size(), "pk_sample: labels/records size mismatch");
  check(p >= 1 && k >= 1, "pk_sample: P and K must be >= 1");

  std::map<int, std::vector<int>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_label[labels[i]].push_back(static_cast<int>(i));
  }
  check(static_cast<int>(by_label.size()) >= p,
        "pk_sample: fewer than P distinct labels available");

  std::vector<int> distinct;
  distinct.reserve(by_label.size());
  for (const auto& [label, idx] : by_label) distinct.push_back(label);
  rng.shuffle(distinct);
  distinct.resize(static_cast<std::size_t>(p));

  std::vector<int> batch;
  batch.reserve(static_cast<std::size_t>(p) * k);
  for (int label : distinct) {
    std::vector<int> pool = by_label[label];
    if (static_cast<int>(pool.size()) >= k) {
      rng.shuffle(pool);
      batch.insert(batch.end(), pool.begin(), pool.begin() + k);
    } else {
      batch.insert(batch.end(), pool.begin(), pool.end());
      for (int extra = static_cast<int>(pool.size()); extra < k; ++extra) {
        batch.push_back(pool[static_cast<std::size_t>(rng.index(pool.size()))]);
      }
    }
  }
  rng.shuffle(batch);
  return batch;
}

void save_dataset(const std::string& path, const SplitDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  check(out.is_open(), "save_dataset: cannot open '" + path + "' for writing");
  const int d = ds.dim();
  out << "meb-dataset v1\n";
  out << "domain=" << domain_name(ds.domain) << "\n";
  out << "dim=" << d << "\n";
  out << "identities=" << ds.num_identities << "\n";
  out << "train=" << ds.train.size() << "\n";
  out << "query=" << ds.query.size() << "\n";
  out << "gallery=" << ds.gallery.size() << "\n";
  auto write_rows = [&](const std::vector<SampleRecord>& recs, const char* split_name) {
    for (const auto& r : recs) {
      check(static_cast<int>(r.features.size()) == d,
            "save_dataset: inconsistent feature dimension");
      out << split_name << ',' << r.identity << ',' << r.camera;
      for (float f : r.features) out << ',' << format_float(f);
      out << '\n';
    }
  };
  write_rows(ds.train, "train");
  write_rows(ds.query, "query");
  write_rows(ds.gallery, "gallery");
  out.flush();
  check(out.good(), "save_dataset: write to '" + path + "' failed");
}

SplitDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.is_open(), "load_dataset: cannot open '" + path + "'");

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);

  auto where = [&](std::size_t lineno) {
    return path + ":line " + std::to_string(lineno + 1);
  };
  auto need_line = [&](std::size_t lineno) -> const std::string& {
    if (lineno >= lines.size()) {
      throw Error(path + ": unexpected end of file (wanted line " +
                  std::to_string(lineno + 1) + ")");
    }
    return lines[lineno];
  };
  auto header_value = [&](std::size_t lineno, const std::string& key) {
    const std::string& l = need_line(lineno);
    const std::string prefix = key + "=";
    if (l.rfind(prefix, 0) != 0) {
      throw Error(where(lineno) + ": expected '" + key + "=...', got '" + l + "'");
    }
    return l.substr(prefix.size());
  };

  if (std::string(trim(need_line(0))) != "meb-dataset v1") {
    throw Error(where(0) + ": bad magic, expected 'meb-dataset v1'");
  }

  SplitDataset ds;
  const std::string domain_str = header_value(1, "domain");
  if (domain_str == "source") {
    ds.domain = Domain::kSource;
  } else if (domain_str == "target") {
    ds.domain = Domain::kTarget;
  } else {
    throw Error(where(1) + ": unknown domain '" + domain_str + "'");
  }
  const int d = parse_int(header_value(2, "dim"), where(2));
  if (d < 2) throw Error(where(2) + ": dim must be at least 2");
  ds.num_identities = parse_int(header_value(3, "identities"), where(3));
  const int n_train = parse_int(header_value(4, "train"), where(4));
  const int n_query = parse_int(header_value(5, "query"), where(5));
  const int n_gallery = parse_int(header_value(6, "gallery"), where(6));
  if (n_train < 0 || n_query < 0 || n_gallery < 0) {
    throw Error(path + ": negative split count in header");
  }

  const std::size_t total = static_cast<std::size_t>(n_train) + n_query + n_gallery;
  std::size_t lineno = 7;
  for (std::size_t row = 0; row < total; ++row, ++lineno) {
    const std::string& l = need_line(lineno);
    const auto fields = split(l, ',');
    if (static_cast<int>(fields.size()) != 3 + d) {
      throw Error(where(lineno) + ": expected " + std::to_string(3 + d) +
                  " fields, got " + std::to_string(fields.size()));
    }
    SampleRecord r;
    r.domain = ds.domain;
    r.identity = parse_int(fields[1], where(lineno));
    r.camera = parse_int(fields[2], where(lineno));
    if (r.identity < 0 || r.camera < 0) {
      throw Error(where(lineno) + ": identity and camera must be >= 0");
    }
    r.features.resize(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
      r.features[static_cast<std::size_t>(k)] =
          parse_float(fields[static_cast<std::size_t>(3 + k)], where(lineno));
    }
    const std::string_view split_name = fields[0];
    if (split_name == "train") {
      ds.train.push_back(std::move(r));
    } else if (split_name == "query") {
      ds.query.push_back(std::move(r));
    } else if (split_name == "gallery") {
      ds.gallery.push_back(std::move(r));
    } else {
      throw Error(where(lineno) + ": unknown split '" + std::string(split_name) + "'");
    }
  }
  for (std::size_t extra = lineno; extra < lines.size(); ++extra) {
    if (!trim(lines[extra]).empty()) {
      throw Error(where(extra) + ": unexpected trailing content");
    }
  }

  if (static_cast<int>(ds.train.size()) != n_train ||
      static_cast<int>(ds.query.size()) != n_query ||
      static_cast<int>(ds.gallery.size()) != n_gallery) {
    throw Error(path + ": row counts by split do not match the header");
  }

  // Query identities must be retrievable from the gallery.
  std::set<int> gallery_ids;
  for (const auto& r : ds.gallery) gallery_ids.insert(r.identity);
  for (const auto& r : ds.query) {
    if (gallery_ids.find(r.identity) == gallery_ids.end()) {
      throw Error(path + ": query identity " + std::to_string(r.identity) +
                  " is missing from the gallery");
    }
  }
  return ds;
}

num::Tensor stack_features(const std::vector<SampleRecord>& records,
                           const std::vector<int>& idx) {
  check(!idx.empty(), "stack_features: empty index list");
  const int d = static_cast<int>(records.front().features.size());
  std::vector<float> data;
  data.reserve(idx.size() * static_cast<std::size_t>(d));
  for (int i : idx) {
    check(i >= 0 && i < static_cast<int>(records.size()),
          "stack_features: record index out of range");
    const auto& f = records[static_cast<std::size_t>(i)].features;
    check(static_cast<int>(f.size()) == d, "stack_features: inconsistent dims");
    data.insert(data.end(), f.begin(), f.end());
  }
  return num::Tensor::from_data({static_cast<int>(idx.size()), d}, std::move(data));
}

num::Tensor stack_features(const std::vector<SampleRecord>& records) {
  std::vector<int> idx(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) idx[i] = static_cast<int>(i);
  return stack_features(records, idx);
}

std::vector<int> identity_labels(const std::vector<SampleRecord>& records) {
  std::vector<int> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out[i] = records[i].identity;
  return out;
}

}  // namespace meb::data
