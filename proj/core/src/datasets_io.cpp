#include "forge/datasets_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "forge/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace forge::io {
namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& where) {
  if (s.empty()) throw FormatError("missing value in " + where);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw FormatError("non-numeric value '" + s + "' in " + where);
  if (!std::isfinite(v))
    throw FormatError("non-finite value in " + where);
  return v;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char out[24];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

json scm_to_json(const prior::ScmSpec& scm) {
  json j;
  j["width"] = scm.width;
  j["depth"] = scm.depth;
  auto slices = [&](const std::vector<MatrixD>& ms) {
    json arr = json::array();
    for (const auto& m : ms) {
      json rows = json::array();
      for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
      }
      arr.push_back(std::move(rows));
    }
    return arr;
  };
  j["weights"] = slices(scm.weights);
  j["masks"] = slices(scm.masks);
  json acts = json::array();
  for (auto a : scm.activations) acts.push_back(prior::activation_name(a));
  j["activations"] = std::move(acts);
  j["protected_row"] = scm.protected_row;
  j["protected_threshold"] = scm.protected_threshold;
  j["protected_values"] = {scm.protected_value_lo, scm.protected_value_hi};
  json locs = json::array();
  for (auto [layer, row] : scm.feature_locations)
    locs.push_back(json::array({layer, row}));
  j["feature_locations"] = std::move(locs);
  j["outcome_row"] = scm.outcome_row;
  j["outcome_layer"] = scm.depth - 1;
  j["outcome_threshold"] = scm.outcome_threshold;
  j["noise_std"] = scm.noise_std;
  return j;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw FormatError("csv is missing column '" + name + "'");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + " is empty");
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != table.header.size())
      throw FormatError(path + ": row has wrong cell count");
    table.rows.push_back(std::move(cells));
  }
  return table;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size())
    throw DimensionError("write_csv header/column mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? ',' : '\n');
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& col : columns)
    if (col.size() != rows) throw DimensionError("write_csv ragged columns");
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < columns.size(); ++c)
      out << format_double(columns[c][r])
          << (c + 1 < columns.size() ? ',' : '\n');
}

DatasetManifest read_manifest(const std::string& path) {
  const json j = read_json(path);
  DatasetManifest m;
  try {
    m.observational_csv = j.at("observational_csv").get<std::string>();
    m.protected_column = j.at("protected_column").get<std::string>();
    m.target_column = j.at("target_column").get<std::string>();
    if (j.contains("counterfactual_csv"))
      m.counterfactual_csv = j["counterfactual_csv"].get<std::string>();
    if (j.contains("fair_noise_csv"))
      m.fair_noise_csv = j["fair_noise_csv"].get<std::string>();
    if (j.contains("folds")) m.folds = j["folds"].get<int>();
    for (const auto& col : j.at("columns")) {
      ManifestColumn c;
      c.name = col.at("name").get<std::string>();
      const std::string type = col.at("type").get<std::string>();
      if (type == "numeric") c.type = ColumnType::Numeric;
      else if (type == "binary") c.type = ColumnType::Binary;
      else if (type == "categorical") c.type = ColumnType::Categorical;
      else throw FormatError("unknown column type '" + type + "'");
      m.columns.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (m.folds < 2) throw ConfigError("manifest folds must be at least 2");
  return m;
}

namespace {

// Column-encoding plan shared by the observational and counterfactual files
// so both worlds land in identical layouts.
struct EncodingPlan {
  // Encoded feature layout: (source column, value-for-onehot or "", name).
  struct Slot {
    std::string source;
    std::string category;  // empty for pass-through numeric
    std::string name;
  };
  std::vector<Slot> slots;
  int protected_slot = 0;  // position of A in the final combined layout
  std::map<std::string, int> protected_mapping;
  std::map<std::string, int> target_mapping;
};

std::map<std::string, int> binary_mapping(const CsvTable& table,
                                          std::size_t col,
                                          const std::string& name) {
  std::set<std::string> values;
  for (const auto& row : table.rows) {
    if (row[col].empty())
      throw FormatError("missing value in column '" + name + "'");
    values.insert(row[col]);
  }
  if (values.size() != 2)
    throw FormatError("column '" + name +
                      "' must carry exactly two distinct values");
  std::map<std::string, int> mapping;
  int next = 0;
  for (const auto& v : values) mapping[v] = next++;
  return mapping;
}

TabularDataset encode_with_plan(const CsvTable& table,
                                const DatasetManifest& manifest,
                                const EncodingPlan& plan) {
  const std::size_t n = table.rows.size();
  if (n == 0) throw FormatError("dataset has no rows");
  TabularDataset d;
  d.a.resize(n);
  d.y.resize(n);
  d.x = MatrixD(n, plan.slots.size());
  d.protected_index = plan.protected_slot;

  const std::size_t prot_col = table.column(manifest.protected_column);
  const std::size_t target_col = table.column(manifest.target_column);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    auto pit = plan.protected_mapping.find(row[prot_col]);
    if (pit == plan.protected_mapping.end())
      throw FormatError("unseen protected value '" + row[prot_col] + "'");
    d.a[i] = static_cast<std::int8_t>(pit->second);
    auto tit = plan.target_mapping.find(row[target_col]);
    if (tit == plan.target_mapping.end())
      throw FormatError("unseen target value '" + row[target_col] + "'");
    d.y[i] = static_cast<std::int8_t>(tit->second);
    for (std::size_t s = 0; s < plan.slots.size(); ++s) {
      const auto& slot = plan.slots[s];
      const std::string& cell = row[table.column(slot.source)];
      if (slot.category.empty()) {
        d.x(i, s) = parse_double(cell, "column '" + slot.source + "'");
      } else {
        if (cell.empty())
          throw FormatError("missing value in column '" + slot.source + "'");
        d.x(i, s) = cell == slot.category ? 1.0 : 0.0;
      }
    }
  }

  // Final presentation order: A at protected_slot among the encoded columns.
  d.column_names.clear();
  for (std::size_t s = 0, out = 0; out <= plan.slots.size(); ++out) {
    if (static_cast<int>(out) == plan.protected_slot)
      d.column_names.push_back(manifest.protected_column);
    else
      d.column_names.push_back(plan.slots[s++].name);
  }
  d.validate();
  return d;
}

}  // namespace

LoadedDataset load_manifest(const DatasetManifest& manifest,
                            const std::string& base_dir) {
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    if (path.is_absolute() || base_dir.empty()) return p;
    return (fs::path(base_dir) / path).string();
  };

  const std::string obs_path = resolve(manifest.observational_csv);
  const CsvTable obs = read_csv(obs_path);

  EncodingPlan plan;
  plan.protected_mapping =
      binary_mapping(obs, obs.column(manifest.protected_column),
                     manifest.protected_column);
  plan.target_mapping = binary_mapping(
      obs, obs.column(manifest.target_column), manifest.target_column);

  // Slot layout follows the manifest's column order; the protected column
  // keeps its declared position among the features.
  int slot_index = 0;
  bool protected_seen = false;
  for (const auto& col : manifest.columns) {
    if (col.name == manifest.target_column)
      throw ConfigError("target column may not be listed as a feature");
    if (col.name == manifest.protected_column) {
      plan.protected_slot = slot_index;
      protected_seen = true;
      continue;
    }
    const std::size_t c = obs.column(col.name);
    if (col.type == ColumnType::Categorical) {
      std::set<std::string> values;
      for (const auto& row : obs.rows) {
        if (row[c].empty())
          throw FormatError("missing value in column '" + col.name + "'");
        values.insert(row[c]);
      }
      for (const auto& v : values) {
        plan.slots.push_back({col.name, v, col.name + "=" + v});
        ++slot_index;
      }
    } else {
      plan.slots.push_back({col.name, "", col.name});
      ++slot_index;
    }
  }
  if (!protected_seen) plan.protected_slot = 0;

  LoadedDataset loaded;
  loaded.observational = encode_with_plan(obs, manifest, plan);
  loaded.protected_mapping = plan.protected_mapping;
  loaded.target_mapping = plan.target_mapping;
  loaded.digest = file_digest(obs_path);

  if (manifest.counterfactual_csv) {
    const CsvTable cf = read_csv(resolve(*manifest.counterfactual_csv));
    if (cf.rows.size() != obs.rows.size())
      throw FormatError("counterfactual file is not row-aligned");
    loaded.counterfactual = encode_with_plan(cf, manifest, plan);
  }
  if (manifest.fair_noise_csv) {
    const CsvTable noise = read_csv(resolve(*manifest.fair_noise_csv));
    if (noise.rows.size() != obs.rows.size())
      throw FormatError("fair-noise file is not row-aligned");
    for (std::size_t c = 0; c < noise.header.size(); ++c) {
      std::vector<double> col(noise.rows.size());
      for (std::size_t i = 0; i < noise.rows.size(); ++i)
        col[i] = parse_double(noise.rows[i][c],
                              "noise column '" + noise.header[c] + "'");
      loaded.fair_noise[noise.header[c]] = std::move(col);
    }
  }
  return loaded;
}

std::vector<FoldSplit> kfold(std::size_t n_rows, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold needs k >= 2");
  if (n_rows < static_cast<std::size_t>(k))
    throw ConfigError("kfold needs at least k rows");
  std::vector<std::size_t> perm(n_rows);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, 0xf01d));
  for (std::size_t i = n_rows; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.uniform_index(i)]);

  std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    const std::size_t lo = static_cast<std::size_t>(f) * n_rows / k;
    const std::size_t hi = static_cast<std::size_t>(f + 1) * n_rows / k;
    folds[f].fold = f;
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (i >= lo && i < hi)
        folds[f].validation_ids.push_back(perm[i]);
      else
        folds[f].train_ids.push_back(perm[i]);
    }
    std::sort(folds[f].validation_ids.begin(), folds[f].validation_ids.end());
    std::sort(folds[f].train_ids.begin(), folds[f].train_ids.end());
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'F', 'O', 'R', 'G', 'E', 'C', 'K', 'P'};

json model_config_to_json(const pfn::ModelConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"num_layers", c.num_layers},
              {"num_heads", c.num_heads},
              {"ff_dim", c.ff_dim},
              {"max_features", c.max_features},
              {"max_rows", c.max_rows},
              {"learning_rate", c.learning_rate},
              {"batch_datasets", c.batch_datasets},
              {"steps", c.steps},
              {"epochs", c.epochs},
              {"seed", c.seed}};
}

pfn::ModelConfig model_config_from_json(const json& j) {
  pfn::ModelConfig c;
  try {
    c.embed_dim = j.at("embed_dim").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.max_features = j.at("max_features").get<int>();
    c.max_rows = j.at("max_rows").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_datasets = j.at("batch_datasets").get<int>();
    c.steps = j.at("steps").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const pfn::Checkpoint& checkpoint,
                     const std::string& path) {
  json header;
  header["config"] = model_config_to_json(checkpoint.config);
  header["provenance"] = {{"steps_completed", checkpoint.steps_completed},
                          {"final_loss", checkpoint.final_loss},
                          {"prior_digest", checkpoint.prior_digest},
                          {"adam_t", checkpoint.adam_t}};
  json tensors = json::array();
  std::size_t total = 0;
  auto list = [&](const pfn::NetParams<float>& p, const char* prefix) {
    p.for_each([&](const pfn::Tensor<float>& t) {
      tensors.push_back(json{{"name", std::string(prefix) + t.name},
                             {"rows", t.r},
                             {"cols", t.c}});
      total += t.size();
    });
  };
  list(checkpoint.params, "param.");
  list(checkpoint.adam_m, "adam_m.");
  list(checkpoint.adam_v, "adam_v.");
  header["tensors"] = std::move(tensors);

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version =
      static_cast<std::uint32_t>(checkpoint.format_version);
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(len));
  auto dump = [&](const pfn::NetParams<float>& p) {
    p.for_each([&](const pfn::Tensor<float>& t) {
      out.write(reinterpret_cast<const char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(float)));
    });
  };
  dump(checkpoint.params);
  dump(checkpoint.adam_m);
  dump(checkpoint.adam_v);
  if (!out) throw IoError("failed writing " + path);
}

pfn::Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw FormatError("bad checkpoint magic");
  std::uint32_t version = 0;
  if (!in.read(reinterpret_cast<char*>(&version), sizeof(version)))
    throw FormatError("bad checkpoint header");
  if (version != pfn::kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len)))
    throw FormatError("bad checkpoint header");
  std::string header_str(len, '\0');
  if (!in.read(header_str.data(), static_cast<std::streamsize>(len)))
    throw FormatError("checkpoint header truncated");

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }

  pfn::Checkpoint ckpt;
  ckpt.format_version = static_cast<int>(version);
  ckpt.config = model_config_from_json(header.at("config"));
  const json& prov = header.at("provenance");
  ckpt.steps_completed = prov.at("steps_completed").get<std::int64_t>();
  ckpt.final_loss = prov.at("final_loss").get<double>();
  ckpt.prior_digest = prov.at("prior_digest").get<std::string>();
  ckpt.adam_t = prov.at("adam_t").get<std::int64_t>();

  ckpt.params = pfn::NetParams<float>::shaped(ckpt.config);
  ckpt.adam_m = pfn::NetParams<float>::shaped(ckpt.config);
  ckpt.adam_v = pfn::NetParams<float>::shaped(ckpt.config);

  // The tensor index must match the architecture exactly.
  std::vector<json> expected;
  auto expect = [&](const pfn::NetParams<float>& p, const char* prefix) {
    p.for_each([&](const pfn::Tensor<float>& t) {
      expected.push_back(json{{"name", std::string(prefix) + t.name},
                              {"rows", t.r},
                              {"cols", t.c}});
    });
  };
  expect(ckpt.params, "param.");
  expect(ckpt.adam_m, "adam_m.");
  expect(ckpt.adam_v, "adam_v.");
  const json& tensors = header.at("tensors");
  if (tensors.size() != expected.size())
    throw FormatError("checkpoint tensor index does not match architecture");
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (tensors[i] != expected[i])
      throw FormatError("checkpoint tensor mismatch at index " +
                        std::to_string(i));

  auto slurp = [&](pfn::NetParams<float>& p) {
    p.for_each([&](pfn::Tensor<float>& t) {
      if (!in.read(reinterpret_cast<char*>(t.v.data()),
                   static_cast<std::streamsize>(t.v.size() * sizeof(float))))
        throw FormatError("checkpoint truncated: tensor " + t.name +
                          " is incomplete");
    });
  };
  slurp(ckpt.params);
  slurp(ckpt.adam_m);
  slurp(ckpt.adam_v);
  char extra;
  if (in.read(&extra, 1))
    throw FormatError("checkpoint has trailing bytes");
  return ckpt;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

json report_to_json(const metrics::MetricsReport& r) {
  json j{{"dataset_id", r.dataset_id},
         {"method", r.method},
         {"ate", r.ate},
         {"ae", {{"median", r.ae.median},
                 {"mean", r.ae.mean},
                 {"max", r.ae.max},
                 {"histogram", r.ae.histogram}}},
         {"dsp", r.dsp},
         {"auc", r.auc},
         {"error", r.error},
         {"has_counterfactual", r.has_counterfactual},
         {"uses_causal_information", r.uses_causal_information}};
  if (r.auc_fair) j["auc_fair"] = *r.auc_fair;
  return j;
}

metrics::MetricsReport report_from_json(const json& j) {
  metrics::MetricsReport r;
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.ate = j.at("ate").get<double>();
  r.ae.median = j.at("ae").at("median").get<double>();
  r.ae.mean = j.at("ae").at("mean").get<double>();
  r.ae.max = j.at("ae").at("max").get<double>();
  const auto& hist = j.at("ae").at("histogram");
  for (std::size_t i = 0; i < r.ae.histogram.size(); ++i)
    r.ae.histogram[i] = hist.at(i).get<std::uint64_t>();
  r.dsp = j.at("dsp").get<double>();
  r.auc = j.at("auc").get<double>();
  r.error = j.at("error").get<double>();
  r.has_counterfactual = j.at("has_counterfactual").get<bool>();
  r.uses_causal_information = j.at("uses_causal_information").get<bool>();
  if (j.contains("auc_fair")) r.auc_fair = j["auc_fair"].get<double>();
  return r;
}

}  // namespace

void emit_report(const std::vector<metrics::MetricsReport>& reports,
                 const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "plot_data");
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  write_json(arr, (fs::path(out_dir) / "report.json").string());

  std::ofstream points((fs::path(out_dir) / "plot_data" / "tradeoff_points.csv"));
  points << "method,dataset,fairness_cost,error,uses_causal_information\n";
  std::ofstream box((fs::path(out_dir) / "plot_data" / "ate_box.csv"));
  box << "method,dataset,ate\n";
  std::ofstream hist((fs::path(out_dir) / "plot_data" / "ae_hist.csv"));
  hist << "method,dataset,bin_lo,bin_hi,count\n";
  for (const auto& r : reports) {
    points << r.method << ',' << r.dataset_id << ','
           << format_double(std::abs(r.ate)) << ',' << format_double(r.error)
           << ',' << (r.uses_causal_information ? 1 : 0) << '\n';
    box << r.method << ',' << r.dataset_id << ',' << format_double(r.ate)
        << '\n';
    for (std::size_t b = 0; b < r.ae.histogram.size(); ++b)
      hist << r.method << ',' << r.dataset_id << ','
           << format_double(0.05 * static_cast<double>(b)) << ','
           << format_double(0.05 * static_cast<double>(b + 1)) << ','
           << r.ae.histogram[b] << '\n';
  }
}

std::vector<metrics::MetricsReport> read_report(const std::string& json_path) {
  const json arr = read_json(json_path);
  std::vector<metrics::MetricsReport> out;
  for (const auto& j : arr) out.push_back(report_from_json(j));
  return out;
}

// ---------------------------------------------------------------------------
// Prior samples and bundles

void write_prior_sample(const prior::PriorSample& sample,
                        const std::string& dir, bool keep_noise) {
  fs::create_directories(dir);
  const auto& d = sample.dataset;
  std::vector<std::string> header;
  std::vector<std::vector<double>> cols;
  header.push_back("A");
  cols.emplace_back(d.a.begin(), d.a.end());
  for (std::size_t c = 0; c < d.n_features(); ++c) {
    header.push_back(d.column_names[c + 1]);
    std::vector<double> col(d.n_rows());
    for (std::size_t i = 0; i < d.n_rows(); ++i) col[i] = d.x(i, c);
    cols.push_back(std::move(col));
  }
  header.push_back("y");
  cols.emplace_back(d.y.begin(), d.y.end());
  write_csv((fs::path(dir) / "biased.csv").string(), header, cols);

  write_csv((fs::path(dir) / "fair_targets.csv").string(), {"y_fair"},
            {{sample.y_fair.begin(), sample.y_fair.end()}});

  json j = scm_to_json(sample.scm);
  if (keep_noise) {
    json exo = json::array();
    for (std::size_t i = 0; i < sample.noise.exogenous.rows(); ++i) {
      json row = json::array();
      for (std::size_t c = 0; c < sample.noise.exogenous.cols(); ++c)
        row.push_back(sample.noise.exogenous(i, c));
      exo.push_back(std::move(row));
    }
    json eps = json::array();
    for (const auto& m : sample.noise.noise) {
      json mat = json::array();
      for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        mat.push_back(std::move(row));
      }
      eps.push_back(std::move(mat));
    }
    j["noise_record"] = {{"exogenous", std::move(exo)}, {"noise", std::move(eps)}};
  }
  write_json(j, (fs::path(dir) / "scm.json").string());
}

namespace {

void write_dataset_csv(const TabularDataset& d, const std::string& path) {
  std::vector<std::string> header;
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0, src = 0; j < d.column_names.size(); ++j) {
    header.push_back(d.column_names[j]);
    std::vector<double> col(d.n_rows());
    if (j == static_cast<std::size_t>(d.protected_index)) {
      for (std::size_t i = 0; i < d.n_rows(); ++i) col[i] = d.a[i];
    } else {
      for (std::size_t i = 0; i < d.n_rows(); ++i) col[i] = d.x(i, src);
      ++src;
    }
    cols.push_back(std::move(col));
  }
  header.push_back("y");
  cols.emplace_back(d.y.begin(), d.y.end());
  write_csv(path, header, cols);
}

TabularDataset read_dataset_csv(const std::string& path, int protected_index) {
  const CsvTable table = read_csv(path);
  if (table.header.empty() || table.header.back() != "y")
    throw FormatError(path + ": expected trailing 'y' column");
  TabularDataset d;
  const std::size_t n = table.rows.size();
  const std::size_t width = table.header.size() - 1;  // sans y
  d.protected_index = protected_index;
  d.a.resize(n);
  d.y.resize(n);
  d.x = MatrixD(n, width - 1);
  for (std::size_t j = 0; j < width; ++j)
    d.column_names.push_back(table.header[j]);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t src = 0;
    for (std::size_t j = 0; j < width; ++j) {
      const double v = parse_double(table.rows[i][j], path);
      if (j == static_cast<std::size_t>(protected_index))
        d.a[i] = static_cast<std::int8_t>(v);
      else
        d.x(i, src++) = v;
    }
    d.y[i] =
        static_cast<std::int8_t>(parse_double(table.rows[i][width], path));
  }
  d.validate();
  return d;
}

}  // namespace

void write_bundle(const cases::CaseBundle& bundle, const std::string& dir) {
  fs::create_directories(dir);
  write_dataset_csv(bundle.observational, (fs::path(dir) / "obs.csv").string());
  write_dataset_csv(bundle.counterfactual, (fs::path(dir) / "cf.csv").string());
  write_csv((fs::path(dir) / "fair_targets.csv").string(), {"y_fair"},
            {{bundle.y_fair.begin(), bundle.y_fair.end()}});
  json j;
  j["id"] = bundle.id;
  j["group"] = cases::group_name(bundle.config.group);
  j["config"] = {{"causal_weight", bundle.config.causal_weight},
                 {"noise_std", bundle.config.noise_std},
                 {"n", bundle.config.n},
                 {"seed", bundle.config.seed}};
  j["base_ate"] = bundle.base_ate;
  j["outcome_threshold"] = bundle.outcome_threshold;
  j["prior_violating"] = bundle.prior_violating;
  j["fair_observables"] = bundle.fair_observables;
  json fv = json::object();
  for (const auto& [name, col] : bundle.fair_variables) fv[name] = col;
  j["fair_variables"] = std::move(fv);
  write_json(j, (fs::path(dir) / "ground_truth.json").string());
}

cases::CaseBundle read_bundle(const std::string& dir) {
  const json j = read_json((fs::path(dir) / "ground_truth.json").string());
  cases::CaseBundle bundle;
  try {
    bundle.id = j.at("id").get<std::string>();
    bundle.config.group =
        cases::group_from_name(j.at("group").get<std::string>());
    bundle.config.causal_weight = j.at("config").at("causal_weight").get<double>();
    bundle.config.noise_std = j.at("config").at("noise_std").get<double>();
    bundle.config.n = j.at("config").at("n").get<int>();
    bundle.config.seed = j.at("config").at("seed").get<std::uint64_t>();
    bundle.base_ate = j.at("base_ate").get<double>();
    bundle.outcome_threshold = j.at("outcome_threshold").get<double>();
    bundle.prior_violating = j.at("prior_violating").get<bool>();
    for (const auto& name : j.at("fair_observables"))
      bundle.fair_observables.push_back(name.get<std::string>());
    for (const auto& [name, col] : j.at("fair_variables").items())
      bundle.fair_variables[name] = col.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(dir + "/ground_truth.json: " + e.what());
  }
  bundle.observational =
      read_dataset_csv((fs::path(dir) / "obs.csv").string(), 0);
  bundle.counterfactual =
      read_dataset_csv((fs::path(dir) / "cf.csv").string(), 0);
  const CsvTable fair = read_csv((fs::path(dir) / "fair_targets.csv").string());
  for (const auto& row : fair.rows)
    bundle.y_fair.push_back(
        static_cast<std::int8_t>(parse_double(row[0], "fair_targets.csv")));
  return bundle;
}

// ---------------------------------------------------------------------------
// Config files

prior::PriorConfig load_prior_config(const std::string& path) {
  const json j = read_json(path);
  prior::PriorConfig c;
  try {
    c.num_exogenous = j.at("num_exogenous").get<int>();
    c.depth = j.at("depth").get<int>();
    c.num_features = j.at("num_features").get<int>();
    c.num_samples = j.at("num_samples").get<int>();
    c.sparsity_log_range = {j.at("sparsity_log_range").at(0).get<double>(),
                            j.at("sparsity_log_range").at(1).get<double>()};
    c.noise_std_range = {j.at("noise_std_range").at(0).get<double>(),
                         j.at("noise_std_range").at(1).get<double>()};
    c.nonlinearity_set.clear();
    for (const auto& name : j.at("nonlinearities"))
      c.nonlinearity_set.push_back(
          prior::activation_from_name(name.get<std::string>()));
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("sample_range"))
      c.sample_range = {j["sample_range"].at(0).get<int>(),
                        j["sample_range"].at(1).get<int>()};
    if (j.contains("feature_range"))
      c.feature_range = {j["feature_range"].at(0).get<int>(),
                         j["feature_range"].at(1).get<int>()};
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  c.validate();
  return c;
}

void save_prior_config(const prior::PriorConfig& c, const std::string& path) {
  json j;
  j["num_exogenous"] = c.num_exogenous;
  j["depth"] = c.depth;
  j["num_features"] = c.num_features;
  j["num_samples"] = c.num_samples;
  j["sparsity_log_range"] = {c.sparsity_log_range.first,
                             c.sparsity_log_range.second};
  j["noise_std_range"] = {c.noise_std_range.first, c.noise_std_range.second};
  json acts = json::array();
  for (auto a : c.nonlinearity_set) acts.push_back(prior::activation_name(a));
  j["nonlinearities"] = std::move(acts);
  j["seed"] = c.seed;
  if (c.sample_range.second > 0)
    j["sample_range"] = {c.sample_range.first, c.sample_range.second};
  if (c.feature_range.second > 0)
    j["feature_range"] = {c.feature_range.first, c.feature_range.second};
  write_json(j, path);
}

pfn::ModelConfig load_model_config(const std::string& path) {
  return model_config_from_json(read_json(path));
}

void save_model_config(const pfn::ModelConfig& config,
                       const std::string& path) {
  write_json(model_config_to_json(config), path);
}

ImportedPredictions read_predictions_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  ImportedPredictions preds;
  const std::size_t obs = table.column("prob_obs");
  std::optional<std::size_t> cf;
  for (std::size_t i = 0; i < table.header.size(); ++i)
    if (table.header[i] == "prob_cf") cf = i;
  for (const auto& row : table.rows) {
    preds.probs_obs.push_back(parse_double(row[obs], path));
    if (cf) preds.probs_cf.push_back(parse_double(row[*cf], path));
  }
  return preds;
}

}  // namespace forge::io
