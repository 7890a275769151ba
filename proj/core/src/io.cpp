#include "gpdeg/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

#include "gpdeg/errors.hpp"

namespace gpdeg::io {

using nlohmann::json;

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view text) {
  if (text == "nan" || text == "NaN" || text == "NA") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf" || text == "Inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf" || text == "-Inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  const char* first = text.data();
  if (!text.empty() && text.front() == '+') ++first;
  auto res = std::from_chars(first, text.data() + text.size(), x);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw DataError("not a number: '" + std::string(text) + "'");
  return x;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) throw DataError("line " + std::to_string(line) + ": quote inside unquoted field");
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        [[fallthrough]];
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line) + ": unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("failed writing " + path.string());
}

namespace {

std::string join_row(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  line += '\n';
  return line;
}

std::size_t header_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json optional_json(const std::optional<double>& x) { return x ? number_or_null(*x) : json(nullptr); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

// Datasets

std::string dataset_to_csv(const Dataset& data) {
  std::string out = "unit_id,time,y,z_true\n";
  for (const auto& u : data.units) {
    for (std::size_t i = 0; i < u.size(); ++i) {
      out += join_row({u.id, format_number(u.grid.times[i]), format_number(u.y[i]),
                       u.z_true.empty() ? std::string() : format_number(u.z_true[i])});
    }
  }
  return out;
}

Dataset dataset_from_csv(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw DataError("dataset is empty");
  const auto& header = rows.front();
  const std::size_t c_id = header_index(header, "unit_id");
  const std::size_t c_t = header_index(header, "time");
  const std::size_t c_y = header_index(header, "y");
  auto z_it = std::find(header.begin(), header.end(), "z_true");
  const bool has_z = z_it != header.end();
  const std::size_t c_z = has_z ? static_cast<std::size_t>(z_it - header.begin()) : 0;

  Dataset data;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::size_t> z_count;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "row " + std::to_string(r + 1) + ": ";
    if (row.size() != header.size())
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(row.size()));
    const std::string& id = row[c_id];
    if (id.empty()) throw DataError(where + "empty unit_id");
    auto [it, inserted] = index.try_emplace(id, data.units.size());
    if (inserted) {
      data.units.emplace_back();
      data.units.back().id = id;
    }
    auto& unit = data.units[it->second];
    try {
      unit.grid.times.push_back(parse_number(row[c_t]));
      unit.y.push_back(parse_number(row[c_y]));
      if (has_z && !row[c_z].empty()) {
        unit.z_true.resize(unit.y.size() - 1, std::numeric_limits<double>::quiet_NaN());
        unit.z_true.push_back(parse_number(row[c_z]));
        ++z_count[id];
      }
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  for (auto& u : data.units) {
    const std::size_t nz = z_count[u.id];
    if (nz != 0 && nz != u.size()) throw DataError("unit '" + u.id + "': z_true given for some rows only");
  }
  data.validate();
  return data;
}

Dataset read_dataset(const std::filesystem::path& csv_path) {
  Dataset data = dataset_from_csv(read_file(csv_path));
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  if (std::filesystem::exists(sidecar)) {
    json j;
    try {
      j = json::parse(read_file(sidecar));
    } catch (const json::exception& e) {
      throw DataError(sidecar.string() + ": " + e.what());
    }
    if (j.contains("z_f") && j["z_f"].is_number()) data.z_f = j["z_f"].get<double>();
  }
  return data;
}

// Sampler output

namespace {
const std::vector<std::string> kDrawMeta = {"chain",       "iteration",  "divergent", "energy", "lp",
                                            "accept_stat", "tree_depth", "n_leapfrog"};
}

std::string draws_to_csv(const Draws& d) {
  std::vector<std::string> header = kDrawMeta;
  header.insert(header.end(), d.names.begin(), d.names.end());
  std::string out = join_row(header);
  std::vector<std::string> row(header.size());
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    row[0] = std::to_string(d.chain[r]);
    row[1] = std::to_string(d.iteration[r]);
    row[2] = std::to_string(int(d.divergent[r]));
    row[3] = format_number(d.energy[r]);
    row[4] = format_number(d.lp[r]);
    row[5] = format_number(d.accept_stat[r]);
    row[6] = std::to_string(d.tree_depth[r]);
    row[7] = std::to_string(d.n_leapfrog[r]);
    for (std::size_t c = 0; c < d.n_cols(); ++c) row[kDrawMeta.size() + c] = format_number(d.at(r, c));
    out += join_row(row);
  }
  return out;
}

Draws draws_from_csv(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw DataError("draws file is empty");
  const auto& header = rows.front();
  if (header.size() < kDrawMeta.size() || !std::equal(kDrawMeta.begin(), kDrawMeta.end(), header.begin()))
    throw DataError("draws file does not start with the sampler columns");
  Draws d;
  d.names.assign(header.begin() + static_cast<std::ptrdiff_t>(kDrawMeta.size()), header.end());
  std::set<int> chains;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) throw DataError("draws row " + std::to_string(r + 1) + ": wrong field count");
    auto as_int = [&](std::size_t c) { return static_cast<int>(parse_number(row[c])); };
    d.chain.push_back(as_int(0));
    d.iteration.push_back(as_int(1));
    d.divergent.push_back(static_cast<std::uint8_t>(as_int(2)));
    d.energy.push_back(parse_number(row[3]));
    d.lp.push_back(parse_number(row[4]));
    d.accept_stat.push_back(parse_number(row[5]));
    d.tree_depth.push_back(as_int(6));
    d.n_leapfrog.push_back(as_int(7));
    for (std::size_t c = kDrawMeta.size(); c < row.size(); ++c) d.values.push_back(parse_number(row[c]));
    chains.insert(d.chain.back());
  }
  d.n_chains = chains.size();
  d.n_per_chain = d.n_chains ? d.n_rows() / d.n_chains : 0;
  if (d.n_chains * d.n_per_chain != d.n_rows()) throw DataError("draws file has unequal chain lengths");
  return d;
}

std::string diagnostics_to_json(const DiagnosticsReport& report, const Draws& draws) {
  json params = json::array();
  for (const auto& p : report.params) {
    params.push_back({{"name", p.name},
                      {"mean", number_or_null(p.mean)},
                      {"sd", number_or_null(p.sd)},
                      {"q2.5", number_or_null(p.q025)},
                      {"q50", number_or_null(p.q50)},
                      {"q97.5", number_or_null(p.q975)},
                      {"n_eff", optional_json(p.ess)},
                      {"rhat", optional_json(p.rhat)}});
  }
  json step = json::array();
  for (double s : draws.step_size) step.push_back(number_or_null(s));
  json j = {{"n_chains", report.n_chains},
            {"n_per_chain", report.n_per_chain},
            {"n_total", report.n_total},
            {"divergences", report.divergences},
            {"step_size", step},
            {"failed_chains", draws.failed_chains},
            {"parameters", params}};
  return dump(j);
}

std::string summary_table(const DiagnosticsReport& report) {
  std::size_t width = 9;
  for (const auto& p : report.params) width = std::max(width, p.name.size());
  auto num = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%10.4g", x);
    return std::string(buf);
  };
  auto pad = [width](const std::string& s) { return s + std::string(width - s.size(), ' '); };

  std::string out = pad("parameter");
  char head[96];
  std::snprintf(head, sizeof head, " %10s %10s %10s %10s %8s %6s\n", "Mean", "2.5%", "50%", "97.5%", "n_eff",
                "R-hat");
  out += head;
  for (const auto& p : report.params) {
    out += pad(p.name);
    out += " " + num(p.mean) + " " + num(p.q025) + " " + num(p.q50) + " " + num(p.q975);
    char tail[40];
    if (p.ess)
      std::snprintf(tail, sizeof tail, " %8.0f", *p.ess);
    else
      std::snprintf(tail, sizeof tail, " %8s", "NA");
    out += tail;
    if (p.rhat)
      std::snprintf(tail, sizeof tail, " %6.2f\n", *p.rhat);
    else
      std::snprintf(tail, sizeof tail, " %6s\n", "NA");
    out += tail;
  }
  return out;
}

std::string ensemble_to_csv(const PriorEnsemble& e) {
  std::vector<std::string> header = {"draw"};
  header.insert(header.end(), e.param_names.begin(), e.param_names.end());
  header.insert(header.end(), {"time", "z"});
  const bool noisy = !e.y.empty();
  if (noisy) header.push_back("y");
  std::string out = join_row(header);
  for (std::size_t s = 0; s < e.z.size(); ++s) {
    std::vector<std::string> row = {std::to_string(s + 1)};
    for (double v : e.params[s]) row.push_back(format_number(v));
    row.resize(row.size() + (noisy ? 3 : 2));
    for (std::size_t i = 0; i < e.grid.size(); ++i) {
      std::size_t c = 1 + e.params[s].size();
      row[c] = format_number(e.grid.times[i]);
      row[c + 1] = format_number(e.z[s][i]);
      if (noisy) row[c + 2] = format_number(e.y[s][i]);
      out += join_row(row);
    }
  }
  return out;
}

// Evaluation output

std::string elppd_to_csv(const ElppdResult& result) {
  std::string out = "unit_id,index,contribution\n";
  for (const auto& f : result.folds) {
    for (std::size_t i = 0; i < f.contributions.size(); ++i)
      out += join_row({f.unit_id, std::to_string(i + 1), format_number(f.contributions[i])});
  }
  return out;
}

std::string elppd_to_json(const ElppdResult& result) {
  json folds = json::array();
  for (const auto& f : result.folds) {
    json contributions = json::array();
    for (double c : f.contributions) contributions.push_back(number_or_null(c));
    folds.push_back({{"unit_id", f.unit_id},
                     {"ok", f.ok},
                     {"error", f.error},
                     {"total", f.ok ? number_or_null(f.total()) : json(nullptr)},
                     {"n_draws", f.n_draws},
                     {"divergences", f.divergences},
                     {"contributions", contributions}});
  }
  json j = {{"model", result.model_name},
            {"method", to_string(result.method)},
            {"elppd", optional_json(result.total)},
            {"n_refits", result.n_refits},
            {"folds", folds}};
  return dump(j);
}

std::vector<int> rank_descending(const std::vector<std::optional<double>>& totals) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < totals.size(); ++i)
    if (totals[i] && std::isfinite(*totals[i])) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return *totals[a] > *totals[b]; });
  std::vector<int> rank(totals.size(), 0);
  for (std::size_t k = 0; k < order.size(); ++k) rank[order[k]] = static_cast<int>(k + 1);
  return rank;
}

std::string comparison_to_csv(const std::vector<ComparisonRow>& rows) {
  std::vector<std::optional<double>> louo, sa;
  for (const auto& r : rows) {
    louo.push_back(r.louo);
    sa.push_back(r.sa);
  }
  auto rl = rank_descending(louo);
  auto rs = rank_descending(sa);
  auto cell = [](const std::optional<double>& x) { return x ? format_number(*x) : std::string(); };
  auto rank_cell = [](int r) { return r ? std::to_string(r) : std::string(); };
  std::string out = "model,elppd_louo,elppd_sa,rank_louo,rank_sa\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out += join_row({rows[i].model, cell(rows[i].louo), cell(rows[i].sa), rank_cell(rl[i]), rank_cell(rs[i])});
  return out;
}

std::string failure_curve_to_csv(const FailureCurve& curve) {
  std::vector<std::string> header = {"time", "mean"};
  for (double l : curve.levels) header.push_back("q" + format_number(l));
  std::string out = join_row(header);
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    double mean = 0.0;
    for (const auto& d : curve.draws) mean += d[k];
    if (!curve.draws.empty()) mean /= static_cast<double>(curve.draws.size());
    std::vector<std::string> row = {format_number(curve.times[k]), format_number(mean)};
    for (const auto& band : curve.bands) row.push_back(format_number(band[k]));
    out += join_row(row);
  }
  return out;
}

std::string failure_curve_to_json(const FailureCurve& curve) {
  const bool in_test = curve.mode == FailureCurve::Mode::InTestUnit;
  json j = {{"mode", in_test ? "in-test" : "new-unit"},
            {"unit_id", in_test ? json(curve.unit_id) : json(nullptr)},
            {"z_f", curve.z_f},
            {"t_start", curve.t_start},
            {"n_draws", curve.draws.size()},
            {"levels", curve.levels},
            {"times", curve.times}};
  return dump(j);
}

// Configuration

ConfigFormat format_for(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".toml" ? ConfigFormat::Toml : ConfigFormat::Json;
}

namespace {

json toml_to_json(const toml::node& node) {
  if (auto* t = node.as_table()) {
    json j = json::object();
    for (auto&& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (auto* a = node.as_array()) {
    json j = json::array();
    for (auto&& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (auto* v = node.as_integer()) return json(v->get());
  if (auto* v = node.as_floating_point()) return json(v->get());
  if (auto* v = node.as_boolean()) return json(v->get());
  if (auto* v = node.as_string()) return json(v->get());
  throw ConfigError("unsupported TOML value (dates and times are not used)");
}

// Walks a JSON document collecting every schema violation with its path.
class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& message) { errors.push_back(path + ": " + message); }

  void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; });
      if (!known) fail(join(path, it.key()), "unknown key");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  bool table(const json& obj, const std::string& path) {
    if (obj.is_object()) return true;
    fail(path, "expected a table");
    return false;
  }

  std::optional<double> number(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const auto& v = obj[key];
    if (!v.is_number()) {
      fail(join(path, key), "expected a number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<std::size_t> count(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const auto& v = obj[key];
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      fail(join(path, key), "expected a non-negative integer");
      return std::nullopt;
    }
    return static_cast<std::size_t>(v.get<long long>());
  }

  std::optional<std::string> string(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const auto& v = obj[key];
    if (!v.is_string()) {
      fail(join(path, key), "expected a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<bool> boolean(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const auto& v = obj[key];
    if (!v.is_boolean()) {
      fail(join(path, key), "expected true or false");
      return std::nullopt;
    }
    return v.get<bool>();
  }

  std::optional<std::vector<double>> numbers(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const auto& v = obj[key];
    bool ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
    if (!ok) {
      fail(join(path, key), "expected an array of numbers");
      return std::nullopt;
    }
    return v.get<std::vector<double>>();
  }

  // A distribution is a number (point mass) or {dist = "...", params = [...]}.
  std::optional<DistSpec> dist(const json& v, const std::string& path) {
    if (v.is_number()) return DistSpec::constant(v.get<double>());
    if (!table(v, path)) return std::nullopt;
    check_keys(v, path, {"dist", "params"});
    auto name = string(v, path, "dist");
    auto params = numbers(v, path, "params");
    if (!name) {
      if (!v.contains("dist")) fail(join(path, "dist"), "required");
      return std::nullopt;
    }
    if (!params) {
      if (!v.contains("params")) fail(join(path, "params"), "required");
      return std::nullopt;
    }
    DistSpec d;
    try {
      d.kind = dist_kind_from_string(*name);
      d.params = *params;
      gpdeg::validate(d);
    } catch (const std::exception& e) {
      fail(path, e.what());
      return std::nullopt;
    }
    return d;
  }

  std::optional<ModelSpec> model(const json& obj, const std::string& path) {
    if (!table(obj, path)) return std::nullopt;
    check_keys(obj, path, {"name", "pooling", "preset", "priors"});
    const std::size_t before = errors.size();
    auto preset = string(obj, path, "preset").value_or("default");
    auto pooling_name = string(obj, path, "pooling");

    ModelSpec spec;
    if (preset == "single_unit") {
      spec = single_unit_model();
    } else if (preset == "prior_check") {
      spec = prior_check_model();
    } else if (preset != "default") {
      fail(join(path, "preset"), "expected default, single_unit or prior_check");
      return std::nullopt;
    }
    if (pooling_name) {
      try {
        Pooling p = pooling_from_string(*pooling_name);
        if (preset == "default") {
          spec = default_model(p);
        } else if (p != spec.pooling) {
          fail(join(path, "pooling"), "preset '" + preset + "' is complete_pooling");
        }
      } catch (const ConfigError& e) {
        fail(join(path, "pooling"), e.what());
      }
    } else if (preset == "default") {
      fail(join(path, "pooling"), "required");
    }
    if (auto name = string(obj, path, "name")) spec.name = *name;

    if (obj.contains("priors") && table(obj["priors"], join(path, "priors"))) {
      const auto roles = required_roles(spec.pooling);
      for (auto it = obj["priors"].begin(); it != obj["priors"].end(); ++it) {
        const std::string p = join(join(path, "priors"), it.key());
        if (std::find(roles.begin(), roles.end(), it.key()) == roles.end()) {
          fail(p, "not a parameter of " + std::string(to_string(spec.pooling)));
          continue;
        }
        if (auto d = dist(it.value(), p)) spec.priors[it.key()] = *d;
      }
    }
    if (errors.size() != before) return std::nullopt;
    try {
      gpdeg::validate(spec);
    } catch (const ConfigError& e) {
      fail(path, e.what());
      return std::nullopt;
    }
    return spec;
  }

  std::optional<SamplerConfig> sampler(const json& obj, const std::string& path) {
    if (!table(obj, path)) return std::nullopt;
    check_keys(obj, path,
               {"preset", "chains", "warmup", "samples", "target_accept", "max_tree_depth", "seed", "threads",
                "step_size_scale", "max_delta_energy", "init_buffer", "base_window", "term_buffer"});
    const std::size_t before = errors.size();
    SamplerConfig c;
    auto preset = string(obj, path, "preset").value_or("default");
    if (preset == "single_unit")
      c = SamplerConfig::single_unit_default();
    else if (preset == "pooled")
      c = SamplerConfig::pooled_default();
    else if (preset != "default")
      fail(join(path, "preset"), "expected default, single_unit or pooled");

    if (auto v = count(obj, path, "chains")) c.n_chains = *v;
    if (auto v = count(obj, path, "warmup")) c.n_warmup = *v;
    if (auto v = count(obj, path, "samples")) c.n_samples = *v;
    if (auto v = number(obj, path, "target_accept")) c.target_accept = *v;
    if (auto v = count(obj, path, "max_tree_depth")) c.max_tree_depth = static_cast<int>(*v);
    if (auto v = count(obj, path, "seed")) c.seed = *v;
    if (auto v = count(obj, path, "threads")) c.threads = *v;
    if (auto v = number(obj, path, "step_size_scale")) c.step_size_scale = *v;
    if (auto v = number(obj, path, "max_delta_energy")) c.max_delta_energy = *v;
    if (auto v = count(obj, path, "init_buffer")) c.init_buffer = *v;
    if (auto v = count(obj, path, "base_window")) c.base_window = *v;
    if (auto v = count(obj, path, "term_buffer")) c.term_buffer = *v;
    if (errors.size() != before) return std::nullopt;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      fail(path, e.what());
      return std::nullopt;
    }
    return c;
  }

  std::optional<GridRecipe> recipe(const json& obj, const std::string& path, bool allow_random) {
    if (!table(obj, path)) return std::nullopt;
    check_keys(obj, path, {"kind", "times", "n_obs", "step", "increment_lower", "increment_upper"});
    GridRecipe g;
    auto kind = string(obj, path, "kind").value_or(obj.contains("times") ? "fixed" : "unit_spaced");
    if (kind == "fixed") {
      g.kind = GridRecipe::Kind::Fixed;
      if (auto t = numbers(obj, path, "times"))
        g.times = *t;
      else if (!obj.contains("times"))
        fail(join(path, "times"), "required for a fixed grid");
    } else if (kind == "unit_spaced") {
      g.kind = GridRecipe::Kind::Fixed;
      auto n = count(obj, path, "n_obs");
      double step = number(obj, path, "step").value_or(1.0);
      if (!n)
        fail(join(path, "n_obs"), "required for a unit_spaced grid");
      else if (!(step > 0))
        fail(join(path, "step"), "must be positive");
      else
        g.times = TimeGrid::unit_spaced(*n, step).times;
    } else if (kind == "random_increments" && allow_random) {
      g.kind = GridRecipe::Kind::RandomIncrements;
      g.n_obs = count(obj, path, "n_obs").value_or(0);
      g.increment_lower = number(obj, path, "increment_lower").value_or(0.0);
      g.increment_upper = number(obj, path, "increment_upper").value_or(0.0);
    } else {
      fail(join(path, "kind"), allow_random ? "expected fixed, unit_spaced or random_increments"
                                            : "expected fixed or unit_spaced");
    }
    return g;
  }

  std::optional<StudyConfig> study(const json& obj, const std::string& path) {
    if (!table(obj, path)) return std::nullopt;
    check_keys(obj, path, {"name", "n_units", "seed", "sigma", "z_f", "shared_grid", "mu", "nu", "grid"});
    const std::size_t before = errors.size();
    StudyConfig c;
    if (auto v = string(obj, path, "name")) c.name = *v;
    if (auto v = count(obj, path, "n_units")) c.n_units = *v;
    if (auto v = count(obj, path, "seed")) c.seed = *v;
    if (auto v = number(obj, path, "sigma")) c.sigma = *v;
    if (auto v = number(obj, path, "z_f")) c.z_f = *v;
    if (auto v = boolean(obj, path, "shared_grid")) c.shared_grid = *v;
    for (const char* key : {"mu", "nu"}) {
      if (!obj.contains(key)) {
        fail(join(path, key), "required");
        continue;
      }
      if (auto d = dist(obj[key], join(path, key))) (std::string(key) == "mu" ? c.mu : c.nu) = *d;
    }
    if (!obj.contains("grid"))
      fail(join(path, "grid"), "required");
    else if (auto g = recipe(obj["grid"], join(path, "grid"), true))
      c.grid = *g;
    if (errors.size() != before) return std::nullopt;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      fail(path, e.what());
      return std::nullopt;
    }
    return c;
  }
};

}  // namespace

ConfigFile parse_config(std::string_view text, ConfigFormat format) {
  json doc;
  if (format == ConfigFormat::Toml) {
    try {
      doc = toml_to_json(toml::parse(text));
    } catch (const toml::parse_error& e) {
      std::ostringstream msg;
      msg << "TOML syntax error at line " << e.source().begin.line << ": " << e.description();
      throw ConfigError(msg.str());
    }
  } else {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("JSON syntax error: ") + e.what());
    }
  }
  Reader r;
  ConfigFile out;
  if (r.table(doc, "(root)")) {
    r.check_keys(doc, "", {"model", "study", "sampler", "grid", "prior_check"});
    if (doc.contains("model")) out.model = r.model(doc["model"], "model");
    if (doc.contains("study")) out.study = r.study(doc["study"], "study");
    if (doc.contains("sampler")) out.sampler = r.sampler(doc["sampler"], "sampler");
    if (doc.contains("grid")) {
      if (auto g = r.recipe(doc["grid"], "grid", false)) {
        TimeGrid grid{g->times};
        try {
          grid.validate();
          out.grid = grid;
        } catch (const DataError& e) {
          r.fail("grid.times", e.what());
        }
      }
    }
    if (doc.contains("prior_check") && r.table(doc["prior_check"], "prior_check")) {
      r.check_keys(doc["prior_check"], "prior_check", {"draws"});
      out.draws = r.count(doc["prior_check"], "prior_check", "draws");
      if (out.draws && *out.draws == 0) r.fail("prior_check.draws", "must be positive");
    }
  }
  if (!r.errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : r.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return out;
}

ConfigFile load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot open config " + path.string());
  }
  try {
    return parse_config(text, format_for(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

json dist_json(const DistSpec& d) {
  if (d.kind == DistKind::Constant) return d.params.at(0);
  return {{"dist", std::string(to_string(d.kind))}, {"params", d.params}};
}

}  // namespace

std::string config_to_json(const ConfigFile& config) {
  json j = json::object();
  if (config.model) {
    const auto& m = *config.model;
    json priors = json::object();
    for (const auto& [role, d] : m.priors) priors[role] = dist_json(d);
    j["model"] = {{"name", m.name}, {"pooling", std::string(to_string(m.pooling))}, {"priors", priors}};
  }
  if (config.study) {
    const auto& s = *config.study;
    json grid;
    if (s.grid.kind == GridRecipe::Kind::Fixed)
      grid = {{"kind", "fixed"}, {"times", s.grid.times}};
    else
      grid = {{"kind", "random_increments"},
              {"n_obs", s.grid.n_obs},
              {"increment_lower", s.grid.increment_lower},
              {"increment_upper", s.grid.increment_upper}};
    j["study"] = {{"name", s.name},      {"n_units", s.n_units},         {"seed", s.seed},
                  {"sigma", s.sigma},    {"shared_grid", s.shared_grid}, {"mu", dist_json(s.mu)},
                  {"nu", dist_json(s.nu)}, {"grid", grid}};
    if (s.z_f) j["study"]["z_f"] = *s.z_f;
  }
  if (config.sampler) {
    const auto& c = *config.sampler;
    j["sampler"] = {{"chains", c.n_chains},
                    {"warmup", c.n_warmup},
                    {"samples", c.n_samples},
                    {"target_accept", c.target_accept},
                    {"max_tree_depth", c.max_tree_depth},
                    {"seed", c.seed},
                    {"step_size_scale", c.step_size_scale},
                    {"max_delta_energy", c.max_delta_energy},
                    {"init_buffer", c.init_buffer},
                    {"base_window", c.base_window},
                    {"term_buffer", c.term_buffer}};
  }
  if (config.grid) j["grid"] = {{"kind", "fixed"}, {"times", config.grid->times}};
  if (config.draws) j["prior_check"] = {{"draws", *config.draws}};
  return dump(j);
}

std::string dataset_sidecar(const Dataset& data, const StudyConfig* generator) {
  json units = json::array();
  for (const auto& u : data.units) {
    units.push_back({{"id", u.id},
                     {"n_obs", u.size()},
                     {"t_last", u.size() ? json(u.grid.times.back()) : json(nullptr)},
                     {"has_z_true", !u.z_true.empty()}});
  }
  json j = {{"n_units", data.n_units()},
            {"n_observations", data.n_observations()},
            {"z_f", data.z_f ? json(*data.z_f) : json(nullptr)},
            {"units", units}};
  if (generator) {
    ConfigFile c;
    c.study = *generator;
    j["generator"] = json::parse(config_to_json(c))["study"];
  }
  return dump(j);
}

}  // namespace gpdeg::io
