#include "adists/eval.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <optional>

#include <json.hpp>

#include "adists/error.hpp"
#include "adists/image_io.hpp"

namespace adists {

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "mos") return EvalMode::Mos;
  if (name == "2afc") return EvalMode::TwoAfc;
  throw UsageError("unknown eval mode '" + name + "' (expected mos or 2afc)");
}

std::string eval_mode_name(EvalMode mode) { return mode == EvalMode::Mos ? "mos" : "2afc"; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  if (quoted) throw DataError("unterminated quote in CSV line: " + line);
  fields.push_back(std::move(cur));
  return fields;
}

namespace {

std::string strip(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

double parse_number(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DataError(path.string() + ":" + std::to_string(line) + ": not a number: '" + text + "'");
  }
}

// Reads the header and data rows; every row is trimmed and checked for the
// expected column count (the trailing subset column is optional).
std::vector<std::vector<std::string>> read_manifest(const std::filesystem::path& path,
                                                    const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = split_csv_line(line);
  for (auto& h : header) h = strip(h);
  auto with_subset = columns;
  with_subset.push_back("subset");
  if (header != columns && header != with_subset) {
    std::string expected;
    for (const auto& c : columns) expected += (expected.empty() ? "" : ",") + c;
    throw DataError(path.string() + ": header must be " + expected + "[,subset]");
  }
  std::vector<std::vector<std::string>> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (strip(line).empty()) continue;
    auto fields = split_csv_line(line);
    for (auto& f : fields) f = strip(f);
    if (fields.size() == columns.size() && header.size() == with_subset.size()) fields.emplace_back();
    if (fields.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(number) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    if (fields.size() == columns.size()) fields.emplace_back();
    fields.push_back(std::to_string(number));
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) throw DataError("empty image path in manifest");
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::vector<MosRecord> load_mos_manifest(const std::filesystem::path& path) {
  const auto base = path.parent_path();
  std::vector<MosRecord> records;
  for (const auto& f : read_manifest(path, {"ref", "dist", "score"})) {
    const auto line = static_cast<std::size_t>(std::stoul(f[4]));
    records.push_back({resolve(base, f[0]), resolve(base, f[1]), parse_number(f[2], path, line), f[3]});
  }
  if (records.size() < 2) throw DataError(path.string() + ": at least 2 records are required");
  return records;
}

std::vector<PairRecord> load_2afc_manifest(const std::filesystem::path& path) {
  const auto base = path.parent_path();
  std::vector<PairRecord> records;
  for (const auto& f : read_manifest(path, {"ref", "dist0", "dist1", "r"})) {
    const auto line = static_cast<std::size_t>(std::stoul(f[5]));
    const double r = parse_number(f[3], path, line);
    if (r < 0.0 || r > 1.0) {
      throw DataError(path.string() + ":" + std::to_string(line) + ": r must lie in [0, 1]");
    }
    records.push_back({resolve(base, f[0]), resolve(base, f[1]), resolve(base, f[2]), r, f[4]});
  }
  if (records.empty()) throw DataError(path.string() + ": no records");
  return records;
}

CorrelationRow mos_row(const std::string& subset, const std::vector<double>& quality,
                       const std::vector<double>& mos, std::uint64_t seed) {
  CorrelationRow row;
  row.subset = subset;
  row.n = quality.size();
  try {
    row.srcc = srcc(quality, mos);
    row.krcc = krcc(quality, mos);
    const auto p = plcc(quality, mos, seed);
    row.plcc = p.value;
    row.raw_pearson = p.raw_pearson;
    row.plcc_fallback = p.fallback;
    row.fit = p.fit.params;
    row.message = p.warning;
  } catch (const DataError& e) {
    row.degenerate = true;
    row.message = e.what();
  }
  return row;
}

namespace {

Tensor load_for_eval(const std::filesystem::path& path, std::size_t short_side) {
  Tensor img = decode_image(path);
  return short_side > 0 ? resize_bicubic(img, short_side) : img;
}

struct Outcome {
  std::optional<double> a, b;
  std::string error;
};

}  // namespace

EvalReport run_eval(const std::filesystem::path& manifest, const Scorer& scorer,
                    const EvalOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  report.metric = metric_name(options.metric);
  report.mode = eval_mode_name(options.mode);
  report.fit_form = Logistic4::form();
  const bool higher = higher_is_better(options.metric);
  report.orientation = higher ? "metric value used as quality" : "negated distance used as quality";

  std::vector<MosRecord> mos;
  std::vector<PairRecord> pairs;
  if (options.mode == EvalMode::Mos) {
    mos = load_mos_manifest(manifest);
  } else {
    pairs = load_2afc_manifest(manifest);
  }
  const std::size_t n = options.mode == EvalMode::Mos ? mos.size() : pairs.size();
  report.records = n;
  std::vector<Outcome> outcomes(n);
  std::vector<std::string> variants(n);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      if (options.mode == EvalMode::Mos) {
        const Tensor x = load_for_eval(mos[i].ref, options.resize_short_side);
        const Tensor y = load_for_eval(mos[i].dist, options.resize_short_side);
        const auto s = scorer.score(options.metric, x, y);
        outcomes[i].a = s.value;
        variants[i] = s.variant;
      } else {
        const Tensor x = load_for_eval(pairs[i].ref, options.resize_short_side);
        const Tensor y0 = load_for_eval(pairs[i].dist0, options.resize_short_side);
        const Tensor y1 = load_for_eval(pairs[i].dist1, options.resize_short_side);
        const auto s0 = scorer.score(options.metric, x, y0);
        const auto s1 = scorer.score(options.metric, x, y1);
        outcomes[i].a = s0.value;
        outcomes[i].b = s1.value;
        variants[i] = s0.variant;
      }
    } catch (const std::exception& e) {
      outcomes[i] = Outcome{};
      outcomes[i].error = e.what();
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!outcomes[i].error.empty()) report.failures.push_back({i, outcomes[i].error});
    if (report.variant.empty() && !variants[i].empty()) report.variant = variants[i];
  }
  report.scored = n - report.failures.size();

  if (!options.cache.empty()) {
    std::ofstream out(options.cache, std::ios::trunc);
    if (!out) throw DataError("cannot write cache " + options.cache.string());
    out.precision(17);
    if (options.mode == EvalMode::Mos) {
      out << "index,ref,dist,score,metric,subset,status\n";
      for (std::size_t i = 0; i < n; ++i) {
        out << i << ',' << csv_field(mos[i].ref.string()) << ',' << csv_field(mos[i].dist.string())
            << ',' << mos[i].score << ',';
        if (outcomes[i].a) out << *outcomes[i].a;
        out << ',' << csv_field(mos[i].subset) << ','
            << csv_field(outcomes[i].error.empty() ? "ok" : "error: " + outcomes[i].error) << '\n';
      }
    } else {
      out << "index,ref,dist0,dist1,r,metric0,metric1,subset,status\n";
      for (std::size_t i = 0; i < n; ++i) {
        out << i << ',' << csv_field(pairs[i].ref.string()) << ','
            << csv_field(pairs[i].dist0.string()) << ',' << csv_field(pairs[i].dist1.string())
            << ',' << pairs[i].r << ',';
        if (outcomes[i].a) out << *outcomes[i].a;
        out << ',';
        if (outcomes[i].b) out << *outcomes[i].b;
        out << ',' << csv_field(pairs[i].subset) << ','
            << csv_field(outcomes[i].error.empty() ? "ok" : "error: " + outcomes[i].error) << '\n';
      }
    }
    if (!out) throw DataError("failed writing cache " + options.cache.string());
  }

  // Group scored records by subset, keeping manifest order inside each group.
  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<std::size_t> all;
  bool tagged = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!outcomes[i].error.empty()) continue;
    const std::string& tag = options.mode == EvalMode::Mos ? mos[i].subset : pairs[i].subset;
    tagged = tagged || !tag.empty();
    groups[tag.empty() ? "(untagged)" : tag].push_back(i);
    all.push_back(i);
  }

  auto make_row = [&](const std::string& name, const std::vector<std::size_t>& idx) {
    if (options.mode == EvalMode::Mos) {
      std::vector<double> q, m;
      for (std::size_t i : idx) {
        q.push_back(higher ? *outcomes[i].a : -*outcomes[i].a);
        m.push_back(mos[i].score);
      }
      if (idx.size() < 2) {
        CorrelationRow row;
        row.subset = name;
        row.n = idx.size();
        row.degenerate = true;
        row.message = "fewer than 2 scored records";
        return row;
      }
      return mos_row(name, q, m, options.seed);
    }
    CorrelationRow row;
    row.subset = name;
    row.n = idx.size();
    if (idx.empty()) {
      row.degenerate = true;
      row.message = "no scored records";
      return row;
    }
    std::vector<TwoAfcRecord> recs;
    for (std::size_t i : idx) {
      const double d0 = higher ? -*outcomes[i].a : *outcomes[i].a;
      const double d1 = higher ? -*outcomes[i].b : *outcomes[i].b;
      recs.push_back({pairs[i].r, d0, d1});
    }
    row.two_afc = two_afc_score(recs);
    return row;
  };

  report.overall = make_row("all", all);
  if (tagged) {
    for (const auto& [name, idx] : groups) report.subsets.push_back(make_row(name, idx));
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string report_json(const EvalReport& report) {
  using nlohmann::ordered_json;
  auto row_json = [&](const CorrelationRow& r) {
    ordered_json j;
    j["subset"] = r.subset;
    j["n"] = r.n;
    j["degenerate"] = r.degenerate;
    if (report.mode == "mos") {
      if (!r.degenerate) {
        j["plcc"] = r.plcc;
        j["srcc"] = r.srcc;
        j["krcc"] = r.krcc;
        j["raw_pearson"] = r.raw_pearson;
        j["plcc_fallback"] = r.plcc_fallback;
        if (!r.plcc_fallback) j["fit"] = {{"a", r.fit.a}, {"b", r.fit.b}, {"c", r.fit.c}, {"d", r.fit.d}};
      }
    } else if (!r.degenerate) {
      j["two_afc"] = r.two_afc;
    }
    if (!r.message.empty()) j["message"] = r.message;
    return j;
  };
  ordered_json j;
  j["metric"] = report.metric;
  j["variant"] = report.variant;
  j["mode"] = report.mode;
  j["orientation"] = report.orientation;
  if (report.mode == "mos") j["fit_form"] = report.fit_form;
  j["records"] = report.records;
  j["scored"] = report.scored;
  j["failed"] = report.failures.size();
  j["failures"] = ordered_json::array();
  for (const auto& f : report.failures) j["failures"].push_back({{"index", f.index}, {"error", f.message}});
  j["overall"] = row_json(report.overall);
  j["subsets"] = ordered_json::array();
  for (const auto& r : report.subsets) j["subsets"].push_back(row_json(r));
  j["runtime_seconds"] = report.runtime_seconds;
  return j.dump(2);
}

}  // namespace adists
