#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adists/correlation.hpp"
#include "adists/metrics.hpp"

namespace adists {

enum class EvalMode { Mos, TwoAfc };

EvalMode parse_eval_mode(const std::string& name);
std::string eval_mode_name(EvalMode mode);

struct MosRecord {
  std::filesystem::path ref, dist;
  double score = 0.0;
  std::string subset;
};

struct PairRecord {
  std::filesystem::path ref, dist0, dist1;
  double r = 0.5;
  std::string subset;
};

/// CSV with header ref,dist,score[,subset]; relative paths resolve against the
/// manifest directory.
std::vector<MosRecord> load_mos_manifest(const std::filesystem::path& path);

/// CSV with header ref,dist0,dist1,r[,subset].
std::vector<PairRecord> load_2afc_manifest(const std::filesystem::path& path);

/// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_line(const std::string& line);

struct EvalOptions {
  MetricId metric = MetricId::Adists;
  EvalMode mode = EvalMode::Mos;
  std::filesystem::path cache;        // per-record scores; empty disables
  std::size_t resize_short_side = 0;  // 0 keeps the native resolution
  std::uint64_t seed = 0;             // multi-start seed of the four-parameter fit
};

struct CorrelationRow {
  std::string subset;  // "all" for the overall row
  std::size_t n = 0;
  bool degenerate = false;
  std::string message;
  double plcc = 0.0, srcc = 0.0, krcc = 0.0;
  double raw_pearson = 0.0;
  bool plcc_fallback = false;
  Logistic4 fit;
  double two_afc = 0.0;
};

struct RecordFailure {
  std::size_t index = 0;
  std::string message;
};

struct EvalReport {
  std::string metric, variant, mode;
  std::string orientation;  // how metric values were turned into quality predictions
  std::string fit_form;
  std::size_t records = 0, scored = 0;
  std::vector<RecordFailure> failures;
  CorrelationRow overall;
  std::vector<CorrelationRow> subsets;  // empty unless the manifest carries tags
  double runtime_seconds = 0.0;
};

/// Scores every record (records run concurrently), writes the cache and
/// aggregates correlations serially. Unreadable records are skipped and listed
/// in `failures`.
EvalReport run_eval(const std::filesystem::path& manifest, const Scorer& scorer,
                    const EvalOptions& options);

/// Correlations for MOS mode from per-record quality predictions.
CorrelationRow mos_row(const std::string& subset, const std::vector<double>& quality,
                       const std::vector<double>& mos, std::uint64_t seed);

std::string report_json(const EvalReport& report);

}  // namespace adists
