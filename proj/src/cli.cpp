#include "adists/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "adists/archive.hpp"
#include "adists/autograd.hpp"
#include "adists/error.hpp"
#include "adists/eval.hpp"
#include "adists/image_io.hpp"
#include "adists/metrics.hpp"
#include "adists/recovery.hpp"
#include "adists/synthetic.hpp"
#include "adists/texture_model.hpp"

namespace adists::cli {

namespace {

using nlohmann::ordered_json;

struct Globals {
  bool json = false;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct Resources {
  std::string weights;  // flag value
  std::string params;   // flag value
};

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::optional<std::string> from_env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

// Flags win over the environment; without either the synthetic seed-0 archive
// stands in (the built-in params were fitted against it).
WeightArchive resolve_weights(const std::string& flag, std::ostream& err) {
  std::string path = flag;
  if (path.empty()) path = from_env("ADISTS_WEIGHTS").value_or("");
  if (path.empty() || path == "synthetic") {
    if (path.empty()) err << "note: no weight archive given; using the synthetic seed-0 archive\n";
    return synthetic::make_archive(0);
  }
  return load_archive(path);
}

LogisticParams resolve_params(const std::string& flag) {
  std::string path = flag;
  if (path.empty()) path = from_env("ADISTS_PARAMS").value_or("");
  if (path.empty() || path == "default") return default_logistic_params();
  return load_params(path);
}

Tensor load_image(const std::string& path, std::size_t resize) {
  Tensor img = decode_image(path);
  return resize > 0 ? resize_bicubic(img, resize) : img;
}

ordered_json stages_json(const MetricScore& s) {
  ordered_json arr = ordered_json::array();
  for (const auto& st : s.stages) {
    ordered_json j;
    j["level"] = st.level;
    j["channels"] = st.channels;
    j["positions"] = st.positions;
    j["similarity"] = st.similarity;
    if (s.metric == MetricId::Adists) j["texture_probability"] = st.texture_probability;
    arr.push_back(j);
  }
  return arr;
}

void add_resource_flags(CLI::App* cmd, Resources& r) {
  cmd->add_option("--weights", r.weights, "Weight archive (default: $ADISTS_WEIGHTS, else synthetic)");
  cmd->add_option("--params", r.params, "Texture params file (default: $ADISTS_PARAMS, else built-in)");
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"A-DISTS image quality assessment", "adists"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI or TOML file with flag values");
  Globals g;
  app.add_flag("--json", g.json, "Machine-readable output");
  app.add_option("--seed", g.seed, "Seed for stochastic routines");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  // score
  auto* score = app.add_subcommand("score", "Score a distorted image against its reference");
  Resources score_res;
  std::string metric = "adists", ref, dist, pooling = "min";
  std::size_t resize = 0;
  score->add_option("--metric", metric, "mse|ssim|lpips|dists|adists");
  score->add_option("--ref", ref, "Reference PNG")->required();
  score->add_option("--dist", dist, "Distorted PNG")->required();
  score->add_option("--pooling", pooling, "min|ref");
  score->add_option("--resize", resize, "Resample so the short side has this length (0 = off)");
  add_resource_flags(score, score_res);

  // maps
  auto* maps = app.add_subcommand("maps", "Write texture probability maps per pyramid level");
  Resources maps_res;
  std::string maps_image, maps_dir;
  maps->add_option("--image", maps_image, "Input PNG")->required();
  maps->add_option("--out-dir", maps_dir, "Directory for level_<i>.png")->required();
  maps->add_option("--resize", resize, "Resample so the short side has this length (0 = off)");
  add_resource_flags(maps, maps_res);

  // fit-classifier
  auto* fit = app.add_subcommand("fit-classifier", "Fit the per-level texture classifier");
  Resources fit_res;
  std::string corpus_manifest, fit_out;
  std::size_t synthetic_per_class = 0;
  auto* manifest_opt = fit->add_option("--manifest", corpus_manifest, "Corpus CSV (path,label,size)");
  auto* synth_opt = fit->add_option("--synthetic", synthetic_per_class,
                                    "Generate this many patches per class and size instead");
  manifest_opt->excludes(synth_opt);
  fit->add_option("--out", fit_out, "Params file to write")->required();
  fit->add_option("--weights", fit_res.weights, "Weight archive");

  // eval
  auto* eval = app.add_subcommand("eval", "Correlate metric scores with human judgements");
  Resources eval_res;
  std::string eval_manifest, eval_mode = "mos", eval_out, eval_cache;
  eval->add_option("--manifest", eval_manifest, "Manifest CSV")->required();
  eval->add_option("--mode", eval_mode, "mos|2afc");
  eval->add_option("--metric", metric, "mse|ssim|lpips|dists|adists");
  eval->add_option("--pooling", pooling, "min|ref");
  eval->add_option("--out", eval_out, "report.json path");
  eval->add_option("--cache", eval_cache, "Per-record score CSV");
  eval->add_option("--resize", resize, "Resample so the short side has this length (0 = off)");
  add_resource_flags(eval, eval_res);

  // recover
  auto* recover = app.add_subcommand("recover", "Recover a reference by descending a metric");
  Resources rec_res;
  std::string rec_init = "blur", rec_out, rec_trace;
  RecoveryOptions rec_opts;
  std::string rec_metric = "adists";
  recover->add_option("--ref", ref, "Reference PNG")->required();
  recover->add_option("--metric", rec_metric, "mse|msssim|adists|adists-ref");
  recover->add_option("--init", rec_init, "noise|blur");
  recover->add_option("--pooling", pooling, "min|ref (adists only)");
  recover->add_option("--steps", rec_opts.steps, "Iteration budget");
  recover->add_option("--noise-sigma", rec_opts.noise_sigma, "Noise init standard deviation");
  recover->add_option("--blur-sigma", rec_opts.blur_sigma, "Blur init standard deviation");
  recover->add_option("--target-gain", rec_opts.target_gain_db,
                      "Stop once PSNR has improved by this many dB (0 runs every step)");
  recover->add_option("--first-step", rec_opts.first_step, "Largest pixel change of a fresh trial step");
  recover->add_option("--max-halvings", rec_opts.max_halvings, "Backtracking halvings per line search");
  recover->add_option("--max-failures", rec_opts.max_failures,
                      "Consecutive failed line searches before aborting");
  recover->add_option("--out", rec_out, "Recovered PNG")->required();
  recover->add_option("--trace", rec_trace, "CSV of step,value,psnr");
  add_resource_flags(recover, rec_res);

  // archive-inspect
  auto* inspect = app.add_subcommand("archive-inspect", "List the entries of a weight archive");
  std::string inspect_path;
  inspect->add_option("archive", inspect_path, "Archive file")->required();

  // synthetic data
  auto* synth_archive = app.add_subcommand("synth-archive", "Write a seeded random VGG16 archive");
  std::string synth_out;
  synth_archive->add_option("--out", synth_out, "Archive path")->required();
  auto* synth_corpus = app.add_subcommand("synth-corpus", "Write a synthetic labelled patch corpus");
  std::string synth_dir;
  std::size_t per_class = 20;
  synth_corpus->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth_corpus->add_option("--per-class", per_class, "Patches per class and size");
  auto* synth_noise = app.add_subcommand("synth-noise", "Write a noise-graded MOS manifest");
  std::size_t noise_images = 5, noise_size = 64;
  std::vector<double> sigmas{0.02, 0.05, 0.1, 0.2};
  synth_noise->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth_noise->add_option("--images", noise_images, "Reference images");
  synth_noise->add_option("--size", noise_size, "Image side length");
  synth_noise->add_option("--sigmas", sigmas, "Noise levels")->delimiter(',');

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << '\n';
    CLI::App* active = &app;
    for (auto* sub : app.get_subcommands()) active = sub;
    err << active->help();
    return kUsage;
  }

  omp_set_num_threads(g.threads);
  try {
    if (score->parsed()) {
      const MetricId id = parse_metric(metric);
      MetricConfig config;
      config.pooling = parse_pooling(pooling);
      const Scorer scorer(resolve_weights(score_res.weights, err),
                          resolve_params(score_res.params), config);
      const Tensor x = load_image(ref, resize);
      const Tensor y = load_image(dist, resize);
      const MetricScore s = scorer.score(id, x, y);
      if (g.json) {
        ordered_json j;
        j["metric"] = metric_name(s.metric);
        j["variant"] = s.variant;
        j["value"] = s.value;
        j["stages"] = stages_json(s);
        out << j.dump(2) << '\n';
      } else {
        out << fixed6(s.value) << '\n';
      }
      return kOk;
    }

    if (maps->parsed()) {
      const Backbone backbone(resolve_weights(maps_res.weights, err));
      const LogisticParams params = resolve_params(maps_res.params);
      const auto gray = emit_probability_maps(load_image(maps_image, resize), backbone, params);
      std::filesystem::create_directories(maps_dir);
      ordered_json files = ordered_json::array();
      for (std::size_t i = 0; i < gray.size(); ++i) {
        const auto path = std::filesystem::path(maps_dir) / ("level_" + std::to_string(i) + ".png");
        encode_gray8(gray[i].pixels, gray[i].height, gray[i].width, path);
        double mean = 0.0;
        for (auto v : gray[i].pixels) mean += v / 255.0;
        mean /= static_cast<double>(gray[i].pixels.size());
        files.push_back({{"level", i}, {"path", path.string()}, {"height", gray[i].height},
                         {"width", gray[i].width}, {"mean_p", mean}});
        if (!g.json) out << path.string() << ' ' << gray[i].height << 'x' << gray[i].width << '\n';
      }
      if (g.json) out << files.dump(2) << '\n';
      return kOk;
    }

    if (fit->parsed()) {
      if (corpus_manifest.empty() && synthetic_per_class == 0) {
        throw UsageError("fit-classifier needs --manifest or --synthetic N");
      }
      const Backbone backbone(resolve_weights(fit_res.weights, err));
      const PatchCorpus corpus = corpus_manifest.empty()
                                     ? synthetic::patch_corpus(g.seed, synthetic_per_class)
                                     : load_corpus_manifest(corpus_manifest);
      auto result = fit_classifier(corpus, backbone, WindowSpec{});
      if (!corpus_manifest.empty()) result.params.source = "fit-classifier " + corpus_manifest;
      save_params(result.params, fit_out);
      ordered_json levels = ordered_json::array();
      for (const auto& l : result.levels) {
        levels.push_back({{"level", l.level},
                          {"patch_size", l.patch_size},
                          {"structure", l.structure_count},
                          {"texture", l.texture_count},
                          {"w", l.fit.params.weight},
                          {"b", l.fit.params.bias},
                          {"accuracy", l.fit.accuracy},
                          {"iterations", l.fit.iterations},
                          {"converged", l.fit.converged}});
        if (!g.json) {
          out << "level " << l.level << " (size " << l.patch_size << "): w = " << l.fit.params.weight
              << ", b = " << l.fit.params.bias << ", accuracy " << fixed6(l.fit.accuracy) << '\n';
        }
      }
      if (g.json) out << ordered_json{{"params", fit_out}, {"levels", levels}}.dump(2) << '\n';
      return kOk;
    }

    if (eval->parsed()) {
      MetricConfig config;
      config.pooling = parse_pooling(pooling);
      const Scorer scorer(resolve_weights(eval_res.weights, err), resolve_params(eval_res.params),
                          config);
      EvalOptions opts;
      opts.metric = parse_metric(metric);
      opts.mode = parse_eval_mode(eval_mode);
      opts.cache = eval_cache;
      opts.resize_short_side = resize;
      opts.seed = g.seed;
      const EvalReport report = run_eval(eval_manifest, scorer, opts);
      const std::string json = report_json(report);
      if (!eval_out.empty()) {
        std::ofstream f(eval_out, std::ios::trunc);
        if (!f) throw DataError("cannot write report " + eval_out);
        f << json << '\n';
      }
      for (const auto& fail : report.failures) {
        err << "warning: record " << fail.index << " skipped: " << fail.message << '\n';
      }
      if (g.json) {
        out << json << '\n';
      } else {
        const auto& o = report.overall;
        out << "records " << report.records << ", scored " << report.scored << ", failed "
            << report.failures.size() << '\n';
        if (o.degenerate) {
          out << "degenerate: " << o.message << '\n';
        } else if (report.mode == "mos") {
          out << "PLCC " << fixed6(o.plcc) << "  SRCC " << fixed6(o.srcc) << "  KRCC "
              << fixed6(o.krcc) << (o.plcc_fallback ? "  (raw Pearson)" : "") << '\n';
        } else {
          out << "2AFC " << fixed6(o.two_afc) << '\n';
        }
      }
      return kOk;
    }

    if (recover->parsed()) {
      auto objective = autograd::parse_objective(rec_metric);
      if (objective == autograd::Objective::Adists && parse_pooling(pooling) == PoolingMode::ReferenceWeighted) {
        objective = autograd::Objective::AdistsReferenceWeighted;
      }
      const Tensor x = load_image(ref, 0);
      rec_opts.seed = g.seed;
      std::optional<Backbone> backbone;
      LogisticParams params = resolve_params(rec_res.params);
      if (objective == autograd::Objective::Adists ||
          objective == autograd::Objective::AdistsReferenceWeighted) {
        backbone.emplace(resolve_weights(rec_res.weights, err));
      }
      const autograd::ObjectiveEvaluator evaluator(objective, x, backbone ? &*backbone : nullptr,
                                                   &params);
      const Tensor start = recovery_start(x, parse_recovery_init(rec_init), rec_opts);
      const RecoveryReport report = recover_reference(evaluator, x, start, rec_opts);
      encode_image(report.image, rec_out);
      if (!rec_trace.empty()) write_recovery_trace(report, rec_trace);
      if (g.json) {
        out << ordered_json{{"metric", autograd::objective_name(objective)},
                            {"init", rec_init},
                            {"iterations", report.iterations},
                            {"accepted_steps", report.trace.size() - 1},
                            {"initial_value", report.trace.front().value},
                            {"final_value", report.final_value()},
                            {"initial_psnr", report.initial_psnr()},
                            {"final_psnr", report.final_psnr()},
                            {"stop_reason", report.stop_reason},
                            {"aborted", report.aborted}}
                   .dump(2)
            << '\n';
      } else {
        out << "value " << fixed6(report.trace.front().value) << " -> " << fixed6(report.final_value())
            << ", PSNR " << fixed6(report.initial_psnr()) << " -> " << fixed6(report.final_psnr())
            << " dB after " << report.iterations << " iterations (" << report.stop_reason << ")\n";
      }
      if (report.aborted) throw NumericError("recovery aborted: " + report.stop_reason);
      return kOk;
    }

    if (inspect->parsed()) {
      const WeightArchive archive = load_archive(inspect_path);
      const auto problems = validate_backbone_archive(archive);
      ordered_json entries = ordered_json::array();
      for (const auto& e : archive.entries()) {
        double lo = INFINITY, hi = -INFINITY;
        for (float v : e.tensor.values()) {
          lo = std::min(lo, static_cast<double>(v));
          hi = std::max(hi, static_cast<double>(v));
        }
        entries.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"numel", e.tensor.size()},
                           {"min", e.tensor.empty() ? 0.0 : lo}, {"max", e.tensor.empty() ? 0.0 : hi}});
        if (!g.json) {
          out << e.name << '\t' << shape_string(e.tensor.shape()) << '\t' << e.tensor.size() << '\n';
        }
      }
      if (g.json) {
        out << ordered_json{{"entries", entries},
                            {"backbone_complete", problems.empty()},
                            {"problems", problems}}
                   .dump(2)
            << '\n';
      } else {
        out << archive.size() << " entries; backbone "
            << (problems.empty() ? "complete" : "incomplete") << '\n';
        for (const auto& p : problems) out << "  " << p << '\n';
      }
      return kOk;
    }

    if (synth_archive->parsed()) {
      save_archive(synthetic::make_archive(g.seed), synth_out);
      out << synth_out << '\n';
      return kOk;
    }
    if (synth_corpus->parsed()) {
      save_corpus(synthetic::patch_corpus(g.seed, per_class), synth_dir);
      out << (std::filesystem::path(synth_dir) / "manifest.csv").string() << '\n';
      return kOk;
    }
    if (synth_noise->parsed()) {
      std::filesystem::create_directories(synth_dir);
      const auto m = synthetic::write_noise_manifest(synth_dir, g.seed, noise_images, noise_size, sigmas);
      out << m.manifest.string() << '\n';
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "error[usage]: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error[data]: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    err << "error[numeric]: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error[data]: " << e.what() << '\n';
    return kData;
  } catch (const Error& e) {
    err << "error[data]: " << e.what() << '\n';
    return kData;
  }
  err << "error[usage]: no subcommand\n";
  return kUsage;
}

}  // namespace adists::cli
