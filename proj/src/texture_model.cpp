#include "adists/texture_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>

#include "adists/image_io.hpp"

namespace adists {

template <typename T>
BasicTensor<T> luminance(const BasicTensor<T>& rgb) {
  require_rank(rgb, 3, "luminance");
  if (rgb.channels() != 3) throw ShapeError("luminance: expected 3 channels");
  BasicTensor<T> out({1, rgb.height(), rgb.width()});
  const auto r = rgb.channel(0), g = rgb.channel(1), b = rgb.channel(2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<T>(0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]);
  }
  return out;
}

template <typename T>
BasicTensor<T> stage_dispersion(const BasicTensor<T>& features, const WindowSpec& window,
                                double c) {
  if (!(c > 0.0)) throw UsageError("dispersion: stabiliser c must be positive");
  const auto m = windowed_moments(features, window);
  const std::size_t channels = m.mean.channels(), plane = m.mean.plane();
  BasicTensor<T> gamma({1, m.mean.height(), m.mean.width()});
  std::vector<double> acc(plane, 0.0);
  for (std::size_t j = 0; j < channels; ++j) {
    const auto mu = m.mean.channel(j);
    const auto var = m.variance.channel(j);
    for (std::size_t k = 0; k < plane; ++k) {
      acc[k] += static_cast<double>(var[k]) / (static_cast<double>(mu[k]) + c);
    }
  }
  for (std::size_t k = 0; k < plane; ++k) {
    gamma[k] = static_cast<T>(acc[k] / static_cast<double>(channels));
  }
  return gamma;
}

template <typename T>
DispersionMap<T> dispersion_index(const FeaturePyramid<T>& pyramid, const WindowSpec& window,
                                  double c) {
  DispersionMap<T> map;
  map.c = c;
  for (std::size_t i = 0; i < pyramid.levels(); ++i) {
    map.stages.push_back(i == 0 ? stage_dispersion(luminance(pyramid.stages[0]), window, c)
                                : stage_dispersion(pyramid.stages[i], window, c));
  }
  return map;
}

double StageLogistic::probability(double gamma) const {
  const double z = weight * gamma + bias;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LogisticParams default_logistic_params() {
  LogisticParams p;
  // FITTED_DEFAULTS_BEGIN
  p.stages = {{-0.69254234729480324, 0.016665860862782596}, {-30.452167129240706, 5.709462550803166}, {-353.11961784614505, 12.068639433486208}, {-2048.5198327363519, 9.4330259012336057}, {-12002.806598111098, 7.8855497517575319}, {-209800.01282418103, 8.6416588925885947}};
  // FITTED_DEFAULTS_END
  p.c = kDefaultDispersionStabilizer;
  p.window = WindowSpec{};
  p.source = "synthetic-corpus-default";
  return p;
}

std::string format_params(const LogisticParams& params) {
  std::ostringstream out;
  char buf[64];
  out << "# texture classifier parameters (p = 1 / (1 + exp(-(w * gamma + b))))\n";
  out << "format = adists-logistic-v1\n";
  std::snprintf(buf, sizeof(buf), "%.17g", params.c);
  out << "c = " << buf << "\n";
  out << "window = " << params.window.to_string() << "\n";
  if (!params.source.empty()) out << "source = " << params.source << "\n";
  for (std::size_t i = 0; i < params.stages.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", params.stages[i].weight);
    out << "stage_" << i << ".w = " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", params.stages[i].bias);
    out << "stage_" << i << ".b = " << buf << "\n";
  }
  return out.str();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || !std::isfinite(v)) {
    throw DataError("params: bad numeric value for '" + key + "': '" + value + "'");
  }
  return v;
}

WindowSpec parse_window(const std::string& value) {
  const auto x = value.find('x');
  if (x == std::string::npos) throw DataError("params: bad window '" + value + "'");
  WindowSpec w;
  try {
    w.height = std::stoul(value.substr(0, x));
    w.width = std::stoul(value.substr(x + 1));
  } catch (const std::exception&) {
    throw DataError("params: bad window '" + value + "'");
  }
  return w;
}

}  // namespace

LogisticParams parse_params(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("params: malformed line '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  LogisticParams p;
  if (auto it = kv.find("c"); it != kv.end()) p.c = parse_double("c", it->second);
  if (auto it = kv.find("window"); it != kv.end()) p.window = parse_window(it->second);
  if (auto it = kv.find("source"); it != kv.end()) p.source = it->second;
  for (std::size_t i = 0;; ++i) {
    const auto wk = "stage_" + std::to_string(i) + ".w";
    const auto bk = "stage_" + std::to_string(i) + ".b";
    const bool has_w = kv.contains(wk), has_b = kv.contains(bk);
    if (!has_w && !has_b) break;
    if (has_w != has_b) throw DataError("params: stage " + std::to_string(i) + " incomplete");
    p.stages.push_back({parse_double(wk, kv[wk]), parse_double(bk, kv[bk])});
  }
  if (p.stages.empty()) throw DataError("params: no stage_i.w / stage_i.b entries");
  return p;
}

void save_params(const LogisticParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("params: cannot write " + path.string());
  out << format_params(params);
}

LogisticParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("params: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_params(text.str());
}

template <typename T>
BasicTensor<T> TextureProbabilityMaps<T>::structure(std::size_t level) const {
  BasicTensor<T> q(p.at(level).shape());
  for (std::size_t k = 0; k < q.size(); ++k) q[k] = T{1} - p[level][k];
  return q;
}

template <typename T>
TextureProbabilityMaps<T> texture_probability(const DispersionMap<T>& gamma,
                                              const LogisticParams& params) {
  if (params.stages.size() < gamma.stages.size()) {
    throw UsageError("texture_probability: params cover " +
                     std::to_string(params.stages.size()) + " levels, dispersion has " +
                     std::to_string(gamma.stages.size()));
  }
  TextureProbabilityMaps<T> maps;
  for (std::size_t i = 0; i < gamma.stages.size(); ++i) {
    BasicTensor<T> p(gamma.stages[i].shape());
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] = static_cast<T>(params.stages[i].probability(gamma.stages[i][k]));
    }
    maps.p.push_back(std::move(p));
  }
  return maps;
}

template <typename T>
TextureProbabilityMaps<T> combine_min(const TextureProbabilityMaps<T>& px,
                                      const TextureProbabilityMaps<T>& py) {
  if (px.p.size() != py.p.size()) throw ShapeError("combine_min: level count mismatch");
  TextureProbabilityMaps<T> out;
  for (std::size_t i = 0; i < px.p.size(); ++i) {
    require_same_shape(px.p[i], py.p[i], "combine_min");
    BasicTensor<T> m(px.p[i].shape());
    for (std::size_t k = 0; k < m.size(); ++k) {
      m[k] = py.p[i][k] < px.p[i][k] ? py.p[i][k] : px.p[i][k];
    }
    out.p.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------

PatchCorpus load_corpus_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("corpus: cannot open " + manifest.string());
  const auto base = manifest.parent_path();
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,label,size") {
    throw DataError("corpus: manifest must start with header 'path,label,size'");
  }
  PatchCorpus corpus;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (fields.size() != 3) {
      throw DataError("corpus: line " + std::to_string(line_no) + " needs 3 fields");
    }
    PatchLabel label;
    if (fields[1] == "texture") {
      label = PatchLabel::Texture;
    } else if (fields[1] == "structure") {
      label = PatchLabel::Structure;
    } else {
      throw DataError("corpus: line " + std::to_string(line_no) + ": unknown label '" +
                      fields[1] + "'");
    }
    std::size_t size = 0;
    try {
      size = std::stoul(fields[2]);
    } catch (const std::exception&) {
      throw DataError("corpus: line " + std::to_string(line_no) + ": bad size");
    }
    if (std::find(kPatchSizes.begin(), kPatchSizes.end(), size) == kPatchSizes.end()) {
      throw DataError("corpus: line " + std::to_string(line_no) + ": size " +
                      std::to_string(size) + " not in {16,32,64,128,256}");
    }
    std::filesystem::path p(fields[0]);
    if (p.is_relative()) p = base / p;
    corpus.records.push_back({decode_image(p), label, size});
  }
  return corpus;
}

void save_corpus(const PatchCorpus& corpus, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  std::ofstream manifest(directory / "manifest.csv", std::ios::trunc);
  if (!manifest) throw DataError("corpus: cannot write manifest in " + directory.string());
  manifest << "path,label,size\n";
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    const char* label = r.label == PatchLabel::Texture ? "texture" : "structure";
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03zu_%05zu.png", label, r.size, i);
    encode_image(r.image, directory / name);
    manifest << name << "," << label << "," << r.size << "\n";
  }
}

namespace {

struct LossGrad {
  double loss;
  double gw, gb;
  double hww, hwb, hbb;
};

LossGrad evaluate(const std::vector<double>& x, const std::vector<int>& y, double w, double b,
                  double lambda) {
  LossGrad r{0, 0, 0, 0, 0, 0};
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = w * x[i] + b;
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    r.loss += softplus - y[i] * z;
    const double p = StageLogistic{w, b}.probability(x[i]);
    const double d = p - y[i];
    const double h = p * (1.0 - p);
    r.gw += d * x[i];
    r.gb += d;
    r.hww += h * x[i] * x[i];
    r.hwb += h * x[i];
    r.hbb += h;
  }
  r.loss = r.loss / n + 0.5 * lambda * w * w;
  r.gw = r.gw / n + lambda * w;
  r.gb /= n;
  r.hww = r.hww / n + lambda;
  r.hwb /= n;
  r.hbb /= n;
  return r;
}

double loss_only(const std::vector<double>& x, const std::vector<int>& y, double w, double b,
                 double lambda) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = w * x[i] + b;
    loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - y[i] * z;
  }
  return loss / static_cast<double>(x.size()) + 0.5 * lambda * w * w;
}

}  // namespace

LogisticFit fit_logistic_1d(const std::vector<double>& gamma, const std::vector<int>& label,
                            const FitOptions& options) {
  if (gamma.size() != label.size() || gamma.empty()) {
    throw DataError("fit_logistic: gamma/label size mismatch or empty");
  }
  const auto positives = std::count(label.begin(), label.end(), 1);
  const auto negatives = std::count(label.begin(), label.end(), 0);
  if (positives + negatives != static_cast<std::ptrdiff_t>(label.size())) {
    throw DataError("fit_logistic: labels must be 0 or 1");
  }
  if (positives == 0 || negatives == 0) {
    throw DataError("fit_logistic: corpus has a single class");
  }
  for (double g : gamma) {
    if (!std::isfinite(g)) throw NumericError("fit_logistic: non-finite feature");
  }

  // Newton on the standardised feature z = (gamma - mean) / scale. The
  // penalty acts on the weight of z, which keeps it independent of the
  // feature's units.
  const double n = static_cast<double>(gamma.size());
  double mean = 0.0;
  for (double g : gamma) mean += g;
  mean /= n;
  double var = 0.0;
  for (double g : gamma) var += (g - mean) * (g - mean);
  const double scale = var > 0.0 ? std::sqrt(var / n) : 1.0;
  std::vector<double> z(gamma.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (gamma[i] - mean) / scale;
  const double lambda = options.l2_penalty;

  LogisticFit fit;
  double w = 0.0;
  double b = std::log(static_cast<double>(positives) / static_cast<double>(negatives));
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const LossGrad lg = evaluate(z, label, w, b, lambda);
    fit.loss_trace.push_back(lg.loss);
    fit.iterations = it;
    if (std::max(std::abs(lg.gw), std::abs(lg.gb)) < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    double dw = -lg.gw, db = -lg.gb;
    const double det = lg.hww * lg.hbb - lg.hwb * lg.hwb;
    if (det > 1e-300 && lg.hbb > 0.0) {
      dw = -(lg.hbb * lg.gw - lg.hwb * lg.gb) / det;
      db = -(lg.hww * lg.gb - lg.hwb * lg.gw) / det;
      if (lg.gw * dw + lg.gb * db >= 0.0) {
        dw = -lg.gw;
        db = -lg.gb;
      }
    }
    const double slope = lg.gw * dw + lg.gb * db;
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const double nl = loss_only(z, label, w + t * dw, b + t * db, lambda);
      if (nl <= lg.loss + 1e-4 * t * slope) {
        w += t * dw;
        b += t * db;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No representable decrease left along the descent direction.
      fit.converged = true;
      break;
    }
  }
  fit.params = {w / scale, b - w * mean / scale};
  fit.accuracy = logistic_accuracy(fit.params, gamma, label);
  return fit;
}

double logistic_accuracy(const StageLogistic& model, const std::vector<double>& gamma,
                         const std::vector<int>& label) {
  if (gamma.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const int predicted = model.probability(gamma[i]) >= 0.5 ? 1 : 0;
    correct += predicted == label[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(gamma.size());
}

namespace {

Tensor reflect_pad(const Tensor& image, std::size_t margin) {
  const std::size_t h = image.height(), w = image.width();
  const auto mirror = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return static_cast<std::size_t>(i);
  };
  Tensor out({image.channels(), h + 2 * margin, w + 2 * margin});
  const auto m = static_cast<std::ptrdiff_t>(margin);
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::size_t y = 0; y < out.height(); ++y) {
      const std::size_t sy = mirror(static_cast<std::ptrdiff_t>(y) - m, static_cast<std::ptrdiff_t>(h));
      for (std::size_t x = 0; x < out.width(); ++x) {
        const std::size_t sx =
            mirror(static_cast<std::ptrdiff_t>(x) - m, static_cast<std::ptrdiff_t>(w));
        out.at(c, y, x) = image.at(c, sy, sx);
      }
    }
  }
  return out;
}

}  // namespace

double patch_dispersion(const Backbone& backbone, const Tensor& patch, std::size_t level,
                        double c) {
  require_rank(patch, 3, "patch_dispersion");
  if (level == 0) {
    const Tensor lum = luminance(patch);
    return stage_dispersion(lum, WindowSpec{lum.height(), lum.width()}, c)[0];
  }
  // The patch is embedded in a mirrored surround so that the zero padding of
  // the convolutions does not put an artificial frame into the statistics;
  // the level map is then cropped back to the patch footprint.
  const std::size_t stride = std::size_t{1} << (level - 1);
  const std::size_t side = std::min(patch.height(), patch.width());
  const std::size_t margin = std::min(side / 4, side - 1) / stride * stride;
  const Tensor padded = margin > 0 ? reflect_pad(patch, margin) : patch;
  const auto pyramid = backbone.extract(padded, level);
  const Tensor& full = pyramid.stages[level];
  const std::size_t offset = margin / stride;
  const std::size_t fh = (patch.height() + stride - 1) / stride;
  const std::size_t fw = (patch.width() + stride - 1) / stride;
  Tensor f({full.channels(), fh, fw});
  for (std::size_t ch = 0; ch < f.channels(); ++ch) {
    for (std::size_t y = 0; y < fh; ++y) {
      for (std::size_t x = 0; x < fw; ++x) f.at(ch, y, x) = full.at(ch, y + offset, x + offset);
    }
  }
  return stage_dispersion(f, WindowSpec{fh, fw}, c)[0];
}

LevelSamples level_samples(const PatchCorpus& corpus, const Backbone& backbone,
                           std::size_t level, double c, const FitOptions& options) {
  const std::size_t size = options.level_patch_size.at(level);
  std::vector<const PatchRecord*> matching;
  for (const auto& r : corpus.records) {
    if (r.size == size) matching.push_back(&r);
  }
  LevelSamples samples;
  samples.gamma.resize(matching.size());
  samples.label.resize(matching.size());
  const auto n = static_cast<std::ptrdiff_t>(matching.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      samples.gamma[i] = patch_dispersion(backbone, matching[i]->image, level, c);
      samples.label[i] = matching[i]->label == PatchLabel::Texture ? 1 : 0;
    } catch (...) {
#pragma omp critical(level_samples_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return samples;
}

ClassifierFit fit_classifier(const PatchCorpus& corpus, const Backbone& backbone,
                             const WindowSpec& window, double c, const FitOptions& options) {
  window.validate();
  const auto textures = std::count_if(corpus.records.begin(), corpus.records.end(),
                                      [](const auto& r) { return r.label == PatchLabel::Texture; });
  if (textures == 0 || textures == static_cast<std::ptrdiff_t>(corpus.records.size())) {
    throw DataError("fit_classifier: corpus must contain both structure and texture patches");
  }
  ClassifierFit result;
  result.params.c = c;
  result.params.window = window;
  result.params.source = "fit-classifier";
  for (std::size_t level = 0; level < kNumPyramidLevels; ++level) {
    LevelSamples s = level_samples(corpus, backbone, level, c, options);
    LevelFitReport report;
    report.level = level;
    report.patch_size = options.level_patch_size[level];
    report.texture_count = static_cast<std::size_t>(std::count(s.label.begin(), s.label.end(), 1));
    report.structure_count = s.label.size() - report.texture_count;
    if (report.texture_count < options.min_per_class ||
        report.structure_count < options.min_per_class) {
      throw DataError("fit_classifier: level " + std::to_string(level) + " needs at least " +
                      std::to_string(options.min_per_class) + " patches per class of size " +
                      std::to_string(report.patch_size) + " (have " +
                      std::to_string(report.structure_count) + " structure, " +
                      std::to_string(report.texture_count) + " texture)");
    }
    report.fit = fit_logistic_1d(s.gamma, s.label, options);
    result.params.stages.push_back(report.fit.params);
    result.levels.push_back(std::move(report));
  }
  return result;
}

std::vector<GrayMap> emit_probability_maps(const Tensor& image, const Backbone& backbone,
                                           const LogisticParams& params) {
  const auto pyramid = backbone.extract(image);
  const auto gamma = dispersion_index(pyramid, params.window, params.c);
  const auto maps = texture_probability(gamma, params);
  std::vector<GrayMap> out;
  for (const auto& p : maps.p) {
    GrayMap g{p.height(), p.width(), std::vector<std::uint8_t>(p.size())};
    for (std::size_t k = 0; k < p.size(); ++k) {
      g.pixels[k] = static_cast<std::uint8_t>(std::lround(std::clamp(p[k], 0.0f, 1.0f) * 255.0f));
    }
    out.push_back(std::move(g));
  }
  return out;
}

#define ADISTS_INSTANTIATE_TEXTURE(T)                                                        \
  template BasicTensor<T> luminance(const BasicTensor<T>&);                                  \
  template BasicTensor<T> stage_dispersion(const BasicTensor<T>&, const WindowSpec&, double); \
  template DispersionMap<T> dispersion_index(const FeaturePyramid<T>&, const WindowSpec&,    \
                                             double);                                        \
  template struct TextureProbabilityMaps<T>;                                                 \
  template TextureProbabilityMaps<T> texture_probability(const DispersionMap<T>&,            \
                                                         const LogisticParams&);             \
  template TextureProbabilityMaps<T> combine_min(const TextureProbabilityMaps<T>&,           \
                                                 const TextureProbabilityMaps<T>&);

ADISTS_INSTANTIATE_TEXTURE(float)
ADISTS_INSTANTIATE_TEXTURE(double)

#undef ADISTS_INSTANTIATE_TEXTURE

}  // namespace adists
