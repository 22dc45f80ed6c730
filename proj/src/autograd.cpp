#include "adists/autograd.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "adists/kernels.hpp"
#include "adists/local_stats.hpp"

namespace adists::autograd {

namespace {

void accumulate(TensorD* into, const TensorD& delta) {
  if (!into) return;
  for (std::size_t i = 0; i < into->size(); ++i) (*into)[i] += delta[i];
}

template <typename F>
TensorD map(const TensorD& a, F&& f) {
  TensorD out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
TensorD zip(const TensorD& a, const TensorD& b, F&& f) {
  TensorD out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv(std::uint64_t h, std::uint64_t v) {
  return (h ^ v) * kFnvPrime;
}

}  // namespace

NodeId Tape::input(TensorD value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Tape::constant(TensorD value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

double Tape::scalar(NodeId id) const {
  const TensorD& v = value(id);
  if (v.size() != 1) throw ShapeError("tape: node is not a scalar: " + shape_string(v.shape()));
  return v[0];
}

Tape::Inputs Tape::gather(const std::vector<NodeId>& ids) const {
  Inputs in;
  in.reserve(ids.size());
  for (NodeId id : ids) in.push_back(&nodes_.at(id).value);
  return in;
}

NodeId Tape::record(std::vector<NodeId> inputs, Forward forward, Backward backward,
                    bool branching) {
  Node n;
  n.value = forward(gather(inputs));
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [&](NodeId id) { return nodes_.at(id).requires_grad; });
  n.inputs = std::move(inputs);
  n.forward = std::move(forward);
  n.backward = std::move(backward);
  n.branching = branching;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Tape::conv2d(NodeId x, const TensorD& filters, const TensorD& bias, std::size_t padding) {
  const TensorD* w = &filters;
  const TensorD* b = &bias;
  return record(
      {x},
      [w, b, padding](const Inputs& in) { return kernels::conv2d(*in[0], *w, *b, 1, padding); },
      [w, padding](const TensorD& g, const Inputs& in, const TensorD&,
                   const std::vector<TensorD*>& gin) {
        accumulate(gin[0], kernels::conv2d_backward_input(g, *w, in[0]->shape(), 1, padding));
      });
}

NodeId Tape::relu(NodeId x) {
  return record(
      {x}, [](const Inputs& in) { return kernels::relu(*in[0]); },
      [](const TensorD& g, const Inputs& in, const TensorD&, const std::vector<TensorD*>& gin) {
        accumulate(gin[0], kernels::relu_backward(g, *in[0]));
      },
      true);
}

NodeId Tape::l2_pool(NodeId x) {
  return record(
      {x}, [](const Inputs& in) { return kernels::l2_pool(*in[0]); },
      [](const TensorD& g, const Inputs& in, const TensorD& out,
         const std::vector<TensorD*>& gin) {
        accumulate(gin[0], kernels::l2_pool_backward(g, *in[0], out));
      });
}

NodeId Tape::affine_channels(NodeId x, std::vector<double> shift, std::vector<double> scale) {
  if (value(x).rank() != 3 || shift.size() != value(x).channels() ||
      scale.size() != value(x).channels()) {
    throw ShapeError("affine_channels: per-channel constants do not match the input");
  }
  return record(
      {x},
      [shift, scale](const Inputs& in) {
        TensorD out(in[0]->shape());
        for (std::size_t c = 0; c < out.channels(); ++c) {
          const auto src = in[0]->channel(c);
          auto dst = out.channel(c);
          for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - shift[c]) * scale[c];
        }
        return out;
      },
      [scale](const TensorD& g, const Inputs&, const TensorD&, const std::vector<TensorD*>& gin) {
        if (!gin[0]) return;
        for (std::size_t c = 0; c < g.channels(); ++c) {
          const auto src = g.channel(c);
          auto dst = gin[0]->channel(c);
          for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i] * scale[c];
        }
      });
}

NodeId Tape::luminance(NodeId x) {
  if (value(x).rank() != 3 || value(x).channels() != 3) {
    throw ShapeError("luminance: expected a 3-channel map");
  }
  static constexpr std::array<double, 3> kWeights{0.299, 0.587, 0.114};
  return record(
      {x}, [](const Inputs& in) { return adists::luminance(*in[0]); },
      [](const TensorD& g, const Inputs&, const TensorD&, const std::vector<TensorD*>& gin) {
        if (!gin[0]) return;
        for (std::size_t c = 0; c < 3; ++c) {
          auto dst = gin[0]->channel(c);
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += kWeights[c] * g[i];
        }
      });
}

namespace {

void require_same(const TensorD& a, const TensorD& b, const char* what) {
  require_same_shape(a, b, what);
}

}  // namespace

NodeId Tape::add(NodeId a, NodeId b) {
  require_same(value(a), value(b), "tape add");
  return record(
      {a, b}, [](const Inputs& in) { return zip(*in[0], *in[1], std::plus<>()); },
      [](const TensorD& g, const Inputs&, const TensorD&, const std::vector<TensorD*>& gin) {
        accumulate(gin[0], g);
        accumulate(gin[1], g);
      });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  require_same(value(a), value(b), "tape sub");
  return record(
      {a, b}, [](const Inputs& in) { return zip(*in[0], *in[1], std::minus<>()); },
      [](const TensorD& g, const Inputs&, const TensorD&, const std::vector<TensorD*>& gin) {
        accumulate(gin[0], g);
        if (gin[1]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
        }
      });
}

NodeId Tape::mul(NodeId a, NodeId b) {
  require_same(value(a), value(b), "tape mul");
  return record(
      {a, b}, [](const Inputs& in) { return zip(*in[0], *in[1], std::multiplies<>()); },
      [](const TensorD& g, const Inputs& in, const TensorD&, const std::vector<TensorD*>& gin) {
        if (gin[0]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*in[1])[i];
        }
        if (gin[1]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * (*in[0])[i];
        }
      });
}

NodeId Tape::div(NodeId a, NodeId b) {
  require_same(value(a), value(b), "tape div");
  return record(
      {a, b}, [](const Inputs& in) { return zip(*in[0], *in[1], std::divides<>()); },
      [](const TensorD& g, const Inputs& in, const TensorD& out,
         const std::vector<TensorD*>& gin) {
        if (gin[0]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] / (*in[1])[i];
        }
        if (gin[1]) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i] * out[i] / (*in[1])[i];
        }
      });
}

NodeId Tape::add_scalar(NodeId a, double s) {
  return record(
      {a}, [s](const Inputs& in) { return map(*in[0], [s](double v) { return v + s; }); },
      [](const TensorD& g, const Inputs&, const TensorD&, const std::vector<TensorD*>& gin) {
        accumulate(gin[0], g);
      });
}

NodeId Tape::scale(NodeId a, double s) {
  return record(
      {a}, [s](const Inputs& in) { return map(*in[0], [s](double v) { return v * s; }); },
      [s](const TensorD& g, const Inputs&, const TensorD&, const std::vector<TensorD*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * s;
      });
}

NodeId Tape::one_minus(NodeId a) {
  return record(
      {a}, [](const Inputs& in) { return map(*in[0], [](double v) { return 1.0 - v; }); },
      [](const TensorD& g, const Inputs&, const TensorD&, const std::vector<TensorD*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] -= g[i];
      });
}

NodeId Tape::logistic(NodeId a, double w, double b) {
  const StageLogistic model{w, b};
  return record(
      {a},
      [model](const Inputs& in) {
        return map(*in[0], [model](double v) { return model.probability(v); });
      },
      [w](const TensorD& g, const Inputs&, const TensorD& out, const std::vector<TensorD*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gin[0])[i] += g[i] * w * out[i] * (1.0 - out[i]);
        }
      });
}

NodeId Tape::minimum(NodeId a, NodeId b) {
  require_same(value(a), value(b), "tape minimum");
  return record(
      {a, b},
      [](const Inputs& in) {
        return zip(*in[0], *in[1], [](double x, double y) { return y < x ? y : x; });
      },
      [](const TensorD& g, const Inputs& in, const TensorD&, const std::vector<TensorD*>& gin) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const bool second = (*in[1])[i] < (*in[0])[i];
          TensorD* target = second ? gin[1] : gin[0];
          if (target) (*target)[i] += g[i];
        }
      },
      true);
}

NodeId Tape::clamp_min(NodeId a, double lo) {
  return record(
      {a},
      [lo](const Inputs& in) {
        return map(*in[0], [lo](double v) { return v < lo ? lo : v; });
      },
      [lo](const TensorD& g, const Inputs& in, const TensorD&, const std::vector<TensorD*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!((*in[0])[i] < lo)) (*gin[0])[i] += g[i];
        }
      },
      true);
}

NodeId Tape::box_mean(NodeId a, std::size_t window_h, std::size_t window_w) {
  return record(
      {a},
      [window_h, window_w](const Inputs& in) {
        return adists::box_mean(*in[0], window_h, window_w);
      },
      [window_h, window_w](const TensorD& g, const Inputs& in, const TensorD&,
                           const std::vector<TensorD*>& gin) {
        accumulate(gin[0], box_mean_backward(g, window_h, window_w, in[0]->shape()));
      });
}

NodeId Tape::channel_mean(NodeId a) {
  if (value(a).rank() != 3) throw ShapeError("channel_mean: expected rank 3");
  return record(
      {a},
      [](const Inputs& in) {
        const TensorD& x = *in[0];
        TensorD out({1, x.height(), x.width()});
        for (std::size_t c = 0; c < x.channels(); ++c) {
          const auto src = x.channel(c);
          for (std::size_t i = 0; i < src.size(); ++i) out[i] += src[i];
        }
        const double n = static_cast<double>(x.channels());
        for (auto& v : out.values()) v /= n;
        return out;
      },
      [](const TensorD& g, const Inputs& in, const TensorD&, const std::vector<TensorD*>& gin) {
        if (!gin[0]) return;
        const double n = static_cast<double>(in[0]->channels());
        for (std::size_t c = 0; c < in[0]->channels(); ++c) {
          auto dst = gin[0]->channel(c);
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] / n;
        }
      });
}

NodeId Tape::broadcast_channels(NodeId a, std::size_t channels) {
  if (value(a).rank() != 3 || value(a).channels() != 1) {
    throw ShapeError("broadcast_channels: expected a 1 x H x W map");
  }
  return record(
      {a},
      [channels](const Inputs& in) {
        const TensorD& x = *in[0];
        TensorD out({channels, x.height(), x.width()});
        for (std::size_t c = 0; c < channels; ++c) {
          std::copy(x.values().begin(), x.values().end(), out.channel(c).begin());
        }
        return out;
      },
      [](const TensorD& g, const Inputs&, const TensorD&, const std::vector<TensorD*>& gin) {
        if (!gin[0]) return;
        for (std::size_t c = 0; c < g.channels(); ++c) {
          const auto src = g.channel(c);
          for (std::size_t i = 0; i < src.size(); ++i) (*gin[0])[i] += src[i];
        }
      });
}

NodeId Tape::mean(NodeId a) {
  return record(
      {a},
      [](const Inputs& in) {
        double s = 0.0;
        for (double v : in[0]->values()) s += v;
        return TensorD({1}, std::vector<double>{s / static_cast<double>(in[0]->size())});
      },
      [](const TensorD& g, const Inputs& in, const TensorD&, const std::vector<TensorD*>& gin) {
        if (!gin[0]) return;
        const double d = g[0] / static_cast<double>(in[0]->size());
        for (auto& v : gin[0]->values()) v += d;
      });
}

TensorD Tape::gradient(NodeId output, NodeId wrt) const {
  if (scalar(output) != scalar(output)) throw NumericError("tape: output is NaN");
  if (wrt >= nodes_.size() || output >= nodes_.size()) throw UsageError("tape: bad node id");
  std::vector<TensorD> grads(nodes_.size());
  grads[output] = TensorD(nodes_[output].value.shape(), 1.0);
  for (std::size_t k = output + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    if (grads[k].empty() || !n.requires_grad || !n.backward) continue;
    std::vector<TensorD*> gin;
    gin.reserve(n.inputs.size());
    for (NodeId in : n.inputs) {
      if (!nodes_[in].requires_grad) {
        gin.push_back(nullptr);
        continue;
      }
      if (grads[in].empty()) grads[in] = TensorD(nodes_[in].value.shape(), 0.0);
      gin.push_back(&grads[in]);
    }
    n.backward(grads[k], gather(n.inputs), n.value, gin);
    if (k != wrt) grads[k] = TensorD();
  }
  if (grads[wrt].empty()) return TensorD(nodes_[wrt].value.shape(), 0.0);
  return std::move(grads[wrt]);
}

bool Tape::replay_matches() const {
  std::vector<TensorD> replayed(nodes_.size());
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const Node& n = nodes_[k];
    if (!n.forward) {
      replayed[k] = n.value;
      continue;
    }
    Inputs in;
    for (NodeId id : n.inputs) in.push_back(&replayed[id]);
    replayed[k] = n.forward(in);
    const auto a = replayed[k].values();
    const auto b = n.value.values();
    if (replayed[k].shape() != n.value.shape() ||
        std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

std::uint64_t Tape::kink_signature() const {
  std::uint64_t h = kFnvOffset;
  for (const Node& n : nodes_) {
    if (!n.branching || !n.requires_grad) continue;
    const TensorD& a = nodes_[n.inputs[0]].value;
    if (n.inputs.size() == 2) {
      const TensorD& b = nodes_[n.inputs[1]].value;
      for (std::size_t i = 0; i < a.size(); ++i) h = fnv(h, b[i] < a[i] ? 1 : 0);
    } else {
      // relu passes x > 0; clamp_min passes x >= lo, i.e. out == in.
      for (std::size_t i = 0; i < a.size(); ++i) {
        h = fnv(h, std::bit_cast<std::uint64_t>(n.value[i]) == std::bit_cast<std::uint64_t>(a[i])
                       ? 1
                       : 0);
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

Objective parse_objective(const std::string& name) {
  if (name == "mse") return Objective::Mse;
  if (name == "msssim" || name == "ssim") return Objective::Msssim;
  if (name == "adists") return Objective::Adists;
  if (name == "adists-ref" || name == "adists_reference_weighted") {
    return Objective::AdistsReferenceWeighted;
  }
  throw UsageError("metric '" + name +
                   "' has no gradient support (expected mse, msssim, adists or adists-ref)");
}

std::string objective_name(Objective objective) {
  switch (objective) {
    case Objective::Mse: return "mse";
    case Objective::Msssim: return "msssim";
    case Objective::Adists: return "adists";
    case Objective::AdistsReferenceWeighted: return "adists-ref";
  }
  return "unknown";
}

namespace {

struct Moments {
  NodeId mean, variance;
};

Moments local_moments(Tape& t, NodeId f, std::size_t wh, std::size_t ww) {
  const NodeId mu = t.box_mean(f, wh, ww);
  const NodeId second = t.box_mean(t.mul(f, f), wh, ww);
  const NodeId var = t.clamp_min(t.sub(second, t.mul(mu, mu)), 0.0);
  return {mu, var};
}

NodeId dispersion(Tape& t, const Moments& m, double c) {
  return t.channel_mean(t.div(m.variance, t.add_scalar(m.mean, c)));
}

std::vector<NodeId> pyramid(Tape& t, NodeId image, const Backbone& backbone) {
  std::vector<double> shift(3), scale(3);
  for (std::size_t c = 0; c < 3; ++c) {
    shift[c] = backbone.input_mean()[c];
    scale[c] = 1.0 / backbone.input_std()[c];
  }
  std::vector<NodeId> levels{image};
  NodeId x = t.affine_channels(image, shift, scale);
  const auto& stages = backbone.layers<double>();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (s > 0) x = t.l2_pool(x);
    for (const auto& layer : stages[s]) x = t.relu(t.conv2d(x, layer.weight, layer.bias, 1));
    levels.push_back(x);
  }
  return levels;
}

struct Window {
  std::size_t h, w;
};

Window clamp_window(const WindowSpec& spec, const TensorD& f) {
  return {spec.clamped_height(f.height()), spec.clamped_width(f.width())};
}

}  // namespace

struct ObjectiveEvaluator::Reference {
  struct Level {
    TensorD features;
    TensorD mu, var;
    TensorD texture;  // p_x, 1 x H' x W'
    Window window;
    SsimConstants constants;
  };
  TensorD image;
  std::vector<Level> levels;
};

ObjectiveEvaluator::ObjectiveEvaluator(Objective objective, const Tensor& reference,
                                       const Backbone* backbone, const LogisticParams* params,
                                       MetricConfig config)
    : objective_(objective),
      shape_(reference.shape()),
      backbone_(backbone),
      params_(params),
      config_(config),
      reference_(std::make_unique<Reference>()) {
  require_rank(reference, 3, "objective");
  require_finite(reference, "objective");
  reference_->image = reference.cast<double>();
  if (objective_ == Objective::Mse) return;
  config_.validate();
  if (objective_ == Objective::Msssim) {
    Tape t;
    const NodeId x = t.constant(reference_->image);
    const Window w = clamp_window(config_.window, reference_->image);
    const Moments m = local_moments(t, x, w.h, w.w);
    reference_->levels.push_back(
        {reference_->image, t.value(m.mean), t.value(m.variance), {}, w, config_.constants(1.0)});
    return;
  }
  if (!backbone_ || !params_) {
    throw UsageError("adists objective needs a backbone and texture params");
  }
  require_compatible(*params_, config_);
  if (reference.channels() != 3) throw ShapeError("adists objective: expected an RGB image");
  const std::size_t min_extent = Backbone::min_input_extent(kNumStages);
  if (reference.height() < min_extent || reference.width() < min_extent) {
    throw ShapeError("adists objective: image smaller than 32x32");
  }
  Tape t;
  const NodeId x = t.constant(reference_->image);
  const auto levels = pyramid(t, x, *backbone_);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const TensorD f = t.value(levels[i]);
    const Window w = clamp_window(config_.window, f);
    const Moments m = local_moments(t, levels[i], w.h, w.w);
    NodeId gamma;
    if (i == 0) {
      gamma = dispersion(t, local_moments(t, t.luminance(levels[i]), w.h, w.w), config_.c);
    } else {
      gamma = dispersion(t, m, config_.c);
    }
    const NodeId p = t.logistic(gamma, params_->stages[i].weight, params_->stages[i].bias);
    const double range = i == 0 ? 1.0 : backbone_->dynamic_range(i);
    reference_->levels.push_back({f, t.value(m.mean), t.value(m.variance), t.value(p), w,
                                  config_.constants(range)});
  }
}

ObjectiveEvaluator::~ObjectiveEvaluator() = default;

namespace {

struct SimilarityTerms {
  NodeId l, s;
};

// l and s between a constant reference level and the differentiable level y.
SimilarityTerms similarity(Tape& t, NodeId fx, NodeId mu_x, NodeId var_x, NodeId fy,
                           const Moments& my, std::size_t wh, std::size_t ww,
                           const SsimConstants& k) {
  const NodeId cross = t.box_mean(t.mul(fx, fy), wh, ww);
  const NodeId mxy = t.mul(mu_x, my.mean);
  const NodeId cov = t.sub(cross, mxy);
  const NodeId l = t.div(t.add_scalar(t.scale(mxy, 2.0), k.c1),
                         t.add_scalar(t.add(t.mul(mu_x, mu_x), t.mul(my.mean, my.mean)), k.c1));
  const NodeId s = t.div(t.add_scalar(t.scale(cov, 2.0), k.c2),
                         t.add_scalar(t.add(var_x, my.variance), k.c2));
  return {l, s};
}

}  // namespace

ObjectiveEvaluator::Result ObjectiveEvaluator::evaluate(const TensorD& y, bool with_gradient,
                                                        bool check_replay) const {
  if (y.shape() != shape_) {
    throw ShapeError("objective: image " + shape_string(y.shape()) + " does not match " +
                     shape_string(shape_));
  }
  if (!y.all_finite()) throw NumericError("objective: non-finite pixel");
  Tape t;
  const NodeId yin = t.input(y);
  NodeId out = 0;
  switch (objective_) {
    case Objective::Mse: {
      const NodeId d = t.sub(yin, t.constant(reference_->image));
      out = t.mean(t.mul(d, d));
      break;
    }
    case Objective::Msssim: {
      const auto& ref = reference_->levels[0];
      const Moments my = local_moments(t, yin, ref.window.h, ref.window.w);
      const auto st = similarity(t, t.constant(ref.features), t.constant(ref.mu),
                                 t.constant(ref.var), yin, my, ref.window.h, ref.window.w,
                                 ref.constants);
      out = t.one_minus(t.mean(t.mul(st.l, st.s)));
      break;
    }
    case Objective::Adists:
    case Objective::AdistsReferenceWeighted: {
      const auto levels = pyramid(t, yin, *backbone_);
      const double total_channels = static_cast<double>(backbone_->config().total_channels());
      NodeId acc = 0;
      for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto& ref = reference_->levels[i];
        const std::size_t wh = ref.window.h, ww = ref.window.w;
        const Moments my = local_moments(t, levels[i], wh, ww);
        NodeId pooled = t.constant(ref.texture);
        if (objective_ == Objective::Adists) {
          const NodeId gamma =
              i == 0 ? dispersion(t, local_moments(t, t.luminance(levels[i]), wh, ww), config_.c)
                     : dispersion(t, my, config_.c);
          const NodeId py = t.logistic(gamma, params_->stages[i].weight, params_->stages[i].bias);
          pooled = t.minimum(pooled, py);
        }
        const std::size_t channels = ref.features.channels();
        const auto st = similarity(t, t.constant(ref.features), t.constant(ref.mu),
                                   t.constant(ref.var), levels[i], my, wh, ww, ref.constants);
        const NodeId p = t.broadcast_channels(pooled, channels);
        const NodeId term = t.add(t.mul(p, st.l), t.mul(t.one_minus(p), st.s));
        const NodeId level = t.scale(t.mean(term), static_cast<double>(channels) / total_channels);
        acc = i == 0 ? level : t.add(acc, level);
      }
      out = t.one_minus(acc);
      break;
    }
  }
  Result r;
  r.value = t.scalar(out);
  if (!std::isfinite(r.value)) throw NumericError("objective: non-finite value");
  r.kink_signature = t.kink_signature();
  if (with_gradient) r.gradient = t.gradient(out, yin);
  if (check_replay) r.replay_ok = t.replay_matches();
  return r;
}

TensorD grad_metric(Objective objective, const Tensor& x_ref, const Tensor& y,
                    const Backbone* backbone, const LogisticParams* params,
                    const MetricConfig& config) {
  require_same_shape(x_ref, y, "grad_metric");
  const ObjectiveEvaluator evaluator(objective, x_ref, backbone, params, config);
  return evaluator.evaluate(y.cast<double>(), true).gradient;
}

}  // namespace adists::autograd
