#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adists/backbone.hpp"
#include "adists/metrics.hpp"
#include "adists/tensor.hpp"
#include "adists/texture_model.hpp"

namespace adists::autograd {

using NodeId = std::size_t;

/// Records primitive operations on binary64 tensors together with the values
/// their adjoints need. Single use, single thread.
class Tape {
 public:
  NodeId input(TensorD value);     // differentiable leaf
  NodeId constant(TensorD value);  // no gradient flows into it

  const TensorD& value(NodeId id) const { return nodes_.at(id).value; }
  double scalar(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Backbone primitives. The filters and bias are referenced, not copied, and
  // must outlive the tape.
  NodeId conv2d(NodeId x, const TensorD& filters, const TensorD& bias, std::size_t padding);
  NodeId relu(NodeId x);
  NodeId l2_pool(NodeId x);
  /// out[c] = (x[c] - shift[c]) * scale[c]
  NodeId affine_channels(NodeId x, std::vector<double> shift, std::vector<double> scale);
  NodeId luminance(NodeId x);

  // Elementwise arithmetic; shapes must match.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId add_scalar(NodeId a, double s);
  NodeId scale(NodeId a, double s);
  NodeId one_minus(NodeId a);
  /// sigmoid(w * a + b)
  NodeId logistic(NodeId a, double w, double b);
  /// Elementwise min; ties and equal values take `a`.
  NodeId minimum(NodeId a, NodeId b);
  NodeId clamp_min(NodeId a, double lo);

  // Spatial and reduction primitives.
  NodeId box_mean(NodeId a, std::size_t window_h, std::size_t window_w);
  /// C x H x W -> 1 x H x W
  NodeId channel_mean(NodeId a);
  /// 1 x H x W -> C x H x W
  NodeId broadcast_channels(NodeId a, std::size_t channels);
  /// Mean of all elements, shape [1].
  NodeId mean(NodeId a);

  /// Reverse sweep from a scalar node; returns d(output)/d(wrt).
  TensorD gradient(NodeId output, NodeId wrt) const;

  /// Recomputes every node from the leaves and checks the values are
  /// bitwise equal to the recorded ones.
  bool replay_matches() const;

  /// Hash of every branch decision taken in the forward pass (ReLU signs,
  /// min choices, clamps). Equal signatures mean the same smooth piece.
  std::uint64_t kink_signature() const;

 private:
  using Inputs = std::vector<const TensorD*>;
  using Forward = std::function<TensorD(const Inputs&)>;
  using Backward = std::function<void(const TensorD& grad_out, const Inputs& in,
                                      const TensorD& out, const std::vector<TensorD*>& grad_in)>;

  struct Node {
    TensorD value;
    std::vector<NodeId> inputs;
    Forward forward;
    Backward backward;
    bool requires_grad = false;
    bool branching = false;  // contributes to the kink signature
  };

  NodeId record(std::vector<NodeId> inputs, Forward forward, Backward backward,
                bool branching = false);
  Inputs gather(const std::vector<NodeId>& ids) const;

  std::vector<Node> nodes_;
};

enum class Objective { Mse, Msssim, Adists, AdistsReferenceWeighted };

Objective parse_objective(const std::string& name);
std::string objective_name(Objective objective);

/// Differentiable objective of the distorted image against a fixed
/// reference. Every objective is a distance (lower is better): MSSIM enters
/// as 1 - MSSIM. The reference branch is computed once and reused.
class ObjectiveEvaluator {
 public:
  ObjectiveEvaluator(Objective objective, const Tensor& reference, const Backbone* backbone,
                     const LogisticParams* params, MetricConfig config = {});
  ~ObjectiveEvaluator();
  ObjectiveEvaluator(const ObjectiveEvaluator&) = delete;
  ObjectiveEvaluator& operator=(const ObjectiveEvaluator&) = delete;

  struct Result {
    double value = 0.0;
    TensorD gradient;  // empty unless requested
    std::uint64_t kink_signature = 0;
    bool replay_ok = true;  // only checked when requested
  };

  Result evaluate(const TensorD& y, bool with_gradient, bool check_replay = false) const;
  double value(const TensorD& y) const { return evaluate(y, false).value; }

  Objective objective() const noexcept { return objective_; }
  const Shape& shape() const noexcept { return shape_; }

 private:
  struct Reference;
  Objective objective_;
  Shape shape_;
  const Backbone* backbone_;
  const LogisticParams* params_;
  MetricConfig config_;
  std::unique_ptr<Reference> reference_;
};

/// d objective(x_ref, y) / d y, shaped like y.
TensorD grad_metric(Objective objective, const Tensor& x_ref, const Tensor& y,
                    const Backbone* backbone = nullptr, const LogisticParams* params = nullptr,
                    const MetricConfig& config = {});

}  // namespace adists::autograd
