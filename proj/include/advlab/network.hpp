#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advlab/linalg.hpp"
#include "advlab/loss.hpp"

namespace advlab {

/// Layer widths from input to logits. `skip[k]` adds the input of hidden
/// block k to its ReLU output; it requires the block to preserve width.
/// An empty `skip` means no skip connections.
struct NetworkSpec {
  std::vector<Eigen::Index> layer_dims;
  std::vector<bool> skip;
  std::uint64_t seed = 0;

  std::size_t num_layers() const { return layer_dims.empty() ? 0 : layer_dims.size() - 1; }
  bool has_skip(std::size_t block) const { return block < skip.size() && skip[block]; }

  /// Throws Errc::config when the spec is malformed.
  void validate() const;
};

/// Plain MLP: `layers` linear layers, every hidden layer `width` wide.
NetworkSpec mlp_spec(Eigen::Index inputs, Eigen::Index width, std::size_t layers,
                     Eigen::Index outputs, std::uint64_t seed);
/// Same as mlp_spec with a skip connection on every width-preserving block.
NetworkSpec resmlp_spec(Eigen::Index inputs, Eigen::Index width, std::size_t layers,
                        Eigen::Index outputs, std::uint64_t seed);

/// Fully connected ReLU network. weights[k] is (out x in), so layer k
/// computes pre_k = weights[k] * in_k + biases[k]; the last layer has no
/// ReLU and produces the logits.
class ReluNetwork {
 public:
  /// He-initialized weights (std sqrt(2 / fan_in)) and zero biases.
  explicit ReluNetwork(NetworkSpec spec);
  ReluNetwork(NetworkSpec spec, std::vector<Mat> weights, std::vector<Vec> biases);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return weights_.size(); }
  Eigen::Index input_dim() const { return spec_.layer_dims.front(); }
  Eigen::Index output_dim() const { return spec_.layer_dims.back(); }

  const std::vector<Mat>& weights() const { return weights_; }
  const std::vector<Vec>& biases() const { return biases_; }
  Mat& weight(std::size_t k) { return weights_.at(k); }
  Vec& bias(std::size_t k) { return biases_.at(k); }

  bool parameters_finite() const;

 private:
  NetworkSpec spec_;
  std::vector<Mat> weights_;
  std::vector<Vec> biases_;
};

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// One binary mask per ReLU layer.
struct GateState {
  std::vector<Mask> masks;

  bool operator==(const GateState& other) const;
  std::size_t open_count() const;
};

struct ForwardTrace {
  Vec x;
  std::vector<Vec> pre;  // pre[k] for every layer; pre.back() == z
  std::vector<Vec> act;  // post-gate activations of the hidden layers
  GateState gates;
  Vec z;
  bool frozen = false;  // gates were supplied rather than recorded
};

/// Forward pass recording gates as 1[pre > 0] (a preactivation of exactly
/// zero is closed).
ForwardTrace forward(const ReluNetwork& net, const Vec& x);
/// Forward pass applying the supplied gates regardless of preactivation sign.
ForwardTrace forward(const ReluNetwork& net, const Vec& x, const GateState& frozen);

struct Backward {
  Vec dx;
  std::vector<Vec> dpre;  // gradient at every layer's preactivation
};

/// Reverse pass of an upstream logit gradient through the recorded gates.
Backward backward(const ReluNetwork& net, const ForwardTrace& trace, const Vec& dz);

struct InputGradient {
  LossEval loss;
  Vec g_x;
  Mat jac_z;                    // c x n logit Jacobian
  std::optional<Vec> g_tilde;   // d(scalar logit)/dx for single-logit or reduced heads
};

InputGradient grad_input(const ReluNetwork& net, const ForwardTrace& trace,
                         const LossHead& head);

struct WeightGradients {
  std::vector<Mat> weights;
  std::vector<Vec> biases;
};

/// Per-layer parameter gradients, shaped like the network's parameters.
WeightGradients grad_weights(const ReluNetwork& net, const ForwardTrace& trace,
                             const LossHead& head);

/// Gradient with respect to the composite input-to-layer-k map, x g_h^T
/// (n x D). Needs frozen gates when k > 0 and a block without a skip
/// connection, so that the logits depend on x only through pre_k.
Mat grad_composite(const ReluNetwork& net, const ForwardTrace& trace, const LossHead& head,
                   std::size_t layer);

/// Throws unless the composite view at `layer` is well defined for this trace.
void require_composite_view(const ReluNetwork& net, const ForwardTrace& trace,
                            std::size_t layer);

/// The network as an affine map under fixed gates.
struct LinearizedModel {
  Mat effective_weight;   // c x n
  Vec effective_bias;     // c
  std::size_t layer = 0;
  Mat composite_w;        // n x D, pre_layer = composite_w^T x + composite_bias
  Vec composite_bias;
  Mat downstream;         // c x D, dz / d pre_layer
  double gram_condition = 0;  // cond(composite_w^T composite_w)
  bool gram_singular = false;
};

LinearizedModel linearize(const ReluNetwork& net, const GateState& gates, std::size_t layer,
                          bool check_conditioning = true);

/// Check that a gate state fits the network.
void check_gates(const ReluNetwork& net, const GateState& gates);

}  // namespace advlab
