#include "advlab/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace advlab {

void NetworkSpec::validate() const {
  if (layer_dims.size() < 2) throw Error(Errc::config, "network needs at least one layer");
  for (Eigen::Index d : layer_dims)
    if (d < 1) throw Error(Errc::config, "layer widths must be positive");
  const std::size_t blocks = num_layers() - 1;
  if (skip.size() > blocks) {
    std::ostringstream os;
    os << skip.size() << " skip flags for " << blocks << " hidden blocks";
    throw Error(Errc::config, os.str());
  }
  for (std::size_t k = 0; k < skip.size(); ++k) {
    if (skip[k] && layer_dims[k] != layer_dims[k + 1]) {
      std::ostringstream os;
      os << "skip connection on block " << k << " joins widths " << layer_dims[k] << " and "
         << layer_dims[k + 1];
      throw Error(Errc::config, os.str());
    }
  }
}

NetworkSpec mlp_spec(Eigen::Index inputs, Eigen::Index width, std::size_t layers,
                     Eigen::Index outputs, std::uint64_t seed) {
  if (layers < 1) throw Error(Errc::config, "an MLP needs at least one layer");
  NetworkSpec spec;
  spec.layer_dims.push_back(inputs);
  for (std::size_t k = 0; k + 1 < layers; ++k) spec.layer_dims.push_back(width);
  spec.layer_dims.push_back(outputs);
  spec.seed = seed;
  return spec;
}

NetworkSpec resmlp_spec(Eigen::Index inputs, Eigen::Index width, std::size_t layers,
                        Eigen::Index outputs, std::uint64_t seed) {
  NetworkSpec spec = mlp_spec(inputs, width, layers, outputs, seed);
  spec.skip.assign(layers - 1, false);
  for (std::size_t k = 0; k + 1 < layers; ++k)
    spec.skip[k] = spec.layer_dims[k] == spec.layer_dims[k + 1];
  return spec;
}

ReluNetwork::ReluNetwork(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(spec_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < spec_.num_layers(); ++k) {
    const Eigen::Index in = spec_.layer_dims[k];
    const Eigen::Index out = spec_.layer_dims[k + 1];
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    Mat w(out, in);
    for (Eigen::Index i = 0; i < out; ++i)
      for (Eigen::Index j = 0; j < in; ++j) w(i, j) = scale * normal(rng);
    weights_.push_back(std::move(w));
    biases_.push_back(Vec::Zero(out));
  }
}

ReluNetwork::ReluNetwork(NetworkSpec spec, std::vector<Mat> weights, std::vector<Vec> biases)
    : spec_(std::move(spec)), weights_(std::move(weights)), biases_(std::move(biases)) {
  spec_.validate();
  if (weights_.size() != spec_.num_layers() || biases_.size() != spec_.num_layers())
    throw Error(Errc::dimension, "parameter count does not match the network spec");
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const Eigen::Index in = spec_.layer_dims[k];
    const Eigen::Index out = spec_.layer_dims[k + 1];
    if (weights_[k].rows() != out || weights_[k].cols() != in || biases_[k].size() != out) {
      std::ostringstream os;
      os << "layer " << k << " parameters do not match " << in << " -> " << out;
      throw Error(Errc::dimension, os.str());
    }
  }
  if (!parameters_finite()) throw Error(Errc::non_finite, "network parameters must be finite");
}

bool ReluNetwork::parameters_finite() const {
  for (std::size_t k = 0; k < weights_.size(); ++k)
    if (!weights_[k].allFinite() || !biases_[k].allFinite()) return false;
  return true;
}

bool GateState::operator==(const GateState& other) const {
  if (masks.size() != other.masks.size()) return false;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (masks[k].size() != other.masks[k].size()) return false;
    if (!(masks[k] == other.masks[k]).all()) return false;
  }
  return true;
}

std::size_t GateState::open_count() const {
  std::size_t n = 0;
  for (const Mask& m : masks) n += static_cast<std::size_t>(m.count());
  return n;
}

void check_gates(const ReluNetwork& net, const GateState& gates) {
  const std::size_t hidden = net.num_layers() - 1;
  if (gates.masks.size() != hidden) {
    std::ostringstream os;
    os << "gate state has " << gates.masks.size() << " masks, network has " << hidden
       << " ReLU layers";
    throw Error(Errc::dimension, os.str());
  }
  for (std::size_t k = 0; k < hidden; ++k) {
    if (gates.masks[k].size() != net.spec().layer_dims[k + 1]) {
      std::ostringstream os;
      os << "mask " << k << " has width " << gates.masks[k].size() << ", layer has "
         << net.spec().layer_dims[k + 1];
      throw Error(Errc::dimension, os.str());
    }
  }
}

namespace {

ForwardTrace run_forward(const ReluNetwork& net, const Vec& x, const GateState* frozen) {
  if (x.size() != net.input_dim()) {
    std::ostringstream os;
    os << "input has " << x.size() << " entries, network expects " << net.input_dim();
    throw Error(Errc::dimension, os.str());
  }
  if (frozen) check_gates(net, *frozen);
  const std::size_t layers = net.num_layers();
  ForwardTrace t;
  t.x = x;
  t.frozen = frozen != nullptr;
  t.pre.reserve(layers);
  t.act.reserve(layers - 1);
  t.gates.masks.reserve(layers - 1);
  for (std::size_t k = 0; k < layers; ++k) {
    const Vec& in = k == 0 ? t.x : t.act[k - 1];
    t.pre.push_back(net.weights()[k] * in + net.biases()[k]);
    if (k + 1 == layers) break;
    const Vec& pre = t.pre.back();
    Mask mask = frozen ? frozen->masks[k] : Mask(pre.array() > 0.0);
    Vec a = mask.select(pre, Vec::Zero(pre.size()));
    if (net.spec().has_skip(k)) a += in;
    t.act.push_back(std::move(a));
    t.gates.masks.push_back(std::move(mask));
  }
  t.z = t.pre.back();
  return t;
}

void check_trace(const ReluNetwork& net, const ForwardTrace& trace) {
  bool ok = trace.pre.size() == net.num_layers() && trace.act.size() + 1 == net.num_layers() &&
            trace.x.size() == net.input_dim();
  for (std::size_t k = 0; ok && k < trace.pre.size(); ++k)
    ok = trace.pre[k].size() == net.spec().layer_dims[k + 1];
  if (!ok) throw Error(Errc::dimension, "forward trace does not belong to this network");
}

}  // namespace

ForwardTrace forward(const ReluNetwork& net, const Vec& x) { return run_forward(net, x, nullptr); }

ForwardTrace forward(const ReluNetwork& net, const Vec& x, const GateState& frozen) {
  return run_forward(net, x, &frozen);
}

Backward backward(const ReluNetwork& net, const ForwardTrace& trace, const Vec& dz) {
  check_trace(net, trace);
  if (dz.size() != net.output_dim()) throw Error(Errc::dimension, "upstream gradient width");
  const std::size_t layers = net.num_layers();
  Backward out;
  out.dpre.resize(layers);
  out.dpre[layers - 1] = dz;
  Vec da = net.weights()[layers - 1].transpose() * dz;  // d L / d in_{L-1}
  for (std::size_t k = layers - 1; k-- > 0;) {
    const Mask& mask = trace.gates.masks[k];
    out.dpre[k] = mask.select(da, Vec::Zero(da.size()));
    Vec da_in = net.weights()[k].transpose() * out.dpre[k];
    if (net.spec().has_skip(k)) da_in += da;
    da = std::move(da_in);
  }
  out.dx = std::move(da);
  return out;
}

InputGradient grad_input(const ReluNetwork& net, const ForwardTrace& trace,
                         const LossHead& head) {
  check_trace(net, trace);
  InputGradient out;
  out.loss = loss_eval(head, trace.z);
  out.g_x = backward(net, trace, out.loss.g_z).dx;
  const Eigen::Index c = net.output_dim();
  out.jac_z.resize(c, net.input_dim());
  for (Eigen::Index i = 0; i < c; ++i)
    out.jac_z.row(i) = backward(net, trace, Vec::Unit(c, i)).dx.transpose();
  if (c == 1) {
    out.g_tilde = out.jac_z.row(0).transpose();
  } else if (std::holds_alternative<SoftmaxCE>(head)) {
    out.g_tilde = out.jac_z.transpose() * binary_reduce(trace.z).readout;
  } else if (const auto* r = std::get_if<ReducedSigmoid>(&head)) {
    out.g_tilde = out.jac_z.transpose() * r->readout;
  }
  return out;
}

WeightGradients grad_weights(const ReluNetwork& net, const ForwardTrace& trace,
                             const LossHead& head) {
  const LossEval e = loss_eval(head, trace.z);
  const Backward b = backward(net, trace, e.g_z);
  WeightGradients out;
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const Vec& in = k == 0 ? trace.x : trace.act[k - 1];
    out.weights.push_back(b.dpre[k] * in.transpose());
    out.biases.push_back(b.dpre[k]);
  }
  return out;
}

void require_composite_view(const ReluNetwork& net, const ForwardTrace& trace,
                            std::size_t layer) {
  check_trace(net, trace);
  if (layer >= net.num_layers()) {
    std::ostringstream os;
    os << "layer " << layer << " out of range for " << net.num_layers() << " layers";
    throw Error(Errc::dimension, os.str());
  }
  if (layer > 0 && !trace.frozen)
    throw Error(Errc::precondition, "composite view requested with free gates");
  if (net.spec().has_skip(layer))
    throw Error(Errc::precondition, "composite view at a block bypassed by a skip connection");
}

Mat grad_composite(const ReluNetwork& net, const ForwardTrace& trace, const LossHead& head,
                   std::size_t layer) {
  require_composite_view(net, trace, layer);
  const LossEval e = loss_eval(head, trace.z);
  const Backward b = backward(net, trace, e.g_z);
  return trace.x * b.dpre[layer].transpose();
}

LinearizedModel linearize(const ReluNetwork& net, const GateState& gates, std::size_t layer,
                          bool check_conditioning) {
  check_gates(net, gates);
  const std::size_t layers = net.num_layers();
  if (layer >= layers) throw Error(Errc::dimension, "linearization layer out of range");
  const Eigen::Index n = net.input_dim();

  LinearizedModel lin;
  lin.layer = layer;
  Mat a = Mat::Identity(n, n);
  Vec c = Vec::Zero(n);
  for (std::size_t k = 0; k < layers; ++k) {
    Mat p = net.weights()[k] * a;
    Vec q = net.weights()[k] * c + net.biases()[k];
    if (k == layer) {
      lin.composite_w = p.transpose();
      lin.composite_bias = q;
    }
    if (k + 1 == layers) {
      lin.effective_weight = std::move(p);
      lin.effective_bias = std::move(q);
      break;
    }
    const Mask& mask = gates.masks[k];
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      if (!mask(i)) {
        p.row(i).setZero();
        q(i) = 0;
      }
    }
    if (net.spec().has_skip(k)) {
      p += a;
      q += c;
    }
    a = std::move(p);
    c = std::move(q);
  }

  // dz / d pre_layer: push an identity through the gates above `layer`.
  const Eigen::Index d = net.spec().layer_dims[layer + 1];
  Mat down = Mat::Identity(d, d);  // d pre_k / d pre_layer
  Mat prev_act;                    // d act_{k-1} / d pre_layer
  for (std::size_t k = layer; k + 1 < layers; ++k) {
    Mat gated = down;
    const Mask& mask = gates.masks[k];
    for (Eigen::Index i = 0; i < gated.rows(); ++i)
      if (!mask(i)) gated.row(i).setZero();
    if (k > layer && net.spec().has_skip(k)) gated += prev_act;
    down = net.weights()[k + 1] * gated;
    prev_act = std::move(gated);
  }
  lin.downstream = std::move(down);

  if (check_conditioning) {
    const Mat gram = lin.composite_w.transpose() * lin.composite_w;
    Eigen::SelfAdjointEigenSolver<Mat> es(gram, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    lin.gram_condition = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
    lin.gram_singular = !(lin.gram_condition < 1e12);
  }
  return lin;
}

}  // namespace advlab
