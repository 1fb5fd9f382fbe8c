#include "advlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace advlab {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate))
    throw Error(Errc::config, "learning rate must be finite and non-negative");
  if (epochs < 0) throw Error(Errc::config, "epochs must be non-negative");
  if (batch_size < 1) throw Error(Errc::config, "batch size must be at least 1");
  if (adversary) adversary->validate();
}

namespace {

void check_data(const ReluNetwork& net, const Dataset& data) {
  if (data.size() == 0) throw Error(Errc::precondition, "dataset is empty");
  data.validate();
  if (data.dims() != net.input_dim()) {
    std::ostringstream os;
    os << "dataset has " << data.dims() << " inputs, network expects " << net.input_dim();
    throw Error(Errc::dimension, os.str());
  }
}

Vec attacked(const ReluNetwork& net, const LossHead& head, const Vec& x,
             const std::optional<AttackConfig>& adversary) {
  if (!adversary || adversary->steps == 0) return x;
  AttackConfig cfg = *adversary;
  cfg.keep_vectors = false;
  cfg.track_curvature = false;
  cfg.record_every = std::max(1, cfg.steps);
  return x + run_attack(net, head, x, cfg).delta;
}

TrainResult train(ReluNetwork net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  check_data(net, data);
  TrainResult result{std::move(net), {}};
  ReluNetwork& model = result.net;
  const std::size_t layers = model.num_layers();
  const std::size_t n = data.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t clean_hits = 0, robust_hits = 0;

    for (std::size_t start = 0, batch = 0; start < n;
         start += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Mat> gw(layers);
      std::vector<Vec> gb(layers);
      for (std::size_t k = 0; k < layers; ++k) {
        gw[k] = Mat::Zero(model.weights()[k].rows(), model.weights()[k].cols());
        gb[k] = Vec::Zero(model.biases()[k].size());
      }
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t s = order[i];
        const LossHead head = head_for_class(model.output_dim(), data.labels[s]);
        const ForwardTrace clean = forward(model, data.inputs[s]);
        if (head_correct(head, clean.z)) ++clean_hits;

        const Vec input = attacked(model, head, data.inputs[s], cfg.adversary);
        const ForwardTrace trace = cfg.adversary ? forward(model, input) : clean;
        if (cfg.adversary && head_correct(head, trace.z)) ++robust_hits;

        const WeightGradients g = grad_weights(model, trace, head);
        const double loss = loss_eval(head, trace.z).loss;
        if (!std::isfinite(loss)) {
          std::ostringstream os;
          os << "non-finite loss at epoch " << epoch << ", batch " << batch;
          throw Error(Errc::non_finite, os.str());
        }
        loss_sum += loss;
        for (std::size_t k = 0; k < layers; ++k) {
          gw[k] += g.weights[k];
          gb[k] += g.biases[k];
        }
      }
      const double scale = cfg.learning_rate / static_cast<double>(stop - start);
      for (std::size_t k = 0; k < layers; ++k) {
        model.weight(k) -= scale * gw[k];
        model.bias(k) -= scale * gb[k];
      }
      if (!model.parameters_finite()) {
        std::ostringstream os;
        os << "parameters became non-finite at epoch " << epoch << ", batch " << batch;
        throw Error(Errc::non_finite, os.str());
      }
    }
    result.history.mean_loss.push_back(loss_sum / static_cast<double>(n));
    result.history.clean_accuracy.push_back(static_cast<double>(clean_hits) / static_cast<double>(n));
    if (cfg.adversary)
      result.history.robust_accuracy.push_back(static_cast<double>(robust_hits) /
                                               static_cast<double>(n));
  }
  return result;
}

}  // namespace

TrainResult sgd_train(ReluNetwork net, const Dataset& data, const TrainConfig& cfg) {
  if (cfg.adversary) throw Error(Errc::config, "sgd_train takes no adversary");
  return train(std::move(net), data, cfg);
}

TrainResult adversarial_train(ReluNetwork net, const Dataset& data, const TrainConfig& cfg) {
  if (!cfg.adversary) throw Error(Errc::config, "adversarial_train needs an adversary");
  return train(std::move(net), data, cfg);
}

Accuracy evaluate(const ReluNetwork& net, const Dataset& data,
                  const std::optional<AttackConfig>& adversary) {
  check_data(net, data);
  if (adversary) adversary->validate();
  std::size_t clean = 0, robust = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const LossHead head = head_for_class(net.output_dim(), data.labels[i]);
    const bool ok = head_correct(head, forward(net, data.inputs[i]).z);
    if (ok) ++clean;
    if (!adversary || adversary->steps == 0) {
      if (ok) ++robust;
      continue;
    }
    const Vec x = attacked(net, head, data.inputs[i], adversary);
    if (head_correct(head, forward(net, x).z)) ++robust;
  }
  const double n = static_cast<double>(data.size());
  return {clean / n, robust / n};
}

}  // namespace advlab
