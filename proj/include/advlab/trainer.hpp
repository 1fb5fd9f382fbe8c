#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/lab/dataset.hpp"
#include "advlab/network.hpp"

namespace advlab {

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 50;
  int batch_size = 128;
  std::uint64_t seed = 0;
  std::optional<AttackConfig> adversary;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> mean_loss;        // over the examples the step was taken on
  std::vector<double> clean_accuracy;   // on the clean training inputs, before each step
  std::vector<double> robust_accuracy;  // on the attacked inputs; empty without an adversary
};

struct TrainResult {
  ReluNetwork net;
  TrainHistory history;
};

/// Minibatch SGD on the mean per-sample gradient. Single-logit networks are
/// trained on parity labels.
TrainResult sgd_train(ReluNetwork net, const Dataset& data, const TrainConfig& cfg);
/// Same loop, with every batch replaced by attacked inputs before the step.
TrainResult adversarial_train(ReluNetwork net, const Dataset& data, const TrainConfig& cfg);

struct Accuracy {
  double clean = 0;
  double robust = 0;
};

Accuracy evaluate(const ReluNetwork& net, const Dataset& data,
                  const std::optional<AttackConfig>& adversary = std::nullopt);

}  // namespace advlab
