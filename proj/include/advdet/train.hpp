#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "advdet/dataset.hpp"
#include "advdet/net.hpp"

namespace advdet {

enum class Optimizer { sgd, sgd_momentum };

inline std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "sgd_momentum"; }

inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "sgd_momentum") return Optimizer::sgd_momentum;
  fail(errc::config, "unknown optimizer '" + s + "'");
}

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::sgd_momentum;
  double momentum = 0.9;

  void validate() const {
    require(epochs > 0 && batch_size > 0, errc::config, "epochs and batch_size must be positive");
    require(learning_rate > 0 && std::isfinite(learning_rate), errc::config, "learning_rate must be positive");
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean training loss over the epoch
  double accuracy = 0.0;  // training accuracy measured before each update
};

struct TrainResult {
  NetworkModel model;
  std::vector<EpochStats> trace;
};

/// Fraction of argmax-correct predictions (ties go to the lowest class).
template <class Item>
double accuracy(const NetworkModel& m, const BasicDataset<Item>& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += predict(m, data.images[i]) == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Mini-batch SGD on mean cross-entropy. Weights are re-initialised from
/// cfg.seed and every epoch reshuffles with a stream derived from it, so the
/// result is a pure function of (architecture, data, cfg).
template <class Item>
TrainResult train(NetworkModel m, const BasicDataset<Item>& data, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  require(!data.empty(), errc::invalid_input, "cannot train on an empty dataset");
  data.validate();
  require(data.shape() == m.input_shape(), errc::invalid_input,
          "dataset shape " + data.shape().str() + " does not match network input " + m.input_shape().str());
  for (auto l : data.labels) require(l < m.num_classes(), errc::invalid_input, "label exceeds network classes");

  SeededRng init_rng(derive_seed(cfg.seed, 0));
  m.init_weights(init_rng);

  const std::size_t np = m.param_count();
  std::vector<double> grad(np), velocity(np, 0.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> gl(m.num_classes());

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    SeededRng shuffle_rng(derive_seed(cfg.seed, 1 + epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const ForwardTrace t = forward_trace(m, data.images[i]);
        const auto z = t.logits();
        const std::size_t y = data.labels[i];
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - mx);
        loss_sum += mx + std::log(sum) - z[y];
        correct += argmax(z) == y;
        std::copy(t.probs().begin(), t.probs().end(), gl.begin());
        gl[y] -= 1.0;
        backward(m, t, gl, grad.data(), false);
      }
      const double scale = cfg.learning_rate / static_cast<double>(end - start);
      auto& w = m.weights();
      if (cfg.optimizer == Optimizer::sgd_momentum) {
        for (std::size_t k = 0; k < np; ++k) {
          velocity[k] = cfg.momentum * velocity[k] - scale * grad[k];
          w[k] += velocity[k];
        }
      } else {
        for (std::size_t k = 0; k < np; ++k) w[k] -= scale * grad[k];
      }
    }
    for (double v : m.weights())
      require(std::isfinite(v), errc::numeric, "training diverged (non-finite weight) in epoch " +
                                                   std::to_string(epoch + 1));
    EpochStats st{epoch + 1, loss_sum / static_cast<double>(data.size()),
                  static_cast<double>(correct) / static_cast<double>(data.size())};
    result.trace.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  result.model = std::move(m);
  return result;
}

}  // namespace advdet
