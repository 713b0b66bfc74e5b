#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "advdet/dataset.hpp"
#include "advdet/net.hpp"

namespace advdet {

enum class AttackMethod { fgsm, ifgsm, pgd, deepfool, uap };

inline std::string to_string(AttackMethod m) {
  switch (m) {
    case AttackMethod::fgsm: return "fgsm";
    case AttackMethod::ifgsm: return "ifgsm";
    case AttackMethod::pgd: return "pgd";
    case AttackMethod::deepfool: return "deepfool";
    case AttackMethod::uap: return "uap";
  }
  return "?";
}

inline AttackMethod parse_attack_method(const std::string& s) {
  if (s == "fgsm") return AttackMethod::fgsm;
  if (s == "ifgsm") return AttackMethod::ifgsm;
  if (s == "pgd") return AttackMethod::pgd;
  if (s == "deepfool") return AttackMethod::deepfool;
  if (s == "uap") return AttackMethod::uap;
  fail(errc::config, "unknown attack method '" + s + "'");
}

struct AttackConfig {
  AttackMethod method = AttackMethod::fgsm;
  double eps = 0.3;        // L-inf budget
  double alpha = 0.0;      // step size; 0 selects eps / 10
  std::size_t max_iter = 100;
  bool targeted = false;
  std::optional<std::uint32_t> target_label;  // unset in batch runs: (y + 1) mod K
  double overshoot = 0.02;                    // deepfool
  bool random_start = false;                  // pgd
  std::uint64_t seed = 0;                     // pgd random start
  double uap_xi = 0.2;                        // L-inf budget of the universal perturbation
  double uap_delta = 0.2;                     // stop once fooling rate >= 1 - delta
  std::size_t uap_inner_iter = 50;            // deepfool iterations per UAP visit

  double step() const { return alpha > 0.0 ? alpha : eps / 10.0; }

  void validate() const {
    require(eps >= 0.0 && std::isfinite(eps), errc::config, "eps must be >= 0");
    require(alpha >= 0.0, errc::config, "alpha must be positive (0 selects eps/10)");
    if (method == AttackMethod::ifgsm || method == AttackMethod::pgd)
      require(step() <= eps + 1e-15 || eps == 0.0, errc::config, "alpha must not exceed eps");
    require(overshoot >= 0.0, errc::config, "overshoot must be >= 0");
    require(uap_xi >= 0.0 && uap_delta >= 0.0 && uap_delta <= 1.0, errc::config, "bad UAP parameters");
  }
};

struct AdvResult {
  ImageTensor adversarial;
  std::uint64_t source_id = 0;
  std::uint32_t original_label = 0;  // ground truth
  std::uint32_t clean_label = 0;     // model prediction on the clean input
  std::uint32_t adv_label = 0;
  std::optional<std::uint32_t> target_label;
  bool success = false;  // untargeted: adv_label != original_label; targeted: adv_label == target
  double l2 = 0.0;
  double linf = 0.0;
  std::size_t iterations_used = 0;
};

struct PerturbationNorms {
  double l2 = 0.0;
  double linf = 0.0;
};

inline PerturbationNorms perturbation_norms(RasterView x, RasterView x_adv) {
  require(x.shape == x_adv.shape, errc::invalid_input, "perturbation_norms shape mismatch");
  PerturbationNorms n;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const double d = x_adv.values[i] - x.values[i];
    n.l2 += d * d;
    n.linf = std::max(n.linf, std::abs(d));
  }
  n.l2 = std::sqrt(n.l2);
  return n;
}

namespace detail {

inline double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

inline AdvResult finish(const NetworkModel& m, const ImageTensor& x, ImageTensor adv, std::uint32_t y,
                        std::uint32_t clean, std::optional<std::uint32_t> target, std::size_t iters) {
  AdvResult r;
  r.original_label = y;
  r.clean_label = clean;
  r.adv_label = static_cast<std::uint32_t>(predict(m, adv));
  r.target_label = target;
  r.success = target ? r.adv_label == *target : r.adv_label != y;
  const auto n = perturbation_norms(x, adv);
  r.l2 = n.l2;
  r.linf = n.linf;
  r.iterations_used = iters;
  r.adversarial = std::move(adv);
  return r;
}

// Clamp into [x - eps, x + eps] intersected with [0, 1].
inline double project(double v, double x, double eps) {
  return std::clamp(std::clamp(v, x - eps, x + eps), 0.0, 1.0);
}

}  // namespace detail

/// One signed-gradient step of size eps on the true-label loss, clipped to [0,1].
inline AdvResult fgsm(const NetworkModel& m, const ImageTensor& x, std::uint32_t y, double eps) {
  require(eps >= 0.0, errc::config, "eps must be >= 0");
  const auto clean = static_cast<std::uint32_t>(predict(m, x));
  const LossGrad lg = loss_and_input_grad(m, x, y);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    p[i] = std::clamp(x.values()[i] + eps * detail::sign(lg.input_grad.values()[i]), 0.0, 1.0);
  return detail::finish(m, x, ImageTensor(x.shape(), std::move(p)), y, clean, std::nullopt, 1);
}

using StepObserver = std::function<void(std::size_t iteration, const ImageTensor& iterate)>;

/// Iterative FGSM. Targeted mode descends the loss toward cfg.target_label;
/// untargeted mode ascends the true-label loss. Stops at the first success.
inline AdvResult ifgsm(const NetworkModel& m, const ImageTensor& x, std::uint32_t y, const AttackConfig& cfg,
                       const StepObserver& observe = {}) {
  cfg.validate();
  require(!cfg.targeted || cfg.target_label.has_value(), errc::config, "targeted ifgsm needs a target label");
  const auto clean = static_cast<std::uint32_t>(predict(m, x));
  const std::optional<std::uint32_t> target = cfg.targeted ? cfg.target_label : std::nullopt;
  const std::uint32_t loss_label = target ? *target : y;
  const double direction = target ? -1.0 : 1.0;
  const double a = cfg.step();

  std::vector<double> cur = x.values();
  std::size_t it = 0;
  while (it < cfg.max_iter) {
    const LossGrad lg = loss_and_input_grad(m, RasterView{x.shape(), cur}, loss_label);
    for (std::size_t i = 0; i < cur.size(); ++i)
      cur[i] = detail::project(cur[i] + direction * a * detail::sign(lg.input_grad.values()[i]), x.values()[i],
                               cfg.eps);
    ++it;
    const auto label = predict(m, RasterView{x.shape(), cur});
    if (observe) observe(it, ImageTensor(x.shape(), cur));
    if (target ? label == *target : label != y) break;
  }
  return detail::finish(m, x, ImageTensor(x.shape(), std::move(cur)), y, clean, target, it);
}

/// Projected sign-gradient ascent on the true-label loss for exactly
/// cfg.max_iter steps (no early stop).
inline AdvResult pgd(const NetworkModel& m, const ImageTensor& x, std::uint32_t y, const AttackConfig& cfg,
                     const StepObserver& observe = {}) {
  cfg.validate();
  const auto clean = static_cast<std::uint32_t>(predict(m, x));
  const double a = cfg.step();
  std::vector<double> cur = x.values();
  if (cfg.random_start && cfg.eps > 0.0) {
    SeededRng rng(cfg.seed);
    for (std::size_t i = 0; i < cur.size(); ++i)
      cur[i] = detail::project(x.values()[i] + rng.next_uniform(-cfg.eps, cfg.eps), x.values()[i], cfg.eps);
  }
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    const LossGrad lg = loss_and_input_grad(m, RasterView{x.shape(), cur}, y);
    for (std::size_t i = 0; i < cur.size(); ++i)
      cur[i] = detail::project(cur[i] + a * detail::sign(lg.input_grad.values()[i]), x.values()[i], cfg.eps);
    if (observe) observe(it + 1, ImageTensor(x.shape(), cur));
  }
  return detail::finish(m, x, ImageTensor(x.shape(), std::move(cur)), y, clean, std::nullopt, cfg.max_iter);
}

/// Multi-class DeepFool on the logits. Each step moves to the linearised
/// nearest boundary; the accumulated step is scaled by (1 + overshoot) and
/// clipped to [0,1] before the model is re-queried.
inline AdvResult deepfool(const NetworkModel& m, const ImageTensor& x, std::uint32_t y, const AttackConfig& cfg,
                          std::size_t max_iter) {
  require(m.num_classes() >= 2, errc::invalid_input, "deepfool needs at least two classes");
  const auto clean = static_cast<std::uint32_t>(predict(m, x));
  if (clean != y) return detail::finish(m, x, x, y, clean, std::nullopt, 0);

  const std::size_t n = x.size();
  std::vector<double> r_tot(n, 0.0), cur = x.values();
  std::size_t it = 0;
  while (it < max_iter) {
    const LogitJacobian j = logit_jacobian(m, RasterView{x.shape(), cur});
    if (argmax(j.logits) != clean) break;
    const auto& gk = j.grads[clean];
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> w_best;
    double f_best = 0.0, norm2_best = 0.0;
    std::vector<double> w(n);
    for (std::size_t k = 0; k < m.num_classes(); ++k) {
      if (k == clean) continue;
      double norm2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        w[i] = j.grads[k][i] - gk[i];
        norm2 += w[i] * w[i];
      }
      if (norm2 == 0.0) continue;
      const double f = j.logits[k] - j.logits[clean];
      const double dist = std::abs(f) / std::sqrt(norm2);
      if (dist < best) {
        best = dist;
        w_best = w;
        f_best = f;
        norm2_best = norm2;
      }
    }
    if (w_best.empty()) break;
    const double scale = std::abs(f_best) / norm2_best;
    for (std::size_t i = 0; i < n; ++i) {
      r_tot[i] += scale * w_best[i];
      cur[i] = std::clamp(x.values()[i] + (1.0 + cfg.overshoot) * r_tot[i], 0.0, 1.0);
    }
    ++it;
  }
  return detail::finish(m, x, ImageTensor(x.shape(), std::move(cur)), y, clean, std::nullopt, it);
}

inline AdvResult deepfool(const NetworkModel& m, const ImageTensor& x, std::uint32_t y, const AttackConfig& cfg) {
  return deepfool(m, x, y, cfg, cfg.max_iter);
}

/// Add a universal perturbation and clip to [0,1].
inline ImageTensor apply_perturbation(const ImageTensor& x, RasterView v) {
  require(x.shape() == v.shape, errc::invalid_input, "perturbation shape mismatch");
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(x.values()[i] + v.values[i], 0.0, 1.0);
  return ImageTensor(x.shape(), std::move(p));
}

struct UapResult {
  FeatureMap perturbation;
  double fooling_rate = 0.0;  // fraction whose predicted label changes
  double error_rate = 0.0;    // fraction misclassified w.r.t. ground truth
  std::size_t visits = 0;
  std::size_t passes = 0;
};

struct UniversalRates {
  double fooling_rate = 0.0;
  double error_rate = 0.0;
};

inline UniversalRates universal_rates(const NetworkModel& m, const LabeledDataset& data, RasterView v) {
  if (data.empty()) return {};
  std::size_t fooled = 0, wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto clean = predict(m, data.images[i]);
    const auto pert = predict(m, apply_perturbation(data.images[i], v));
    fooled += pert != clean;
    wrong += pert != data.labels[i];
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(fooled) / n, static_cast<double>(wrong) / n};
}

using UapObserver = std::function<void(std::size_t visit, const FeatureMap& v)>;

/// Universal perturbation: sweep shuffled data, push every still-correctly
/// handled image across its boundary with DeepFool and project the running
/// sum back into the L-inf ball of radius uap_xi. Ends when the fooling rate
/// reaches 1 - uap_delta or after cfg.max_iter example visits.
inline UapResult uap(const NetworkModel& m, const LabeledDataset& data, const AttackConfig& cfg,
                     const UapObserver& observe = {}) {
  cfg.validate();
  require(!data.empty(), errc::invalid_input, "uap needs a non-empty dataset");
  const Shape s = data.shape();
  FeatureMap v(s);
  std::vector<std::uint32_t> clean(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) clean[i] = static_cast<std::uint32_t>(predict(m, data.images[i]));

  UapResult res;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  while (res.visits < cfg.max_iter) {
    SeededRng rng(derive_seed(cfg.seed, res.passes));
    rng.shuffle(std::span<std::size_t>(order));
    ++res.passes;
    for (std::size_t i : order) {
      if (res.visits >= cfg.max_iter) break;
      ++res.visits;
      const ImageTensor xp = apply_perturbation(data.images[i], v);
      if (predict(m, xp) != clean[i]) continue;
      const AdvResult df = deepfool(m, xp, clean[i], cfg, cfg.uap_inner_iter);
      if (!df.success) continue;
      auto& vv = v.mutable_values();
      for (std::size_t k = 0; k < vv.size(); ++k)
        vv[k] = std::clamp(vv[k] + (df.adversarial.values()[k] - xp.values()[k]), -cfg.uap_xi, cfg.uap_xi);
      if (observe) observe(res.visits, v);
    }
    const auto rates = universal_rates(m, data, v);
    res.fooling_rate = rates.fooling_rate;
    res.error_rate = rates.error_rate;
    if (res.fooling_rate >= 1.0 - cfg.uap_delta) break;
  }
  if (res.passes == 0) {
    const auto rates = universal_rates(m, data, v);
    res.fooling_rate = rates.fooling_rate;
    res.error_rate = rates.error_rate;
  }
  res.perturbation = std::move(v);
  return res;
}

/// Per-image results of adding one universal perturbation to every image.
inline std::vector<AdvResult> uap_adversarials(const NetworkModel& m, const LabeledDataset& data, RasterView v) {
  std::vector<AdvResult> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = data.images[i];
    const auto clean = static_cast<std::uint32_t>(predict(m, x));
    AdvResult r = detail::finish(m, x, apply_perturbation(x, v), data.labels[i], clean, std::nullopt, 0);
    r.source_id = data.ids[i];
    out.push_back(std::move(r));
  }
  return out;
}

/// Run a per-image attack over a dataset. Images are independent, so they are
/// split across `threads` workers; results keep dataset order and are
/// identical for any thread count.
inline std::vector<AdvResult> attack_dataset(const NetworkModel& m, const LabeledDataset& data,
                                             const AttackConfig& cfg, std::size_t threads = 1) {
  cfg.validate();
  require(cfg.method != AttackMethod::uap, errc::config, "use uap() for universal perturbations");
  std::vector<AdvResult> out(data.size());
  auto run_one = [&](std::size_t i) {
    const auto& x = data.images[i];
    const std::uint32_t y = data.labels[i];
    AttackConfig c = cfg;
    if (c.targeted && !c.target_label) c.target_label = static_cast<std::uint32_t>((y + 1) % m.num_classes());
    if (c.random_start) c.seed = derive_seed(cfg.seed, data.ids[i]);
    AdvResult r;
    switch (c.method) {
      case AttackMethod::fgsm: r = fgsm(m, x, y, c.eps); break;
      case AttackMethod::ifgsm: r = ifgsm(m, x, y, c); break;
      case AttackMethod::pgd: r = pgd(m, x, y, c); break;
      case AttackMethod::deepfool: r = deepfool(m, x, y, c); break;
      case AttackMethod::uap: break;
    }
    r.source_id = data.ids[i];
    out[i] = std::move(r);
  };
  threads = std::max<std::size_t>(1, std::min(threads, data.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < data.size(); ++i) run_one(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = t; i < data.size(); i += threads) run_one(i);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace advdet
