#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "advdet/attacks.hpp"
#include "advdet/enhance.hpp"
#include "advdet/freqfilter.hpp"
#include "advdet/train.hpp"

namespace advdet {

/// The three-stage preprocessing: LHE -> high-pass -> standardization. Both
/// the LHE stage and standardization can be bypassed for ablations.
struct PipelineConfig {
  LheConfig lhe;
  bool use_lhe = true;
  FilterSpec filter;
  bool standardize = true;

  static PipelineConfig default_for(Shape s) {
    const std::size_t side = std::min(s.height, s.width);
    return {LheConfig::default_for(side), true, FilterSpec::default_for(side), true};
  }
};

inline FeatureMap preprocess(const PipelineConfig& cfg, const ImageTensor& x) {
  const ImageTensor enhanced = cfg.use_lhe ? lhe(x, cfg.lhe) : x;
  FeatureMap hf = highpass(enhanced, cfg.filter);
  return cfg.standardize ? standardize(hf) : hf;
}

/// A trained detector plus the preprocessing it was trained behind. The
/// provenance list holds every source id seen in training.
struct DetectionPipeline {
  PipelineConfig config;
  NetworkModel detector;
  std::vector<std::uint64_t> train_provenance;  // sorted, unique
};

inline constexpr std::uint32_t kNormal = 0;
inline constexpr std::uint32_t kAdversarial = 1;

/// Adversarials worth detecting: the clean input was classified correctly and
/// the attack flipped it.
inline std::vector<AdvResult> usable_adversarials(const std::vector<AdvResult>& advs) {
  std::vector<AdvResult> out;
  for (const auto& a : advs)
    if (a.success && a.clean_label == a.original_label && a.linf > 0.0) out.push_back(a);
  return out;
}

/// Binary detection set: every image preprocessed, normals labelled 0 and
/// adversarials 1, the larger side truncated (after a seeded shuffle) to the
/// smaller one, then the whole set shuffled.
inline MapDataset build_detection_set(const LabeledDataset& normals, const std::vector<AdvResult>& adversarials,
                                      const PipelineConfig& cfg, std::uint64_t seed) {
  require(!normals.empty(), errc::invalid_input, "detection set needs at least one normal example");
  require(!adversarials.empty(), errc::invalid_input, "detection set needs at least one adversarial example");
  const std::size_t n = std::min(normals.size(), adversarials.size());

  std::vector<std::size_t> ni(normals.size()), ai(adversarials.size());
  std::iota(ni.begin(), ni.end(), 0);
  std::iota(ai.begin(), ai.end(), 0);
  SeededRng rng(seed);
  if (normals.size() > n) rng.shuffle(std::span<std::size_t>(ni));
  if (adversarials.size() > n) rng.shuffle(std::span<std::size_t>(ai));
  ni.resize(n);
  ai.resize(n);
  std::sort(ni.begin(), ni.end());
  std::sort(ai.begin(), ai.end());

  MapDataset set{normals.name + "/detect", 2, {}, {}, {}};
  for (std::size_t i : ni) set.push(preprocess(cfg, normals.images[i]), kNormal, normals.ids[i]);
  for (std::size_t i : ai)
    set.push(preprocess(cfg, adversarials[i].adversarial), kAdversarial, adversarials[i].source_id);
  return shuffled(set, derive_seed(seed, 1));
}

inline std::vector<std::uint64_t> provenance_of(const MapDataset& set) {
  std::vector<std::uint64_t> ids = set.ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

inline std::uint64_t provenance_digest(const std::vector<std::uint64_t>& sorted_ids) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (std::uint64_t id : sorted_ids)
    for (int b = 0; b < 8; ++b) {
      h ^= (id >> (8 * b)) & 0xFF;
      h *= 1099511628211ULL;
    }
  return h;
}

/// Detector architecture: the small CNN "A" with two outputs.
inline DetectionPipeline train_detector(const MapDataset& set, const TrainConfig& cfg, const PipelineConfig& pcfg,
                                        const std::function<void(const EpochStats&)>& on_epoch = {}) {
  require(!set.empty(), errc::invalid_input, "empty detection set");
  require(set.num_classes == 2, errc::invalid_input, "detection sets are binary");
  auto res = train(make_architecture('A', set.shape(), 2), set, cfg, on_epoch);
  return {pcfg, std::move(res.model), provenance_of(set)};
}

struct Confusion {
  std::size_t tp = 0;  // adversarial flagged adversarial
  std::size_t fn = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t total() const { return tp + fn + fp + tn; }
};

struct DetectionReport {
  std::string dataset;
  std::string attack;
  double accuracy = 0.0;
  double tpr = 0.0;  // adversarial recall
  double tnr = 0.0;  // normal recall
  Confusion confusion;
  std::uint64_t train_digest = 0;
  std::uint64_t eval_digest = 0;
  PipelineConfig config;
};

/// Score a preprocessed, held-out set. Any source id shared with the
/// detector's training data is a protocol error.
inline DetectionReport evaluate_set(const DetectionPipeline& p, const MapDataset& set, const std::string& attack) {
  require(!set.empty(), errc::invalid_input, "empty evaluation set");
  const auto eval_ids = provenance_of(set);
  std::vector<std::uint64_t> overlap;
  std::set_intersection(eval_ids.begin(), eval_ids.end(), p.train_provenance.begin(), p.train_provenance.end(),
                        std::back_inserter(overlap));
  require(overlap.empty(), errc::protocol,
          std::to_string(overlap.size()) + " evaluation examples share provenance with the training set");
  DetectionReport r;
  r.dataset = set.name;
  r.attack = attack;
  r.config = p.config;
  r.train_digest = provenance_digest(p.train_provenance);
  r.eval_digest = provenance_digest(eval_ids);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const bool flagged = predict(p.detector, set.images[i]) == kAdversarial;
    if (set.labels[i] == kAdversarial)
      (flagged ? r.confusion.tp : r.confusion.fn)++;
    else
      (flagged ? r.confusion.fp : r.confusion.tn)++;
  }
  const double pos = static_cast<double>(r.confusion.tp + r.confusion.fn);
  const double neg = static_cast<double>(r.confusion.tn + r.confusion.fp);
  r.tpr = pos > 0 ? static_cast<double>(r.confusion.tp) / pos : 0.0;
  r.tnr = neg > 0 ? static_cast<double>(r.confusion.tn) / neg : 0.0;
  r.accuracy = static_cast<double>(r.confusion.tp + r.confusion.tn) / static_cast<double>(r.confusion.total());
  return r;
}

inline DetectionReport evaluate(const DetectionPipeline& p, const LabeledDataset& normals,
                                const std::vector<AdvResult>& adversarials, const std::string& attack,
                                std::uint64_t seed) {
  return evaluate_set(p, build_detection_set(normals, adversarials, p.config, seed), attack);
}

// ---------------------------------------------------------------------------
// Experiment protocol
// ---------------------------------------------------------------------------

struct DetectionProtocol {
  PipelineConfig pipeline;
  TrainConfig train;
  double train_fraction = 0.8;
};

/// Partition of source ids into detector-train and held-out halves.
struct SourceSplit {
  std::unordered_set<std::uint64_t> train;
  std::unordered_set<std::uint64_t> eval;
};

inline SourceSplit split_sources(const LabeledDataset& pool, double train_fraction, std::uint64_t seed) {
  std::vector<std::uint64_t> ids = pool.ids;
  std::sort(ids.begin(), ids.end());
  SeededRng rng(seed);
  rng.shuffle(std::span<std::uint64_t>(ids));
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  SourceSplit s;
  for (std::size_t i = 0; i < ids.size(); ++i) (i < n_train ? s.train : s.eval).insert(ids[i]);
  return s;
}

inline LabeledDataset select_sources(const LabeledDataset& pool, const std::unordered_set<std::uint64_t>& ids) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (ids.count(pool.ids[i])) idx.push_back(i);
  return pool.subset(idx);
}

inline std::vector<AdvResult> select_sources(const std::vector<AdvResult>& advs,
                                             const std::unordered_set<std::uint64_t>& ids) {
  std::vector<AdvResult> out;
  for (const auto& a : advs)
    if (ids.count(a.source_id)) out.push_back(a);
  return out;
}

struct DetectionTrial {
  DetectionPipeline pipeline;
  DetectionReport report;
};

/// One seed of the detection protocol: split sources, build both balanced
/// sets from the same split, train on one and score the other.
inline DetectionTrial detection_trial(const LabeledDataset& pool, const std::vector<AdvResult>& advs,
                                      const DetectionProtocol& proto, const std::string& attack,
                                      std::uint64_t seed) {
  const auto usable = usable_adversarials(advs);
  const SourceSplit split = split_sources(pool, proto.train_fraction, seed);
  const MapDataset train_set = build_detection_set(select_sources(pool, split.train),
                                                   select_sources(usable, split.train), proto.pipeline,
                                                   derive_seed(seed, 11));
  TrainConfig tc = proto.train;
  tc.seed = derive_seed(seed, 12);
  DetectionTrial t{train_detector(train_set, tc, proto.pipeline), {}};
  t.report = evaluate(t.pipeline, select_sources(pool, split.eval), select_sources(usable, split.eval), attack,
                      derive_seed(seed, 13));
  t.report.dataset = pool.name;
  return t;
}

struct AblationResult {
  DetectionReport with_lhe;
  DetectionReport without_lhe;
};

/// Same split, seeds and training budget; only the LHE stage differs.
inline AblationResult lhe_ablation(const LabeledDataset& pool, const std::vector<AdvResult>& advs,
                                   const DetectionProtocol& proto, const std::string& attack, std::uint64_t seed) {
  DetectionProtocol on = proto, off = proto;
  on.pipeline.use_lhe = true;
  off.pipeline.use_lhe = false;
  return {detection_trial(pool, advs, on, attack, seed).report, detection_trial(pool, advs, off, attack, seed).report};
}

// ---------------------------------------------------------------------------
// Cross-model matrix
// ---------------------------------------------------------------------------

struct CrossModelResult {
  std::vector<std::string> victims;
  std::vector<std::string> methods;
  /// reports[seed][train victim][eval victim][method]
  std::vector<std::vector<std::vector<std::vector<DetectionReport>>>> reports;
  /// method_transfer[seed][victim][train method][eval method] (same victim)
  std::vector<std::vector<std::vector<std::vector<DetectionReport>>>> method_transfer;

  double mean_accuracy(std::size_t train_v, std::size_t eval_v, std::size_t method) const {
    double s = 0.0;
    for (const auto& seed : reports) s += seed[train_v][eval_v][method].accuracy;
    return s / static_cast<double>(reports.size());
  }

  double mean_transfer(std::size_t train_m, std::size_t eval_m) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& seed : method_transfer)
      for (const auto& v : seed) {
        s += v[train_m][eval_m].accuracy;
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

/// `advs[v][m]` are attacks generated against victim v with method m over
/// `pool`. For each seed, one detector per (victim, method) is trained on the
/// train split and scored on the held-out split of every victim's adversarials
/// (same method) and of the same victim's other methods.
inline CrossModelResult cross_model_matrix(const LabeledDataset& pool,
                                           const std::vector<std::vector<std::vector<AdvResult>>>& advs,
                                           const std::vector<std::string>& victim_names,
                                           const std::vector<std::string>& method_names,
                                           const DetectionProtocol& proto, const std::vector<std::uint64_t>& seeds) {
  const std::size_t nv = victim_names.size(), nm = method_names.size();
  require(advs.size() == nv, errc::invalid_input, "adversarial sets do not match the victim list");
  for (const auto& row : advs) require(row.size() == nm, errc::invalid_input, "adversarial sets do not match methods");
  CrossModelResult res{victim_names, method_names, {}, {}};
  for (std::uint64_t seed : seeds) {
    const SourceSplit split = split_sources(pool, proto.train_fraction, seed);
    const LabeledDataset normals_train = select_sources(pool, split.train);
    const LabeledDataset normals_eval = select_sources(pool, split.eval);
    std::vector<std::vector<MapDataset>> eval_sets(nv, std::vector<MapDataset>(nm));
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t m = 0; m < nm; ++m)
        eval_sets[v][m] = build_detection_set(normals_eval, select_sources(usable_adversarials(advs[v][m]), split.eval),
                                              proto.pipeline, derive_seed(seed, 13));
    auto& rep = res.reports.emplace_back(nv, std::vector<std::vector<DetectionReport>>(nv, std::vector<DetectionReport>(nm)));
    auto& tr = res.method_transfer.emplace_back(nv, std::vector<std::vector<DetectionReport>>(nm, std::vector<DetectionReport>(nm)));
    for (std::size_t v = 0; v < nv; ++v) {
      for (std::size_t m = 0; m < nm; ++m) {
        const MapDataset train_set =
            build_detection_set(normals_train, select_sources(usable_adversarials(advs[v][m]), split.train),
                                proto.pipeline, derive_seed(seed, 11));
        TrainConfig tc = proto.train;
        tc.seed = derive_seed(seed, 12);
        const DetectionPipeline det = train_detector(train_set, tc, proto.pipeline);
        for (std::size_t ev = 0; ev < nv; ++ev) {
          rep[v][ev][m] = evaluate_set(det, eval_sets[ev][m], method_names[m]);
          rep[v][ev][m].dataset = pool.name + "/" + victim_names[v] + "->" + victim_names[ev];
        }
        for (std::size_t em = 0; em < nm; ++em) {
          tr[v][m][em] = evaluate_set(det, eval_sets[v][em], method_names[m] + "->" + method_names[em]);
          tr[v][m][em].dataset = pool.name + "/" + victim_names[v];
        }
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Window / cutoff sweep
// ---------------------------------------------------------------------------

struct SweepGrid {
  std::vector<FilterKind> kinds;
  std::vector<std::size_t> windows;
  std::vector<double> cutoffs;
  /// mean_ssim[kind][window][cutoff]
  std::vector<std::vector<std::vector<double>>> mean_ssim;

  double at(std::size_t k, std::size_t w, std::size_t c) const { return mean_ssim[k][w][c]; }

  double slice_max(std::size_t k) const {
    double best = -INFINITY;
    for (const auto& row : mean_ssim[k])
      for (double v : row) best = std::max(best, v);
    return best;
  }

  /// Largest |change| between neighbouring cutoffs anywhere in the slice.
  double slice_max_step(std::size_t k) const {
    double best = 0.0;
    for (const auto& row : mean_ssim[k])
      for (std::size_t c = 1; c < row.size(); ++c) best = std::max(best, std::abs(row[c] - row[c - 1]));
    return best;
  }
};

/// For every (kind, window, cutoff): mean over pairs of
/// SSIM(normalize(highpass(lhe(x_adv))), normalize(x_adv - x)).
inline SweepGrid sweep_params(const std::vector<ImageTensor>& normals, const std::vector<ImageTensor>& adversarials,
                              const std::vector<std::size_t>& windows, const std::vector<double>& cutoffs,
                              const std::vector<FilterKind>& kinds = {FilterKind::ideal, FilterKind::gaussian,
                                                                      FilterKind::butterworth},
                              int butterworth_order = 2, const SsimConfig& ssim_cfg = {}) {
  require(!windows.empty() && !cutoffs.empty() && !kinds.empty(), errc::invalid_input, "sweep axes must be non-empty");
  require(normals.size() == adversarials.size() && !normals.empty(), errc::invalid_input,
          "sweep needs matching, non-empty normal/adversarial lists");
  const Shape s = normals[0].shape();
  SweepGrid g{kinds, windows, cutoffs, {}};
  g.mean_ssim.assign(kinds.size(), std::vector<std::vector<double>>(windows.size(), std::vector<double>(cutoffs.size(), 0.0)));

  std::vector<std::vector<Grid2D>> gains(kinds.size());
  for (std::size_t k = 0; k < kinds.size(); ++k)
    for (double d0 : cutoffs) {
      FilterSpec spec{kinds[k], d0, butterworth_order};
      spec.validate();
      gains[k].push_back(transfer_grid(spec, s.height, s.width));
    }

  for (std::size_t p = 0; p < normals.size(); ++p) {
    const ImageTensor reference = normalize_signed(difference(adversarials[p], normals[p]));
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const ImageTensor enhanced = lhe(adversarials[p], LheConfig{windows[w], kLevels});
      std::vector<ComplexGrid2D> spectra;
      for (std::size_t c = 0; c < s.channels; ++c) spectra.push_back(dft2_centered(enhanced.channel(c)));
      for (std::size_t k = 0; k < kinds.size(); ++k)
        for (std::size_t ci = 0; ci < cutoffs.size(); ++ci) {
          std::vector<Grid2D> planes;
          for (const auto& sp : spectra) planes.push_back(apply_transfer(sp, gains[k][ci]).real);
          const ImageTensor extracted = normalize_signed(FeatureMap::from_channels(planes));
          g.mean_ssim[k][w][ci] += ssim(extracted, reference, ssim_cfg);
        }
    }
  }
  for (auto& a : g.mean_ssim)
    for (auto& b : a)
      for (double& v : b) v /= static_cast<double>(normals.size());
  return g;
}

// ---------------------------------------------------------------------------
// Difference-map diagnostics
// ---------------------------------------------------------------------------

struct DiffBundle {
  FeatureMap pixel_plain;    // x_adv - x
  FeatureMap pixel_lhe;      // lhe(x_adv) - lhe(x)
  FeatureMap feature_plain;  // first-conv activation difference of the victim
  FeatureMap feature_lhe;    // same, on LHE-enhanced inputs
  double mean_pixel_plain = 0.0;
  double mean_pixel_lhe = 0.0;
  double mean_feature_plain = 0.0;
  double mean_feature_lhe = 0.0;
};

inline DiffBundle diff_maps(const NetworkModel& victim, const ImageTensor& x, const ImageTensor& x_adv,
                            const LheConfig& lcfg) {
  require(x.shape() == x_adv.shape(), errc::invalid_input, "diff_maps shape mismatch");
  const ImageTensor lx = lhe(x, lcfg), la = lhe(x_adv, lcfg);
  DiffBundle b;
  b.pixel_plain = difference(x_adv, x);
  b.pixel_lhe = difference(la, lx);
  b.feature_plain = difference(first_conv_activation(victim, x_adv), first_conv_activation(victim, x));
  b.feature_lhe = difference(first_conv_activation(victim, la), first_conv_activation(victim, lx));
  b.mean_pixel_plain = mean_abs(b.pixel_plain);
  b.mean_pixel_lhe = mean_abs(b.pixel_lhe);
  b.mean_feature_plain = mean_abs(b.feature_plain);
  b.mean_feature_lhe = mean_abs(b.feature_lhe);
  return b;
}

}  // namespace advdet
