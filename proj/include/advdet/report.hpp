#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advdet/attacks.hpp"
#include "advdet/pipeline.hpp"
#include "advdet/serialize.hpp"

namespace advdet {

using json = nlohmann::json;

inline json to_json(const PipelineConfig& c) {
  return {{"lhe", {{"enabled", c.use_lhe}, {"window", c.lhe.window}, {"levels", c.lhe.levels}}},
          {"filter", {{"kind", to_string(c.filter.kind)}, {"cutoff", c.filter.cutoff_d0}, {"order", c.filter.order_n}}},
          {"standardize", c.standardize},
          {"detector_input", c.standardize ? "signed-standardized" : "signed"}};
}

inline PipelineConfig pipeline_from_json(const json& j, PipelineConfig c) {
  if (j.contains("lhe")) {
    const auto& l = j["lhe"];
    c.use_lhe = l.value("enabled", c.use_lhe);
    c.lhe.window = l.value("window", c.lhe.window);
  }
  if (j.contains("filter")) {
    const auto& f = j["filter"];
    if (f.contains("kind")) c.filter.kind = parse_filter_kind(f["kind"].get<std::string>());
    c.filter.cutoff_d0 = f.value("cutoff", c.filter.cutoff_d0);
    c.filter.order_n = f.value("order", c.filter.order_n);
  }
  c.standardize = j.value("standardize", c.standardize);
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"seed", c.seed},           {"optimizer", to_string(c.optimizer)}, {"momentum", c.momentum}};
}

inline json to_json(const AttackConfig& c) {
  json j{{"method", to_string(c.method)}, {"eps", c.eps},           {"alpha", c.step()},
         {"max_iter", c.max_iter},       {"targeted", c.targeted}, {"overshoot", c.overshoot},
         {"random_start", c.random_start}, {"seed", c.seed},       {"uap_xi", c.uap_xi},
         {"uap_delta", c.uap_delta},     {"uap_inner_iter", c.uap_inner_iter}};
  j["target_label"] = c.target_label ? json(*c.target_label) : json(nullptr);
  return j;
}

/// Report keys: dataset, attack, accuracy, tpr, tnr, confusion{tp,fn,fp,tn},
/// total, train_digest, eval_digest, config.
inline json to_json(const DetectionReport& r) {
  return {{"dataset", r.dataset},
          {"attack", r.attack},
          {"accuracy", r.accuracy},
          {"tpr", r.tpr},
          {"tnr", r.tnr},
          {"confusion", {{"tp", r.confusion.tp}, {"fn", r.confusion.fn}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}}},
          {"total", r.confusion.total()},
          {"train_digest", std::to_string(r.train_digest)},
          {"eval_digest", std::to_string(r.eval_digest)},
          {"config", to_json(r.config)}};
}

inline const char* kReportCsvHeader = "dataset,attack,accuracy,tpr,tnr,tp,fn,fp,tn";

inline std::string to_csv_row(const DetectionReport& r) {
  std::ostringstream o;
  o.precision(17);
  o << r.dataset << ',' << r.attack << ',' << r.accuracy << ',' << r.tpr << ',' << r.tnr << ',' << r.confusion.tp
    << ',' << r.confusion.fn << ',' << r.confusion.fp << ',' << r.confusion.tn;
  return o.str();
}

inline std::string to_csv(const SweepGrid& g) {
  std::ostringstream o;
  o.precision(17);
  o << "kind,window,cutoff,mean_ssim\n";
  for (std::size_t k = 0; k < g.kinds.size(); ++k)
    for (std::size_t w = 0; w < g.windows.size(); ++w)
      for (std::size_t c = 0; c < g.cutoffs.size(); ++c)
        o << to_string(g.kinds[k]) << ',' << g.windows[w] << ',' << g.cutoffs[c] << ',' << g.mean_ssim[k][w][c] << '\n';
  return o.str();
}

inline std::string to_csv(const std::vector<EpochStats>& trace) {
  std::ostringstream o;
  o.precision(17);
  o << "epoch,loss,accuracy\n";
  for (const auto& e : trace) o << e.epoch << ',' << e.loss << ',' << e.accuracy << '\n';
  return o.str();
}

// ---------------------------------------------------------------------------
// Adversarial dataset on disk: <stem>.json manifest + <stem>.advs payload.
// ---------------------------------------------------------------------------

inline json adv_manifest(const std::vector<AdvResult>& advs, const AttackConfig& cfg, const std::string& payload) {
  json ex = json::array();
  for (const auto& a : advs) {
    json e{{"source_id", a.source_id}, {"original_label", a.original_label}, {"clean_label", a.clean_label},
           {"adv_label", a.adv_label}, {"success", a.success},               {"l2", a.l2},
           {"linf", a.linf},           {"iterations", a.iterations_used}};
    e["target_label"] = a.target_label ? json(*a.target_label) : json(nullptr);
    ex.push_back(std::move(e));
  }
  return {{"method", to_string(cfg.method)}, {"config", to_json(cfg)}, {"payload", payload},
          {"count", advs.size()},            {"examples", std::move(ex)}};
}

inline void save_adversarials(const std::vector<AdvResult>& advs, const AttackConfig& cfg,
                              const std::filesystem::path& stem) {
  std::vector<ImageTensor> imgs;
  for (const auto& a : advs) imgs.push_back(a.adversarial);
  const std::filesystem::path payload = stem.string() + ".advs";
  write_file_atomic(payload, encode_advs(imgs));
  write_text_atomic(stem.string() + ".json", adv_manifest(advs, cfg, payload.filename().string()).dump(2));
}

inline std::vector<AdvResult> load_adversarials(const std::filesystem::path& manifest_path) {
  json m;
  try {
    m = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    fail(errc::format, "'" + manifest_path.string() + "' is not valid JSON: " + e.what());
  }
  try {
    const auto imgs = decode_advs(read_file(manifest_path.parent_path() / m.at("payload").get<std::string>()));
    const auto& ex = m.at("examples");
    require(ex.size() == imgs.size(), errc::consistency, "manifest and ADVS payload disagree on example count");
    std::vector<AdvResult> out;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      const auto& e = ex[i];
      AdvResult a;
      a.adversarial = imgs[i];
      a.source_id = e.at("source_id").get<std::uint64_t>();
      a.original_label = e.at("original_label").get<std::uint32_t>();
      a.clean_label = e.at("clean_label").get<std::uint32_t>();
      a.adv_label = e.at("adv_label").get<std::uint32_t>();
      a.success = e.at("success").get<bool>();
      a.l2 = e.at("l2").get<double>();
      a.linf = e.at("linf").get<double>();
      a.iterations_used = e.at("iterations").get<std::size_t>();
      if (!e.at("target_label").is_null()) a.target_label = e["target_label"].get<std::uint32_t>();
      out.push_back(std::move(a));
    }
    return out;
  } catch (const json::exception& e) {
    fail(errc::format, "malformed adversarial manifest '" + manifest_path.string() + "': " + e.what());
  }
}

}  // namespace advdet
