// advdet command line: config-driven runs of the detection experiments.
//
//   advdet <command> [--config run.json] [--dotted.key value ...] [aliases]
//
// Every field of the resolved config can be set by a flag with its dotted
// name (e.g. --victim.train.epochs 3 or --pipeline.filter.kind=gaussian).
// Each run writes run.json into its output directory; passing that file back
// through --config replays the run.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <set>

#include "advdet/pipeline.hpp"
#include "advdet/report.hpp"

using namespace advdet;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json train_defaults(std::size_t epochs) {
  return {{"epochs", epochs}, {"batch_size", 32}, {"learning_rate", 0.01}, {"optimizer", "sgd_momentum"},
          {"momentum", 0.9}};
}

json defaults(const std::string& command) {
  json cross_seeds = json::array();
  const bool pgd_first = command == "sweep" || command == "diff-maps";
  return {
      {"command", command},
      {"seed", 1},
      {"threads", 1},
      {"out", "advdet-run"},
      {"dataset",
       {{"kind", "synth"},
        {"synth", {{"n", 1000}, {"side", 28}}},
        {"mnist", {{"images", nullptr}, {"labels", nullptr}}},
        {"cifar10", {{"batches", json::array()}}},
        {"limit", 0},
        {"train_fraction", 0.8}}},
      {"victim", {{"arch", "A"}, {"model", nullptr}, {"train", train_defaults(5)}}},
      {"attack",
       {{"methods", json::array({pgd_first ? "pgd" : "fgsm"})},
        {"eps", 0.3},
        {"alpha", 0.0},
        {"max_iter", 100},
        {"targeted", false},
        {"target_label", nullptr},
        {"overshoot", 0.02},
        {"random_start", false},
        {"uap_xi", 0.2},
        {"uap_delta", 0.2},
        {"uap_inner_iter", 50},
        {"limit", 0},
        {"advs", nullptr}}},
      {"pipeline",
       {{"lhe", {{"enabled", true}, {"window", nullptr}}},
        {"filter", {{"kind", "butterworth"}, {"cutoff", nullptr}, {"order", 2}}},
        {"standardize", true}}},
      {"detector",
       {{"train", train_defaults(20)},
        {"train_fraction", 0.8},
        {"pool", "test"},
        {"model", nullptr},
        {"exclude_train_ids", true}}},
      {"sweep",
       {{"pairs", 50},
        {"windows", {3, 5, 7, 9, 11, 13}},
        {"cutoffs", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14}},
        {"kinds", {"ideal", "gaussian", "butterworth"}}}},
      {"cross", {{"archs", {"A", "B", "C"}}, {"methods", {"fgsm", "pgd"}}, {"seeds", cross_seeds}}},
      {"diff", {{"index", 0}}},
      {"input", {{"image", nullptr}, {"index", 0}}},
  };
}

bool compatible(const json& old_v, const json& new_v) {
  if (old_v.is_null() || new_v.is_null()) return true;
  if (old_v.is_number() && new_v.is_number()) return true;
  return old_v.type() == new_v.type();
}

void merge_config(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw UsageError("config '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw UsageError("unknown config key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_config(slot, it.value(), path);
    } else {
      if (!compatible(slot, it.value())) throw UsageError("config key '" + path + "' has the wrong type");
      slot = it.value();
    }
  }
}

json parse_flag_value(const json& existing, const std::string& raw) {
  if (existing.is_string()) return raw;
  if (existing.is_array() && (raw.empty() || raw.front() != '[')) {
    json arr = json::array();
    std::size_t start = 0;
    while (start <= raw.size()) {
      const auto comma = raw.find(',', start);
      const std::string item = raw.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!item.empty()) arr.push_back(json::accept(item) ? json::parse(item) : json(item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return arr;
  }
  return json::accept(raw) ? json::parse(raw) : json(raw);
}

void set_dotted(json& cfg, const std::string& dotted, const std::string& raw) {
  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw UsageError("unknown config key '" + dotted + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw UsageError("'" + dotted + "' names a section, not a value");
  const json v = parse_flag_value(*node, raw);
  if (!compatible(*node, v)) throw UsageError("flag --" + dotted + " has the wrong type");
  *node = v;
}

void apply_dotted_flags(json& cfg, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + tok + "'");
    std::string name = tok.substr(2), value;
    const auto eq = name.find('=');
    if (eq != std::string::npos) {
      value = name.substr(eq + 1);
      name = name.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("flag '" + tok + "' needs a value");
      value = extras[++i];
    }
    set_dotted(cfg, name, value);
  }
}

// ---------------------------------------------------------------------------
// Config -> library structs
// ---------------------------------------------------------------------------

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config '" + where + "." + key + "' is missing or has the wrong type");
  }
}

TrainConfig train_config(const json& j, std::uint64_t seed, const std::string& where) {
  TrainConfig t;
  t.epochs = get<std::size_t>(j, "epochs", where);
  t.batch_size = get<std::size_t>(j, "batch_size", where);
  t.learning_rate = get<double>(j, "learning_rate", where);
  t.optimizer = parse_optimizer(get<std::string>(j, "optimizer", where));
  t.momentum = get<double>(j, "momentum", where);
  t.seed = seed;
  t.validate();
  return t;
}

AttackConfig attack_config(const json& a, const std::string& method, std::uint64_t seed) {
  AttackConfig c;
  c.method = parse_attack_method(method);
  c.eps = get<double>(a, "eps", "attack");
  c.alpha = get<double>(a, "alpha", "attack");
  c.max_iter = get<std::size_t>(a, "max_iter", "attack");
  c.targeted = get<bool>(a, "targeted", "attack");
  if (!a.at("target_label").is_null()) c.target_label = get<std::uint32_t>(a, "target_label", "attack");
  c.overshoot = get<double>(a, "overshoot", "attack");
  c.random_start = get<bool>(a, "random_start", "attack");
  c.uap_xi = get<double>(a, "uap_xi", "attack");
  c.uap_delta = get<double>(a, "uap_delta", "attack");
  c.uap_inner_iter = get<std::size_t>(a, "uap_inner_iter", "attack");
  c.seed = seed;
  c.validate();
  return c;
}

std::vector<std::string> string_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw UsageError("config '" + where + "' must be a list");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw UsageError("config '" + where + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  if (out.empty()) throw UsageError("config '" + where + "' must not be empty");
  return out;
}

char arch_id(const std::string& s) {
  if (s.size() != 1 || (s[0] != 'A' && s[0] != 'B' && s[0] != 'C'))
    throw UsageError("unknown architecture '" + s + "' (expected A, B or C)");
  return s[0];
}

// ---------------------------------------------------------------------------
// Run context
// ---------------------------------------------------------------------------

class Run {
 public:
  Run(std::string command, json cfg) : command_(std::move(command)), cfg_(std::move(cfg)) {
    seed_ = get<std::uint64_t>(cfg_, "seed", "<root>");
    threads_ = std::max<std::size_t>(1, get<std::size_t>(cfg_, "threads", "<root>"));
    out_ = get<std::string>(cfg_, "out", "<root>");
    check_paths();
  }

  const json& cfg() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t threads() const { return threads_; }
  fs::path out(const std::string& name) const { return out_ / name; }

  void load_data() {
    const json& d = cfg_["dataset"];
    const std::string kind = get<std::string>(d, "kind", "dataset");
    if (kind == "synth") {
      SeededRng rng(derive_seed(seed_, 1));
      data_ = synth_shapes(get<std::size_t>(d["synth"], "n", "dataset.synth"),
                           get<std::size_t>(d["synth"], "side", "dataset.synth"), rng);
    } else if (kind == "mnist") {
      data_ = load_mnist(get<std::string>(d["mnist"], "images", "dataset.mnist"),
                         get<std::string>(d["mnist"], "labels", "dataset.mnist"));
    } else if (kind == "cifar10") {
      std::vector<fs::path> batches;
      for (const auto& b : string_list(d["cifar10"]["batches"], "dataset.cifar10.batches")) batches.push_back(b);
      data_ = load_cifar10(batches);
    } else {
      throw UsageError("unknown dataset kind '" + kind + "' (expected synth, mnist or cifar10)");
    }
    const auto limit = get<std::size_t>(d, "limit", "dataset");
    if (limit > 0 && limit < data_.size()) data_ = data_.prefix(limit);
    require(data_.size() >= 2, errc::invalid_input, "dataset has fewer than two images");
    split_ = split_dataset(data_, get<double>(d, "train_fraction", "dataset"), derive_seed(seed_, 2));

    // resolve size-dependent pipeline defaults so run.json can replay them
    const auto base = PipelineConfig::default_for(data_.shape());
    json& p = cfg_["pipeline"];
    if (p["lhe"]["window"].is_null()) p["lhe"]["window"] = base.lhe.window;
    if (p["filter"]["cutoff"].is_null()) p["filter"]["cutoff"] = base.filter.cutoff_d0;
    if (cfg_["cross"]["seeds"].empty()) cfg_["cross"]["seeds"] = json::array({seed_});
  }

  const LabeledDataset& data() const { return data_; }
  const Split<ImageTensor>& split() const { return split_; }

  void write_snapshot() const {
    fs::create_directories(out_);
    write_text_atomic(out_ / "run.json", cfg_.dump(2) + "\n");
  }

  PipelineConfig pipeline() const {
    PipelineConfig p = PipelineConfig::default_for(data_.shape());
    const json& j = cfg_["pipeline"];
    p.use_lhe = get<bool>(j["lhe"], "enabled", "pipeline.lhe");
    p.lhe.window = get<std::size_t>(j["lhe"], "window", "pipeline.lhe");
    p.filter.kind = parse_filter_kind(get<std::string>(j["filter"], "kind", "pipeline.filter"));
    p.filter.cutoff_d0 = get<double>(j["filter"], "cutoff", "pipeline.filter");
    p.filter.order_n = get<int>(j["filter"], "order", "pipeline.filter");
    p.standardize = get<bool>(j, "standardize", "pipeline");
    p.filter.validate();
    p.lhe.validate();
    return p;
  }

  NetworkModel train_victim(char arch, bool save) const {
    const TrainConfig tc = train_config(cfg_["victim"]["train"], derive_seed(seed_, 3), "victim.train");
    const auto num_classes = static_cast<std::uint32_t>(data_.num_classes);
    auto res = train(make_architecture(arch, data_.shape(), num_classes), split_.train, tc,
                     [](const EpochStats& e) {
                       std::printf("  epoch %zu  loss %.4f  train acc %.4f\n", e.epoch, e.loss, e.accuracy);
                     });
    if (save) {
      save_model(res.model, out("victim.snet"));
      write_text_atomic(out("victim_trace.csv"), to_csv(res.trace));
    }
    return std::move(res.model);
  }

  /// Loads victim.model when set, otherwise trains one and stores it in the output directory.
  NetworkModel victim() const {
    const json& m = cfg_["victim"]["model"];
    if (!m.is_null()) return load_model(m.get<std::string>());
    std::printf("training victim %s\n", cfg_["victim"]["arch"].get<std::string>().c_str());
    return train_victim(arch_id(get<std::string>(cfg_["victim"], "arch", "victim")), true);
  }

  std::vector<std::string> methods() const { return string_list(cfg_["attack"]["methods"], "attack.methods"); }

  AttackConfig attack(const std::string& method) const {
    return attack_config(cfg_["attack"], method, derive_seed(seed_, 4));
  }

  LabeledDataset attack_pool() const {
    const auto limit = get<std::size_t>(cfg_["attack"], "limit", "attack");
    return limit > 0 && limit < split_.test.size() ? split_.test.prefix(limit) : split_.test;
  }

  std::vector<AdvResult> run_attack(const NetworkModel& victim, const LabeledDataset& pool,
                                    const std::string& method) const {
    const AttackConfig c = attack(method);
    if (c.method != AttackMethod::uap) return attack_dataset(victim, pool, c, threads_);
    const auto limit = get<std::size_t>(cfg_["attack"], "limit", "attack");
    const LabeledDataset fit = limit > 0 && limit < split_.train.size() ? split_.train.prefix(limit) : split_.train;
    const UapResult u = uap(victim, fit, c);
    save_fmap(u.perturbation, out("uap_perturbation.fmap"));
    return uap_adversarials(victim, pool, u.perturbation);
  }

 private:
  void check_paths() const {
    std::vector<std::string> paths;
    const json& d = cfg_["dataset"];
    const std::string kind = d.value("kind", "");
    if (kind == "mnist") {
      for (const char* k : {"images", "labels"}) {
        if (d["mnist"][k].is_null())
          throw UsageError(std::string("dataset.mnist.") + k + " must be set for the mnist dataset");
        paths.push_back(d["mnist"][k].get<std::string>());
      }
    }
    if (kind == "cifar10")
      for (const auto& b : string_list(d["cifar10"]["batches"], "dataset.cifar10.batches")) paths.push_back(b);
    for (const json* p : {&cfg_["victim"]["model"], &cfg_["attack"]["advs"], &cfg_["input"]["image"]})
      if (!p->is_null()) paths.push_back(p->get<std::string>());
    if (command_ == "eval") {
      if (cfg_["detector"]["model"].is_null()) throw UsageError("eval needs detector.model (--detector)");
      paths.push_back(cfg_["detector"]["model"].get<std::string>());
    }
    for (const auto& p : paths)
      if (!fs::exists(p)) throw UsageError("path does not exist: " + p);
  }

  std::string command_;
  json cfg_;
  std::uint64_t seed_ = 1;
  std::size_t threads_ = 1;
  fs::path out_;
  LabeledDataset data_;
  Split<ImageTensor> split_;
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

json norm_summary(const NetworkModel& victim, const LabeledDataset& pool, const std::vector<AdvResult>& advs) {
  std::size_t ok = 0, correct = 0;
  double l2 = 0, linf = 0;
  for (std::size_t i = 0; i < advs.size(); ++i) {
    ok += advs[i].success;
    correct += advs[i].adv_label == pool.labels[i];
    l2 += advs[i].l2;
    linf += advs[i].linf;
  }
  const double n = std::max<double>(1.0, static_cast<double>(advs.size()));
  return {{"count", advs.size()},
          {"success_rate", static_cast<double>(ok) / n},
          {"mean_l2", l2 / n},
          {"mean_linf", linf / n},
          {"clean_accuracy", accuracy(victim, pool)},
          {"adversarial_accuracy", static_cast<double>(correct) / n}};
}

int cmd_train_victim(Run& run) {
  run.load_data();
  run.write_snapshot();
  const auto model = run.train_victim(arch_id(get<std::string>(run.cfg()["victim"], "arch", "victim")), true);
  const double acc = accuracy(model, run.split().test);
  write_text_atomic(run.out("summary.json"),
                    json{{"clean_accuracy", acc}, {"test_size", run.split().test.size()}}.dump(2) + "\n");
  std::printf("test accuracy %.4f\n", acc);
  return kExitOk;
}

int cmd_attack(Run& run) {
  run.load_data();
  run.write_snapshot();
  const NetworkModel victim = run.victim();
  const LabeledDataset pool = run.attack_pool();
  json summary{{"methods", json::object()}};
  for (const auto& method : run.methods()) {
    const auto advs = run.run_attack(victim, pool, method);
    save_adversarials(advs, run.attack(method), run.out(method));
    json s = norm_summary(victim, pool, advs);
    if (method == "uap") {
      const auto rates = universal_rates(victim, pool, load_fmap(run.out("uap_perturbation.fmap")));
      s["fooling_rate"] = rates.fooling_rate;
      s["error_rate"] = rates.error_rate;
    }
    std::printf("%-8s success %.4f  mean L2 %.4f  mean Linf %.4f\n", method.c_str(),
                s["success_rate"].get<double>(), s["mean_l2"].get<double>(), s["mean_linf"].get<double>());
    summary["methods"][method] = s;
  }
  const auto& m = summary["methods"];
  if (m.contains("fgsm") && m.contains("pgd") && m.contains("ifgsm"))
    summary["l2_order_fgsm_pgd_ifgsm"] = m["fgsm"]["mean_l2"] >= m["pgd"]["mean_l2"] &&
                                         m["pgd"]["mean_l2"] >= m["ifgsm"]["mean_l2"];
  write_text_atomic(run.out("summary.json"), summary.dump(2) + "\n");
  return kExitOk;
}

/// Detection pool plus its adversarials, either loaded from attack.advs or generated now.
struct DetectionInputs {
  LabeledDataset pool;
  std::vector<AdvResult> advs;
  std::string method;
};

DetectionInputs detection_inputs(const Run& run) {
  const std::string pool_kind = get<std::string>(run.cfg()["detector"], "pool", "detector");
  if (pool_kind != "test" && pool_kind != "all") throw UsageError("detector.pool must be 'test' or 'all'");
  DetectionInputs in{pool_kind == "all" ? run.data() : run.split().test, {}, run.methods().front()};
  const json& advs = run.cfg()["attack"]["advs"];
  if (!advs.is_null()) {
    in.advs = load_adversarials(advs.get<std::string>());
    const json manifest = json::parse(read_text(advs.get<std::string>()));
    in.method = manifest.value("method", in.method);
  } else {
    in.advs = run.run_attack(run.victim(), in.pool, in.method);
  }
  return in;
}

json detector_manifest(const DetectionPipeline& p, const std::string& dataset, const std::string& method) {
  return {{"pipeline", to_json(p.config)}, {"dataset", dataset}, {"attack", method},
          {"train_provenance", p.train_provenance}};
}

void write_report(const Run& run, const DetectionReport& r) {
  write_text_atomic(run.out("report.json"), to_json(r).dump(2) + "\n");
  write_text_atomic(run.out("report.csv"), std::string(kReportCsvHeader) + "\n" + to_csv_row(r) + "\n");
  std::printf("%s/%s detection accuracy %.4f  tpr %.4f  tnr %.4f  (n=%zu)\n", r.dataset.c_str(), r.attack.c_str(),
              r.accuracy, r.tpr, r.tnr, r.confusion.total());
}

int cmd_detect(Run& run) {
  run.load_data();
  run.write_snapshot();
  const auto in = detection_inputs(run);
  DetectionProtocol proto;
  proto.pipeline = run.pipeline();
  proto.train = train_config(run.cfg()["detector"]["train"], 0, "detector.train");
  proto.train_fraction = get<double>(run.cfg()["detector"], "train_fraction", "detector");
  const auto t = detection_trial(in.pool, in.advs, proto, in.method, run.seed());
  save_model(t.pipeline.detector, run.out("detector.snet"));
  write_text_atomic(run.out("detector.json"), detector_manifest(t.pipeline, in.pool.name, in.method).dump(2) + "\n");
  write_report(run, t.report);
  return kExitOk;
}

int cmd_eval(Run& run) {
  run.load_data();
  const fs::path model_path = run.cfg()["detector"]["model"].get<std::string>();
  fs::path manifest_path = model_path;
  manifest_path.replace_extension(".json");
  if (!fs::exists(manifest_path)) throw UsageError("path does not exist: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    fail(errc::format, "'" + manifest_path.string() + "' is not valid JSON");
  }
  DetectionPipeline p{pipeline_from_json(manifest.at("pipeline"), run.pipeline()), load_model(model_path),
                      manifest.at("train_provenance").get<std::vector<std::uint64_t>>()};
  // the detector's own pipeline wins over the command line; record what was used
  json& pj = const_cast<json&>(run.cfg())["pipeline"];
  pj["lhe"]["enabled"] = p.config.use_lhe;
  pj["lhe"]["window"] = p.config.lhe.window;
  pj["filter"]["kind"] = to_string(p.config.filter.kind);
  pj["filter"]["cutoff"] = p.config.filter.cutoff_d0;
  pj["filter"]["order"] = p.config.filter.order_n;
  pj["standardize"] = p.config.standardize;
  run.write_snapshot();

  auto in = detection_inputs(run);
  if (get<bool>(run.cfg()["detector"], "exclude_train_ids", "detector")) {
    const std::unordered_set<std::uint64_t> used(p.train_provenance.begin(), p.train_provenance.end());
    std::unordered_set<std::uint64_t> keep;
    for (auto id : in.pool.ids)
      if (!used.count(id)) keep.insert(id);
    in.pool = select_sources(in.pool, keep);
    in.advs = select_sources(in.advs, keep);
  }
  auto report = evaluate(p, in.pool, usable_adversarials(in.advs), in.method, run.seed());
  report.dataset = in.pool.name;
  write_report(run, report);
  return kExitOk;
}

int cmd_sweep(Run& run) {
  run.load_data();
  run.write_snapshot();
  const json& s = run.cfg()["sweep"];
  const NetworkModel victim = run.victim();
  const auto pairs = get<std::size_t>(s, "pairs", "sweep");
  const LabeledDataset pool = pairs > 0 && pairs < run.split().test.size() ? run.split().test.prefix(pairs)
                                                                            : run.split().test;
  const auto advs = run.run_attack(victim, pool, run.methods().front());
  std::vector<ImageTensor> normals, adversarials;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    normals.push_back(pool.images[i]);
    adversarials.push_back(advs[i].adversarial);
  }
  std::vector<FilterKind> kinds;
  for (const auto& k : string_list(s["kinds"], "sweep.kinds")) kinds.push_back(parse_filter_kind(k));
  const auto windows = get<std::vector<std::size_t>>(s, "windows", "sweep");
  const auto cutoffs = get<std::vector<double>>(s, "cutoffs", "sweep");
  const auto grid = sweep_params(normals, adversarials, windows, cutoffs, kinds,
                                 get<int>(run.cfg()["pipeline"]["filter"], "order", "pipeline.filter"));
  write_text_atomic(run.out("sweep.csv"), to_csv(grid));
  json summary{{"pairs", pool.size()}, {"kinds", json::object()}};
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    summary["kinds"][to_string(kinds[k])] = {{"max_mean_ssim", grid.slice_max(k)},
                                             {"max_cutoff_step", grid.slice_max_step(k)}};
    std::printf("%-12s max mean SSIM %.4f  max cutoff step %.4f\n", to_string(kinds[k]).c_str(), grid.slice_max(k),
                grid.slice_max_step(k));
  }
  write_text_atomic(run.out("summary.json"), summary.dump(2) + "\n");
  return kExitOk;
}

int cmd_cross_eval(Run& run) {
  run.load_data();
  run.write_snapshot();
  const json& c = run.cfg()["cross"];
  const auto archs = string_list(c["archs"], "cross.archs");
  const auto methods = string_list(c["methods"], "cross.methods");
  const auto seeds = get<std::vector<std::uint64_t>>(c, "seeds", "cross");
  const LabeledDataset& pool = run.split().test;
  std::vector<std::vector<std::vector<AdvResult>>> advs;
  for (const auto& a : archs) {
    std::printf("training victim %s\n", a.c_str());
    const NetworkModel v = run.train_victim(arch_id(a), false);
    save_model(v, run.out("victim_" + a + ".snet"));
    advs.emplace_back();
    for (const auto& m : methods) advs.back().push_back(run.run_attack(v, pool, m));
  }
  DetectionProtocol proto;
  proto.pipeline = run.pipeline();
  proto.train = train_config(run.cfg()["detector"]["train"], 0, "detector.train");
  proto.train_fraction = get<double>(run.cfg()["detector"], "train_fraction", "detector");
  const auto res = cross_model_matrix(pool, advs, archs, methods, proto, seeds);

  json cells = json::array(), transfer = json::array();
  for (std::size_t tv = 0; tv < archs.size(); ++tv)
    for (std::size_t ev = 0; ev < archs.size(); ++ev)
      for (std::size_t m = 0; m < methods.size(); ++m) {
        json per_seed = json::array();
        for (const auto& s : res.reports) per_seed.push_back(to_json(s[tv][ev][m]));
        cells.push_back({{"train_victim", archs[tv]},
                         {"eval_victim", archs[ev]},
                         {"method", methods[m]},
                         {"mean_accuracy", res.mean_accuracy(tv, ev, m)},
                         {"reports", per_seed}});
      }
  for (std::size_t tm = 0; tm < methods.size(); ++tm)
    for (std::size_t em = 0; em < methods.size(); ++em)
      transfer.push_back({{"train_method", methods[tm]},
                          {"eval_method", methods[em]},
                          {"mean_accuracy", res.mean_transfer(tm, em)}});
  json diag = json::object();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    double on = 0, off = 0;
    for (std::size_t tv = 0; tv < archs.size(); ++tv)
      for (std::size_t ev = 0; ev < archs.size(); ++ev) (tv == ev ? on : off) += res.mean_accuracy(tv, ev, m);
    const double n = static_cast<double>(archs.size());
    diag[methods[m]] = {{"diagonal_mean", on / n}, {"off_diagonal_mean", n > 1 ? off / (n * n - n) : 0.0}};
    std::printf("%-8s diagonal %.4f  off-diagonal %.4f\n", methods[m].c_str(), on / n,
                n > 1 ? off / (n * n - n) : 0.0);
  }
  write_text_atomic(run.out("cross.json"),
                    json{{"victims", archs}, {"methods", methods}, {"seeds", seeds}, {"cells", cells},
                         {"method_transfer", transfer}, {"summary", diag}}
                            .dump(2) +
                        "\n");
  return kExitOk;
}

int cmd_diff_maps(Run& run) {
  run.load_data();
  run.write_snapshot();
  const NetworkModel victim = run.victim();
  const auto index = get<std::size_t>(run.cfg()["diff"], "index", "diff");
  require(index < run.split().test.size(), errc::invalid_input, "diff.index is past the end of the test split");
  const LabeledDataset one = run.split().test.subset(std::vector<std::size_t>{index});
  const auto adv = run.run_attack(victim, one, run.methods().front()).front();
  const auto b = diff_maps(victim, one.images[0], adv.adversarial, run.pipeline().lhe);
  save_fmap(b.pixel_plain, run.out("pixel_plain.fmap"));
  save_fmap(b.pixel_lhe, run.out("pixel_lhe.fmap"));
  save_fmap(b.feature_plain, run.out("feature_plain.fmap"));
  save_fmap(b.feature_lhe, run.out("feature_lhe.fmap"));
  const json summary{{"source_id", adv.source_id},         {"attack_success", adv.success},
                     {"mean_pixel_plain", b.mean_pixel_plain}, {"mean_pixel_lhe", b.mean_pixel_lhe},
                     {"mean_feature_plain", b.mean_feature_plain}, {"mean_feature_lhe", b.mean_feature_lhe}};
  write_text_atomic(run.out("summary.json"), summary.dump(2) + "\n");
  std::printf("mean |feature diff|  plain %.4f  with LHE %.4f\n", b.mean_feature_plain, b.mean_feature_lhe);
  return kExitOk;
}

int cmd_preprocess(Run& run) {
  ImageTensor img;
  const json& input = run.cfg()["input"];
  if (!input["image"].is_null()) {
    img = load_pnm(input["image"].get<std::string>());
    // no dataset: resolve the size-dependent defaults from the image itself
    json& p = const_cast<json&>(run.cfg())["pipeline"];
    const auto base = PipelineConfig::default_for(img.shape());
    if (p["lhe"]["window"].is_null()) p["lhe"]["window"] = base.lhe.window;
    if (p["filter"]["cutoff"].is_null()) p["filter"]["cutoff"] = base.filter.cutoff_d0;
  } else {
    run.load_data();
    const auto index = get<std::size_t>(input, "index", "input");
    require(index < run.data().size(), errc::invalid_input, "input.index is past the end of the dataset");
    img = run.data().images[index];
  }
  run.write_snapshot();
  PipelineConfig p = PipelineConfig::default_for(img.shape());
  p = pipeline_from_json(run.cfg()["pipeline"], p);
  const FeatureMap out = preprocess(p, img);
  save_pnm(img, run.out("input.pnm"));
  save_pnm(p.use_lhe ? lhe(img, p.lhe) : img, run.out("enhanced.pnm"));
  save_fmap(out, run.out("preprocessed.fmap"));
  save_pnm(normalize_signed(out), run.out("preprocessed.pnm"));
  std::printf("wrote %s\n", run.out("preprocessed.fmap").c_str());
  return kExitOk;
}

int exit_code(errc c) {
  switch (c) {
    case errc::config: return kExitUsage;
    case errc::numeric: return kExitNumeric;
    default: return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial example detection via enhanced high-frequency features"};
  app.require_subcommand(1);

  struct Aliases {
    std::string config, dataset, mnist_images, mnist_labels, arch, method, out, model, detector, advs, image;
    std::vector<std::string> cifar;
    double eps = 0;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    bool no_lhe = false;
  } a;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train-victim", "Train a victim classifier"},
      {"attack", "Generate adversarial examples against a victim"},
      {"detect", "Train a detector and report held-out accuracy"},
      {"eval", "Score a trained detector on new adversarial data"},
      {"sweep", "SSIM sweep over filter kind, LHE window and cutoff"},
      {"cross-eval", "Cross-model detection matrix over victim architectures"},
      {"diff-maps", "Pixel and feature difference maps with and without LHE"},
      {"preprocess", "Dump the preprocessing pipeline for one image"},
  };
  std::map<std::string, CLI::App*> subs;
  std::map<std::string, std::map<std::string, CLI::Option*>> opts;
  for (const auto& [name, help] : commands) {
    auto* s = app.add_subcommand(name, help);
    s->allow_extras();
    auto& o = opts[name];
    o["config"] = s->add_option("--config", a.config, "JSON config file (e.g. a previous run.json)");
    o["dataset"] = s->add_option("--dataset", a.dataset, "synth | mnist | cifar10");
    o["mnist_images"] = s->add_option("--mnist-images", a.mnist_images, "MNIST IDX image file");
    o["mnist_labels"] = s->add_option("--mnist-labels", a.mnist_labels, "MNIST IDX label file");
    o["cifar"] = s->add_option("--cifar-batch", a.cifar, "CIFAR-10 binary batch (repeatable)");
    o["arch"] = s->add_option("--arch", a.arch, "victim architecture A | B | C");
    o["method"] = s->add_option("--method", a.method, "attack method(s), comma separated");
    o["eps"] = s->add_option("--eps", a.eps, "L-inf budget");
    o["no_lhe"] = s->add_flag("--no-lhe", a.no_lhe, "bypass the LHE stage");
    o["seed"] = s->add_option("--seed", a.seed, "master seed");
    o["threads"] = s->add_option("--threads", a.threads, "worker threads for attacks (default 1)");
    o["out"] = s->add_option("--out", a.out, "output directory");
    o["model"] = s->add_option("--model", a.model, "victim model file (SNET)");
    o["detector"] = s->add_option("--detector", a.detector, "detector model file (SNET)");
    o["advs"] = s->add_option("--advs", a.advs, "adversarial manifest written by the attack command");
    o["image"] = s->add_option("--image", a.image, "PGM/PPM input for preprocess");
    subs[name] = s;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  std::string command;
  for (const auto& [name, s] : subs)
    if (s->parsed()) command = name;
  auto given = [&](const char* k) { return opts[command][k]->count() > 0; };

  try {
    json cfg = defaults(command);
    if (given("config")) {
      if (!fs::exists(a.config)) throw UsageError("path does not exist: " + a.config);
      json file;
      try {
        file = json::parse(read_text(a.config));
      } catch (const json::exception& e) {
        throw UsageError("config '" + a.config + "' is not valid JSON: " + e.what());
      }
      merge_config(cfg, file, "");
      cfg["command"] = command;
    }
    apply_dotted_flags(cfg, subs[command]->remaining());
    if (given("dataset")) cfg["dataset"]["kind"] = a.dataset;
    if (given("mnist_images")) cfg["dataset"]["mnist"]["images"] = a.mnist_images;
    if (given("mnist_labels")) cfg["dataset"]["mnist"]["labels"] = a.mnist_labels;
    if (given("cifar")) cfg["dataset"]["cifar10"]["batches"] = a.cifar;
    if (given("arch")) cfg["victim"]["arch"] = a.arch;
    if (given("method")) set_dotted(cfg, "attack.methods", a.method);
    if (given("eps")) cfg["attack"]["eps"] = a.eps;
    if (given("no_lhe")) cfg["pipeline"]["lhe"]["enabled"] = false;
    if (given("seed")) cfg["seed"] = a.seed;
    if (given("threads")) cfg["threads"] = a.threads;
    if (given("out")) cfg["out"] = a.out;
    if (given("model")) cfg["victim"]["model"] = a.model;
    if (given("detector")) cfg["detector"]["model"] = a.detector;
    if (given("advs")) cfg["attack"]["advs"] = a.advs;
    if (given("image")) cfg["input"]["image"] = a.image;

    Run run(command, cfg);
    if (command == "train-victim") return cmd_train_victim(run);
    if (command == "attack") return cmd_attack(run);
    if (command == "detect") return cmd_detect(run);
    if (command == "eval") return cmd_eval(run);
    if (command == "sweep") return cmd_sweep(run);
    if (command == "cross-eval") return cmd_cross_eval(run);
    if (command == "diff-maps") return cmd_diff_maps(run);
    return cmd_preprocess(run);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "advdet %s: %s\n", command.c_str(), e.what());
    return kExitUsage;
  } catch (const advdet::error& e) {
    std::fprintf(stderr, "advdet %s: %s\n", command.c_str(), e.what());
    return exit_code(e.code());
  } catch (const json::exception& e) {
    std::fprintf(stderr, "advdet %s: config error: %s\n", command.c_str(), e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "advdet %s: %s\n", command.c_str(), e.what());
    return kExitData;
  }
}
