#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "advdet/pipeline.hpp"
#include "advdet/report.hpp"
#include "test_util.hpp"

using namespace advdet;
using namespace advdet::testing;

namespace {

std::vector<AdvResult> synth_attack(AttackMethod method, const LabeledDataset& data, double eps = 0.3) {
  AttackConfig c;
  c.method = method;
  c.eps = eps;
  c.max_iter = method == AttackMethod::deepfool ? 50 : 20;
  return attack_dataset(synth_fixture().victim, data, c);
}

PipelineConfig synth_pipeline() { return PipelineConfig::default_for(Shape{16, 16, 1}); }

DetectionProtocol quick_protocol() {
  DetectionProtocol p;
  p.pipeline = synth_pipeline();
  p.train.epochs = 5;
  return p;
}

// Two-class maps whose first pixel carries the label sign; everything else noise.
MapDataset labelled_maps(std::size_t n, bool informative, SeededRng& r) {
  MapDataset d{"maps", 2, {}, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t label = static_cast<std::uint32_t>(i % 2);
    std::vector<double> v(4 * 4);
    for (double& x : v) x = r.next_uniform(-1, 1);
    if (informative) v[0] = label ? 5.0 : -5.0;
    d.push(FeatureMap(Shape{4, 4, 1}, v), label, i);
  }
  return d;
}

DetectionPipeline fixed_detector(const NetworkModel& m) { return {synth_pipeline(), m, {}}; }

}  // namespace

TEST(Preprocess, ConstantImageGivesZeroMap) {
  const auto p = preprocess(synth_pipeline(), ImageTensor::filled(Shape{16, 16, 1}, 0.42));
  for (double v : p.values()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(Preprocess, Deterministic) {
  const auto& f = synth_fixture();
  EXPECT_TRUE(preprocess(synth_pipeline(), f.test.images[3]) == preprocess(synth_pipeline(), f.test.images[3]));
}

TEST(Preprocess, DefaultsFollowInputSize) {
  const auto p = PipelineConfig::default_for(Shape{28, 28, 1});
  EXPECT_EQ(p.lhe.window, 7u);
  EXPECT_EQ(p.filter.kind, FilterKind::butterworth);
  EXPECT_EQ(p.filter.cutoff_d0, 7.0);
  EXPECT_TRUE(p.use_lhe);
  EXPECT_TRUE(p.standardize);
  EXPECT_EQ(PipelineConfig::default_for(Shape{224, 224, 3}).lhe.window, 27u);
}

TEST(PreprocessProperty, AmplifiesPerturbation) {
  const auto& f = synth_fixture();
  const auto data = f.test.prefix(100);
  const auto advs = synth_attack(AttackMethod::pgd, data, 0.1);
  double raw = 0, pre = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    raw += mean_abs(difference(advs[i].adversarial, data.images[i]));
    pre += mean_abs(difference(preprocess(synth_pipeline(), advs[i].adversarial),
                               preprocess(synth_pipeline(), data.images[i])));
  }
  EXPECT_GT(pre / raw, 1.0);
}

TEST(DetectionSet, BalancesByTruncation) {
  const auto& f = synth_fixture();
  const auto normals = f.test.prefix(100);
  auto advs = synth_attack(AttackMethod::fgsm, f.test.prefix(80));
  const auto set = build_detection_set(normals, advs, synth_pipeline(), 5);
  EXPECT_EQ(set.size(), 160u);
  EXPECT_EQ(std::count(set.labels.begin(), set.labels.end(), kNormal), 80);
  EXPECT_EQ(std::count(set.labels.begin(), set.labels.end(), kAdversarial), 80);
  const auto again = build_detection_set(normals, advs, synth_pipeline(), 5);
  EXPECT_EQ(set.ids, again.ids);
  EXPECT_EQ(set.labels, again.labels);
  EXPECT_EQ(set.images, again.images);

  try {
    build_detection_set(normals, {}, synth_pipeline(), 5);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::invalid_input);
  }
  EXPECT_THROW(build_detection_set(LabeledDataset{"e", 10, {}, {}, {}}, advs, synth_pipeline(), 5), error);
}

TEST(Evaluate, CoinFlipIsChance) {
  SeededRng r(1);
  const auto set = labelled_maps(400, false, r);
  const auto det = fixed_detector(random_linear_model(Shape{4, 4, 1}, 2, r));
  const auto rep = evaluate_set(det, set, "none");
  EXPECT_NEAR(rep.accuracy, 0.5, 0.05);
  EXPECT_EQ(rep.confusion.total(), 400u);
}

TEST(Evaluate, PerfectSeparation) {
  SeededRng r(2);
  const auto set = labelled_maps(100, true, r);
  std::vector<double> w(16 * 2, 0.0);
  w[0 * 2 + 0] = -1.0;
  w[0 * 2 + 1] = 1.0;
  const auto det = fixed_detector(linear_model(Shape{4, 4, 1}, 2, w, {0, 0}));
  const auto rep = evaluate_set(det, set, "none");
  EXPECT_EQ(rep.accuracy, 1.0);
  EXPECT_EQ(rep.tpr, 1.0);
  EXPECT_EQ(rep.tnr, 1.0);
  EXPECT_EQ(rep.confusion.tp, 50u);
}

TEST(Evaluate, OverlapIsProtocolError) {
  SeededRng r(3);
  const auto set = labelled_maps(20, true, r);
  auto det = fixed_detector(random_linear_model(Shape{4, 4, 1}, 2, r));
  det.train_provenance = {3, 100};
  try {
    evaluate_set(det, set, "none");
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::protocol);
  }
}

TEST(Detection, SynthFgsmEndToEnd) {
  SeededRng r(21);
  auto pool = synth_shapes(600, 16, r);
  for (auto& id : pool.ids) id += 1000;  // disjoint from the victim's training ids
  const auto advs = synth_attack(AttackMethod::fgsm, pool);
  auto proto = quick_protocol();
  proto.train.epochs = 20;
  const auto t = detection_trial(pool, advs, proto, "fgsm", 1);
  EXPECT_GE(t.report.accuracy, 0.9);
  EXPECT_EQ(t.report.confusion.total(), t.report.confusion.tp + t.report.confusion.fn + t.report.confusion.fp +
                                            t.report.confusion.tn);
  EXPECT_NEAR(t.report.accuracy, (t.report.tpr + t.report.tnr) / 2, 1e-12);
  const auto again = detection_trial(pool, advs, proto, "fgsm", 1);
  EXPECT_EQ(to_json(t.report), to_json(again.report));
  EXPECT_TRUE(t.pipeline.detector == again.pipeline.detector);
}

TEST(Detection, AblationSharesSplit) {
  const auto& f = synth_fixture();
  const auto pool = f.test.prefix(60);
  auto proto = quick_protocol();
  proto.train.epochs = 1;
  const auto ab = lhe_ablation(pool, synth_attack(AttackMethod::fgsm, pool), proto, "fgsm", 2);
  EXPECT_EQ(ab.with_lhe.train_digest, ab.without_lhe.train_digest);
  EXPECT_EQ(ab.with_lhe.eval_digest, ab.without_lhe.eval_digest);
  EXPECT_TRUE(ab.with_lhe.config.use_lhe);
  EXPECT_FALSE(ab.without_lhe.config.use_lhe);
}

TEST(Detection, CrossModelShape) {
  const auto& f = synth_fixture();
  const auto pool = f.test.prefix(40);
  TrainConfig vt;
  vt.epochs = 1;
  std::vector<NetworkModel> victims{f.victim, train(make_architecture('B', pool.shape(), 2), f.train, vt).model,
                                    train(make_architecture('C', pool.shape(), 2), f.train, vt).model};
  std::vector<std::vector<std::vector<AdvResult>>> advs(3);
  for (std::size_t v = 0; v < 3; ++v)
    for (auto m : {AttackMethod::fgsm, AttackMethod::pgd}) {
      AttackConfig c;
      c.method = m;
      c.eps = 0.3;
      c.max_iter = 5;
      advs[v].push_back(attack_dataset(victims[v], pool, c));
    }
  auto proto = quick_protocol();
  proto.train.epochs = 1;
  const auto res = cross_model_matrix(pool, advs, {"A", "B", "C"}, {"fgsm", "pgd"}, proto, {1});
  ASSERT_EQ(res.reports.size(), 1u);
  ASSERT_EQ(res.reports[0].size(), 3u);
  for (const auto& row : res.reports[0]) {
    ASSERT_EQ(row.size(), 3u);
    for (const auto& cell : row) {
      ASSERT_EQ(cell.size(), 2u);
      for (const auto& rep : cell) EXPECT_GT(rep.confusion.total(), 0u);
    }
  }
  EXPECT_EQ(res.method_transfer[0][0].size(), 2u);
}

TEST(Sweep, GridShapeAndRange) {
  const auto& f = synth_fixture();
  const auto data = f.test.prefix(20);
  const auto advs = synth_attack(AttackMethod::pgd, data, 0.1);
  std::vector<ImageTensor> n, a;
  for (std::size_t i = 0; i < data.size(); ++i) {
    n.push_back(data.images[i]);
    a.push_back(advs[i].adversarial);
  }
  const auto g = sweep_params(n, a, {3, 5, 7}, {2, 4, 6});
  ASSERT_EQ(g.mean_ssim.size(), 3u);
  for (const auto& k : g.mean_ssim) {
    ASSERT_EQ(k.size(), 3u);
    for (const auto& w : k) {
      ASSERT_EQ(w.size(), 3u);
      for (double v : w) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
  const std::string csv = to_csv(g);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 28);
  try {
    sweep_params(n, a, {}, {2});
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::invalid_input);
  }
  EXPECT_THROW(sweep_params(n, a, {3}, {}), error);
}

TEST(DiffMaps, IdenticalInputsGiveZeroMaps) {
  const auto& f = synth_fixture();
  const auto b = diff_maps(f.victim, f.test.images[0], f.test.images[0], LheConfig{5});
  for (const auto* m : {&b.pixel_plain, &b.pixel_lhe, &b.feature_plain, &b.feature_lhe})
    for (double v : m->values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(b.mean_feature_lhe, 0.0);
}

TEST(DiffMaps, FmapRoundTripBitExact) {
  const auto& f = synth_fixture();
  const auto adv = synth_attack(AttackMethod::pgd, f.test.prefix(1), 0.1)[0].adversarial;
  const auto b = diff_maps(f.victim, f.test.images[0], adv, LheConfig{5});
  for (const auto* m : {&b.pixel_plain, &b.pixel_lhe, &b.feature_plain, &b.feature_lhe}) {
    EXPECT_TRUE(decode_fmap(encode_fmap(*m)) == *m);
  }
  EXPECT_EQ(b.feature_plain.channels(), 16u);
  EXPECT_GT(b.mean_pixel_plain, 0.0);
}

TEST(Report, JsonKeySet) {
  SeededRng r(4);
  const auto set = labelled_maps(10, true, r);
  const auto rep = evaluate_set(fixed_detector(random_linear_model(Shape{4, 4, 1}, 2, r)), set, "fgsm");
  const auto j = to_json(rep);
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  EXPECT_EQ(keys, (std::set<std::string>{"dataset", "attack", "accuracy", "tpr", "tnr", "confusion", "total",
                                         "train_digest", "eval_digest", "config"}));
  EXPECT_EQ(j["config"]["detector_input"], "signed-standardized");
  EXPECT_EQ(j["total"], 10);
  const std::string row = to_csv_row(rep);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 8);
}

TEST(Report, AdversarialManifestRoundTrip) {
  const auto& f = synth_fixture();
  const auto advs = synth_attack(AttackMethod::fgsm, f.test.prefix(5));
  const auto dir = std::filesystem::temp_directory_path() / "advdet_manifest_test";
  AttackConfig c;
  save_adversarials(advs, c, dir / "fgsm");
  const auto back = load_adversarials(dir / "fgsm.json");
  ASSERT_EQ(back.size(), advs.size());
  for (std::size_t i = 0; i < advs.size(); ++i) {
    EXPECT_EQ(back[i].adversarial, advs[i].adversarial);
    EXPECT_EQ(back[i].source_id, advs[i].source_id);
    EXPECT_EQ(back[i].success, advs[i].success);
    EXPECT_EQ(back[i].l2, advs[i].l2);
  }
  std::filesystem::remove_all(dir);
}
