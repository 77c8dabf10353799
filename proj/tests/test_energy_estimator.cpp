#include <cmath>
#include <random>

#include "doctest.h"
#include "eanas/energy_estimator.hpp"
#include "eanas/errors.hpp"
#include "helpers.hpp"

using namespace eanas;

namespace {

struct Fixture {
  EnergyDataset ds;
  std::map<std::size_t, NormalizationStats> stats;

  explicit Fixture(std::size_t n_archs = 300, SyntheticOracleConfig cfg = testing::constant_offset_config())
      : ds(generate_synthetic(cfg, sample_distinct(77, n_archs))), stats(compute_normalization(ds)) {}

  std::vector<LabeledSample> samples(const std::vector<EnergyRecord>& r) const { return to_samples(ds, r, stats); }
};

// Ground truth for a held-out architecture in the target's normalized units.
double normalized_truth(const Fixture& f, const SyntheticOracleConfig& cfg, const DetectorArchitecture& a,
                        std::size_t device) {
  return f.stats.at(device).normalize(oracle_energy(cfg, a, device));
}

}  // namespace

TEST_CASE("energy parts are snapped to a dyadic grid") {
  CHECK(snap_energy(0.0) == 0.0);
  CHECK(snap_energy(0.75) == 0.75);
  CHECK(snap_energy(1.0 + 0x1p-34) == 1.0);
  CHECK(snap_energy(-1.0 - 0x1p-31) == -1.0 - 0x1p-31);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 10000; ++i) {
    const double raw = u(rng);
    const double b = snap_energy(raw);
    const double r = snap_energy(u(rng));
    CHECK(std::abs(b - raw) <= 0x1p-33);
    CHECK((b + r) - r == b);
  }
}

TEST_CASE("device one-hot augmentation") {
  const auto e = encode_architecture(default_initial_architecture());
  const auto aug = device_augmented(e, 1, 3);
  REQUIRE(aug.size() == 83);
  CHECK(std::equal(e.values.begin(), e.values.end(), aug.values.begin()));
  CHECK(aug.values[80] == 0.0);
  CHECK(aug.values[81] == 1.0);
  CHECK(aug.values[82] == 0.0);
}

TEST_CASE("after pretraining the estimator equals the prior") {
  Fixture f(120);
  const auto split = split_fewshot(f.ds, f.ds.registry().id("npu"), 10, 1);
  const auto est = pretrain_base(f.samples(split.source_pool), f.ds.registry(), testing::quick_estimator_config());
  CHECK(est.residual().weight(est.residual().layer_count() - 1).isZero());
  CHECK(est.residual().bias(est.residual().layer_count() - 1).isZero());
  for (const auto& e : f.ds.archs()) {
    const double dense = snap_energy(est.base().forward(e.encoding.values));
    for (const auto& name : f.ds.registry().names()) {
      const auto h = f.ds.registry().id(name);
      CHECK(est.predict(e.encoding, h) == dense);
      CHECK(est.predict(*e.arch, h) == doctest::Approx(dense).epsilon(1e-12));
      CHECK(est.residual_part(*e.arch, h) == 0.0);
    }
  }
}

TEST_CASE("device-independent energies are learned by the prior") {
  // The analytic cost multiplies ratio, kernel and attention inside each
  // block, so generalizing to unseen architectures takes a few thousand
  // training designs.
  auto cfg = testing::constant_offset_config();
  cfg.devices = {{"src", 0.0, 1.0, 0.0}, {"tgt", 0.0, 1.0, 0.0}};
  Fixture f(7000, cfg);
  const auto split = split_fewshot(f.ds, f.ds.registry().id("tgt"), 10, 1);
  std::vector<EnergyRecord> train, test;
  for (const auto& r : split.source_pool) (r.arch_id >= "a6500" ? test : train).push_back(r);
  REQUIRE(test.size() == 500);
  const auto est = pretrain_base(f.samples(train), f.ds.registry(), EstimatorConfig{});
  CHECK(estimator_rmse(est, f.samples(test)) < 0.05);
}

TEST_CASE("duplicated source devices match a single device under full-batch training") {
  auto cfg = testing::constant_offset_config(0.01);
  cfg.devices = {{"s1", 0.0, 1.0, 0.0}, {"s2", 0.0, 1.0, 0.0}};
  cfg.noise_sd = 0.0;
  Fixture f(100, cfg);
  auto ecfg = testing::quick_estimator_config();
  ecfg.pretrain = {0.05, 300, 1u << 20, 3, 0.0};
  const auto both = f.samples(f.ds.records());
  const auto one = f.samples(f.ds.records_for(f.ds.registry().id("s1")));
  const auto a = pretrain_base(both, f.ds.registry(), ecfg);
  const auto b = pretrain_base(one, f.ds.registry(), ecfg);
  for (const auto& e : f.ds.archs()) CHECK(std::abs(a.base_part(e.encoding) - b.base_part(e.encoding)) < 1e-3);
}

TEST_CASE("fit_residual freezes the prior and recovers a constant offset") {
  const auto cfg = testing::constant_offset_config();
  Fixture f(500, cfg);
  const auto target = f.ds.registry().id("npu");
  const auto split = split_fewshot(f.ds, target, 10, 4);
  const EstimatorConfig ecfg;
  const auto prior = pretrain_base(f.samples(split.source_pool), f.ds.registry(), ecfg);
  const auto fitted = fit_residual(prior, f.samples(split.target_train), ecfg);

  CHECK(fitted.base() == prior.base());
  CHECK(fitted.base().flat_parameters() == prior.base().flat_parameters());
  CHECK(fitted.base_frozen());
  CHECK(estimator_mae(fitted, f.samples(split.target_test)) < 0.05);

  // Every one of 100 held-out architectures lands within 0.05 of the truth.
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& rec = split.target_test[i];
    const auto& a = *f.ds.arch(rec.arch_id).arch;
    CHECK(std::abs(fitted.predict(a, target) - normalized_truth(f, cfg, a, target.index)) < 0.05);
  }
}

TEST_CASE("two samples are enough and zero are rejected") {
  Fixture f(80);
  const auto target = f.ds.registry().id("gpu");
  const auto split = split_fewshot(f.ds, target, 2, 9);
  const auto ecfg = testing::quick_estimator_config();
  const auto prior = pretrain_base(f.samples(split.source_pool), f.ds.registry(), ecfg);
  const auto fitted = fit_residual(prior, f.samples(split.target_train), ecfg);
  CHECK(std::isfinite(fitted.predict(default_initial_architecture(), target)));
  CHECK_THROWS_AS(fit_residual(prior, std::vector<LabeledSample>{}, ecfg), DataError);
  auto mixed = f.samples(split.target_train);
  mixed.push_back(f.samples({split.source_pool.front()}).front());
  CHECK_THROWS_AS(fit_residual(prior, mixed, ecfg), DataError);
  CHECK_THROWS_AS(pretrain_base(std::vector<LabeledSample>{}, f.ds.registry(), ecfg), DataError);
  const auto joint = pretrain_joint(f.samples(split.source_pool), f.ds.registry(), ecfg);
  CHECK_THROWS_AS(finetune_joint(joint, std::vector<LabeledSample>{}, ecfg), DataError);
  CHECK(std::isfinite(finetune_joint(joint, f.samples(split.target_train), ecfg).predict(
      default_initial_architecture(), target)));
}

TEST_CASE("estimate decomposes exactly") {
  Fixture f(80);
  const auto split = split_fewshot(f.ds, f.ds.registry().id("npu"), 6, 2);
  const auto ecfg = testing::quick_estimator_config();
  const auto fitted =
      fit_residual(pretrain_base(f.samples(split.source_pool), f.ds.registry(), ecfg), f.samples(split.target_train), ecfg);
  for (const auto& a : sample_uniform(3, 50)) {
    const auto enc = encode_architecture(a);
    double base = 0.0;
    for (std::size_t h = 0; h < 3; ++h) {
      const auto id = f.ds.registry().at(h);
      const auto est = fitted.estimate(a, id);
      CHECK(est.total == est.base + est.residual);
      CHECK(fitted.predict(a, id) == est.total);
      CHECK(fitted.residual_part(a, id) == est.residual);
      CHECK(fitted.base_part(a) == est.base);
      if (h == 0) base = est.base;
      CHECK(est.base == base);
      CHECK(fitted.predict(a, id) - fitted.residual_part(a, id) == base);
      const auto dense = fitted.estimate(enc, id);
      CHECK(dense.total == dense.base + dense.residual);
      CHECK(dense.base == doctest::Approx(est.base).epsilon(1e-12));
    }
  }
}

TEST_CASE("unknown devices are rejected") {
  Fixture f(40);
  const auto est = pretrain_base(f.samples(f.ds.records()), f.ds.registry(), testing::quick_estimator_config());
  CHECK_THROWS_AS(est.predict(default_initial_architecture(), DeviceId{"tpu", 7}), DataError);
  CHECK_THROWS_AS(est.predict(default_initial_architecture(), DeviceId{"gpu", 0}), DataError);
}

TEST_CASE("joint estimator is deterministic and fits abundant data") {
  Fixture f(300);
  const auto target = f.ds.registry().id("npu");
  const auto split = split_fewshot(f.ds, target, 240, 5);
  auto ecfg = testing::quick_estimator_config();
  ecfg.pretrain.epochs = 60;
  ecfg.finetune = {0.02, 100, 32, 6, 0.0};
  const auto a = pretrain_and_finetune_joint(f.samples(split.source_pool), f.samples(split.target_train),
                                             f.ds.registry(), ecfg);
  const auto b = pretrain_and_finetune_joint(f.samples(split.source_pool), f.samples(split.target_train),
                                             f.ds.registry(), ecfg);
  CHECK(a.network() == b.network());
  CHECK(estimator_rmse(a, f.samples(split.target_test)) < 0.1);
  const auto view = a.as_two_stage();
  for (const auto& arch : sample_uniform(4, 20)) {
    CHECK(view.predict(arch, target) == doctest::Approx(a.predict(arch, target)).epsilon(1e-12));
    CHECK(view.base_part(arch) == 0.0);
  }
}

TEST_CASE("bundle JSON round trip") {
  Fixture f(60);
  const auto target = f.ds.registry().id("gpu");
  const auto split = split_fewshot(f.ds, target, 5, 1);
  const auto ecfg = testing::quick_estimator_config();
  EstimatorBundle bundle;
  bundle.kind = "two_stage";
  bundle.two_stage =
      fit_residual(pretrain_base(f.samples(split.source_pool), f.ds.registry(), ecfg), f.samples(split.target_train), ecfg);
  for (const auto& [idx, s] : f.stats) bundle.normalization.emplace(s.device(), s);
  bundle.provenance = {{"target", "gpu"}};
  const auto back = bundle_from_json(nlohmann::json::parse(bundle_to_json(bundle).dump()));
  CHECK(back.kind == "two_stage");
  CHECK(back.two_stage->base() == bundle.two_stage->base());
  CHECK(back.two_stage->residual() == bundle.two_stage->residual());
  CHECK(back.two_stage->registry() == f.ds.registry());
  const auto a = default_initial_architecture();
  CHECK(back.predict_joules(a, target) == bundle.predict_joules(a, target));
  const auto& s = f.stats.at(target.index);
  CHECK(bundle.predict_joules(a, target) == doctest::Approx(s.denormalize(bundle.two_stage->predict(a, target))));

  EstimatorBundle joint;
  joint.kind = "joint";
  joint.joint = pretrain_joint(f.samples(split.source_pool), f.ds.registry(), ecfg);
  for (const auto& [idx, st] : f.stats) joint.normalization.emplace(st.device(), st);
  const auto jb = bundle_from_json(bundle_to_json(joint));
  CHECK(jb.joint->network() == joint.joint->network());
  CHECK(jb.energy_model().predict(a, target) == doctest::Approx(joint.joint->predict(a, target)).epsilon(1e-12));
  auto broken = bundle_to_json(bundle);
  broken.erase("residual");
  CHECK_THROWS_AS(bundle_from_json(broken), DataError);
}
