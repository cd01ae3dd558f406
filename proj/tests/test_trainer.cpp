#include <doctest.h>

#include <cmath>

#include "otda/data.hpp"
#include "otda/io.hpp"
#include "otda/trainer.hpp"
#include "reference_steps.hpp"

using namespace otda;

namespace {

std::pair<LabeledDataset, LabeledDataset> small_blobs(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.generator = ScenarioConfig::Generator::blobs;
  cfg.source_counts = {12, 12, 12};
  cfg.target_counts = {18, 12, 6};
  cfg.sigma = 0.6;
  cfg.target_rotation_deg = 25.0;
  cfg.seed = seed;
  return gen_blobs_pair(cfg);
}

bool same_params(const MlpParams& a, const MlpParams& b) {
  MlpParams x = a, y = b;
  auto xv = tensor_views(x), yv = tensor_views(y);
  if (xv.size() != yv.size()) return false;
  for (std::size_t t = 0; t < xv.size(); ++t)
    if (*xv[t] != *yv[t]) return false;
  return true;
}

Batch batch_from(const LabeledDataset& ds, const std::vector<int>& idx, bool with_one_hot) {
  Batch b;
  b.inputs = ds.points.select_rows(idx);
  if (with_one_hot) b.one_hot = ds.as_measure().one_hot.select_rows(idx);
  for (int i : idx) b.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
  return b;
}

}  // namespace

TEST_CASE("fit with zero epochs returns the initial parameters") {
  auto [src, tgt] = small_blobs(1);
  TrainConfig cfg;
  cfg.method = Method::deepjdot;
  cfg.epochs = 0;
  cfg.pretrain_epochs = 0;
  cfg.batch_size = 6;
  cfg.seed = 3;
  const auto res = fit(cfg, src, tgt);
  const MlpParams init = make_mlp(2, cfg.hidden, cfg.embed_dim, 3, cfg.seed);
  CHECK(same_params(res.params, init));
  CHECK(res.history.steps.empty());
}

TEST_CASE("fit is deterministic given the seed") {
  auto [src, tgt] = small_blobs(2);
  TrainConfig cfg;
  cfg.method = Method::mixunbot;
  cfg.epochs = 2;
  cfg.pretrain_epochs = 1;
  cfg.batch_size = 6;
  cfg.seed = 7;
  const auto a = fit(cfg, src, tgt);
  const auto b = fit(cfg, src, tgt);
  CHECK(same_params(a.params, b.params));
  REQUIRE(a.history.steps.size() == b.history.steps.size());
  for (std::size_t i = 0; i < a.history.steps.size(); ++i) {
    CHECK(a.history.steps[i].loss == b.history.steps[i].loss);
    CHECK(a.history.steps[i].plan_mass == b.history.steps[i].plan_mass);
  }
  CHECK(serialize_checkpoint(a.params) == serialize_checkpoint(b.params));
}

TEST_CASE("source_only matches a dedicated supervised loop bit for bit") {
  auto [src, tgt] = small_blobs(3);
  TrainConfig cfg;
  cfg.method = Method::source_only;
  cfg.epochs = 2;
  cfg.pretrain_epochs = 0;
  cfg.batch_size = 6;
  cfg.seed = 11;
  const auto res = fit(cfg, src, tgt);

  // reference: plain supervised training over the same stratified stream
  MlpParams p = make_mlp(2, cfg.hidden, cfg.embed_dim, 3, cfg.seed);
  OptimizerState st;
  st.method = OptMethod::adam;
  st.learning_rate = cfg.learning_rate;
  Rng rng_src = make_rng(cfg.seed, 101);
  const Matrix one_hot = src.as_measure().one_hot;
  for (int e = 0; e < 2; ++e) {
    for (const auto& idx : stratified_batches(src, cfg.batch_size, rng_src)) {
      CompositeInputs ci;
      ci.src_raw_inputs = src.points.select_rows(idx);
      ci.src_raw_labels = one_hot.select_rows(idx);
      ci.eta3 = 0.0;
      const auto out = composite_loss_and_grads(p, ci);
      optimizer_step(p, out.grads, st);
    }
  }
  CHECK(same_params(res.params, p));
}

TEST_CASE("switch combinations reproduce the dedicated method steps") {
  auto [src, tgt] = small_blobs(4);
  const std::vector<int> sidx{0, 12, 24, 1, 13, 25};
  const std::vector<int> tidx{0, 5, 11, 17, 23, 29};
  const Batch sb = batch_from(src, sidx, true);
  const Batch tb = batch_from(tgt, tidx, false);

  auto run_switched = [&](Method m) {
    TrainConfig cfg;
    cfg.method = m;
    cfg.resolve_method();
    cfg.batch_size = 6;
    cfg.solver_cfg.epsilon = 0.05;
    cfg.solver_cfg.tau = 1.0;
    MlpParams p = make_mlp(2, cfg.hidden, cfg.embed_dim, 3, 21);
    OptimizerState st;
    st.learning_rate = cfg.learning_rate;
    Rng rng = make_rng(55);
    training_step(p, sb, tb, cfg, st, rng);
    return p;
  };
  auto run_reference = [&](int which) {
    reference::StepEnv env;
    env.solver_cfg.epsilon = 0.05;
    env.solver_cfg.tau = 1.0;
    env.opt.learning_rate = 2e-4;
    MlpParams p = make_mlp(2, {32, 32}, 16, 3, 21);
    Rng rng = make_rng(55);
    switch (which) {
      case 0: reference::deepjdot_step(p, sb.inputs, sb.one_hot, tb.inputs, env); break;
      case 1: reference::jumbot_step(p, sb.inputs, sb.one_hot, tb.inputs, env); break;
      case 2: reference::mixot_step(p, sb.inputs, sb.one_hot, tb.inputs, env, rng); break;
      default: reference::mixunbot_step(p, sb.inputs, sb.one_hot, tb.inputs, env, rng); break;
    }
    return p;
  };

  CHECK(same_params(run_switched(Method::deepjdot), run_reference(0)));
  CHECK(same_params(run_switched(Method::jumbot), run_reference(1)));
  CHECK(same_params(run_switched(Method::mixot), run_reference(2)));
  CHECK(same_params(run_switched(Method::mixunbot), run_reference(3)));
}

TEST_CASE("target labels never influence parameters") {
  auto [src, tgt] = small_blobs(5);
  TrainConfig cfg;
  cfg.method = Method::mixunbot;
  cfg.epochs = 2;
  cfg.pretrain_epochs = 0;
  cfg.batch_size = 6;
  cfg.seed = 13;
  const auto base = fit(cfg, src, tgt);

  LabeledDataset scrambled = tgt;
  for (auto& l : scrambled.labels) l = (l + 1) % scrambled.class_count;
  const auto perm = fit(cfg, src, scrambled);
  CHECK(same_params(base.params, perm.params));

  // diagnostics do change: cross-class fractions differ somewhere
  bool diag_differs = false;
  for (std::size_t i = 0; i < base.history.steps.size(); ++i)
    if (base.history.steps[i].cross_class_fraction != perm.history.steps[i].cross_class_fraction)
      diag_differs = true;
  CHECK(diag_differs);
}

TEST_CASE("per-sample lambda mixing keeps labels on the simplex") {
  auto [src, tgt] = small_blobs(9);
  TrainConfig cfg;
  cfg.method = Method::mixot;
  cfg.resolve_method();
  cfg.batch_size = 6;
  cfg.mixup.per_batch_lambda = false;
  MlpParams p = make_mlp(2, cfg.hidden, cfg.embed_dim, 3, 41);
  OptimizerState st;
  Rng rng = make_rng(43);
  const Batch sb = batch_from(src, {0, 12, 24, 2, 14, 26}, true);
  const Batch tb = batch_from(tgt, {1, 6, 12, 18, 24, 30}, false);
  const auto rec = training_step(p, sb, tb, cfg, st, rng);
  CHECK(std::isfinite(rec.loss));
  CHECK(rec.plan_mass > 0.0);
}

TEST_CASE("mixunbot step on shifted blobs records partial mass at small tau") {
  ScenarioConfig sc;
  sc.generator = ScenarioConfig::Generator::blobs;
  sc.source_counts = {8, 8, 8};
  sc.target_counts = {12, 12, 0};  // class 2 missing: source outliers
  sc.sigma = 0.4;
  sc.seed = 6;
  auto [src, tgt] = gen_blobs_pair(sc);

  TrainConfig cfg;
  cfg.method = Method::mixunbot;
  cfg.resolve_method();
  cfg.batch_size = 6;
  cfg.solver_cfg.tau = 0.1;
  cfg.solver_cfg.epsilon = 0.05;
  MlpParams p = make_mlp(2, cfg.hidden, cfg.embed_dim, 3, 31);
  OptimizerState st;
  Rng rng = make_rng(77);
  const Batch sb = batch_from(src, {0, 8, 16, 1, 9, 17}, true);
  const Batch tb = batch_from(tgt, {0, 4, 8, 12, 16, 20}, false);
  const auto rec = training_step(p, sb, tb, cfg, st, rng);
  CHECK(rec.plan_mass < 1.0);
  CHECK(rec.plan_mass > 0.0);
}

TEST_CASE("evaluate basics") {
  auto [src, tgt] = small_blobs(7);

  SUBCASE("well-trained source model is nearly perfect on source") {
    TrainConfig cfg;
    cfg.method = Method::source_only;
    cfg.epochs = 30;
    cfg.pretrain_epochs = 0;
    cfg.batch_size = 12;
    cfg.learning_rate = 5e-3;
    cfg.seed = 17;
    const auto res = fit(cfg, src, tgt);
    const auto ev = evaluate(res.params, src);
    CHECK(ev.accuracy > 0.95);
    for (double pc : ev.per_class) CHECK(pc >= 0.0);
  }

  SUBCASE("seeded regression value") {
    TrainConfig cfg;
    cfg.method = Method::deepjdot;
    cfg.epochs = 3;
    cfg.pretrain_epochs = 1;
    cfg.batch_size = 6;
    cfg.seed = 19;
    const auto res = fit(cfg, src, tgt);
    const auto ev = evaluate(res.params, tgt);
    // recorded from the first verified run; guards silent behavior drift
    CHECK(ev.accuracy == doctest::Approx(5.0 / 36.0).epsilon(1e-12));
  }
}
