#include <filesystem>

#include "doctest.h"
#include "rpn/training.hpp"

using namespace rpn;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.pyramid = PyramidConfig::spatial_default();
  c.pyramid.channels = {4, 4, 4};
  c.pyramid.crcm_iterations = 1;
  c.pyramid.st_warmup_steps = 2;
  c.seed = 7;
  c.batch = 2;
  c.crop = 64;
  c.steps_stage1 = 4;
  c.steps_stage2 = 2;
  c.steps_stage3 = 2;
  c.synthetic_count = 6;
  c.synthetic_size = 64;
  c.test_split = 2;
  return c;
}

}  // namespace

TEST_CASE("synthetic corpus is reproducible and in range") {
  auto a = make_synthetic_corpus(4, 64, 99);
  auto b = make_synthetic_corpus(4, 64, 99);
  REQUIRE(a.size() == 4);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].data == b[i].data);
    CHECK(image_hash(a[i]) == image_hash(b[i]));
    for (Real v : a[i].data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  auto c = make_synthetic_corpus(4, 64, 100);
  CHECK(image_hash(a[0]) != image_hash(c[0]));
}

TEST_CASE("synthetic corpus entropy sanity") {
  auto imgs = make_synthetic_corpus(6, 64, 1234);
  for (const auto& img : imgs) {
    std::vector<int64_t> hist(256, 0);
    for (Real v : img.data) hist[quantize_8bit(v)]++;
    double h = 0;
    const double n = static_cast<double>(img.data.size());
    for (int64_t c : hist)
      if (c > 0) {
        const double p = c / n;
        h -= p * std::log2(p);
      }
    CHECK(h > 1.0);
  }
}

TEST_CASE("ingest_directory contracts") {
  namespace fs = std::filesystem;
  const std::string dir = "ingest_test_dir";
  fs::create_directories(dir);
  auto imgs = make_synthetic_corpus(3, 64, 5);
  write_image(dir + "/a.ppm", imgs[0]);
  write_image(dir + "/b.png", imgs[1]);
  Image small(32, 32);
  write_image(dir + "/small.ppm", small);

  std::vector<std::string> skipped;
  auto loaded = ingest_directory(dir, 64, &skipped);
  CHECK(loaded.size() == 2);
  REQUIRE(skipped.size() == 1);
  CHECK(skipped[0].find("small.ppm") != std::string::npos);

  // crop exactly equal to image size is the identity crop: usable
  auto exact = ingest_directory(dir, 64, nullptr);
  CHECK(exact.size() == 2);

  // crop larger than everything: configuration error listing the files
  try {
    ingest_directory(dir, 128, nullptr);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("a.ppm") != std::string::npos);
  }

  CHECK_THROWS_AS(ingest_directory("missing_dir_xyz", 64, nullptr),
                  ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("adam with zero learning rate leaves parameters bit-identical") {
  TrainConfig cfg = tiny_config();
  cfg.lr_stage1 = cfg.lr_stage2 = cfg.lr_stage3 = 0.0;
  Trainer t(cfg);
  std::vector<TensorR> before;
  for (const auto& p : t.model().params.items()) before.push_back(p->value);
  t.step(1);
  size_t i = 0;
  for (const auto& p : t.model().params.items()) {
    if (p->name.find(".bounds") == std::string::npos)
      CHECK((p->value.arr() == before[i].arr()).all());
    ++i;
  }
}

TEST_CASE("identical seeds give identical loss streams and parameters") {
  TrainConfig cfg = tiny_config();
  Trainer a(cfg), b(cfg);
  for (int s = 0; s < 3; ++s) {
    LossBreakdown la = a.step(1);
    LossBreakdown lb = b.step(1);
    CHECK(la.total == lb.total);
    CHECK(la.l_sca == lb.l_sca);
    CHECK(la.distortion == lb.distortion);
    CHECK(la.rate == lb.rate);
  }
  for (size_t i = 0; i < a.model().params.items().size(); ++i)
    CHECK((a.model().params.items()[i]->value.arr() ==
           b.model().params.items()[i]->value.arr())
              .all());
}

TEST_CASE("loss is additive and linear in lambda") {
  TrainConfig cfg = tiny_config();
  Trainer a(cfg);
  TrainConfig cfg2 = tiny_config();
  for (auto& l : cfg2.pyramid.lambdas) l *= 2;
  Trainer b(cfg2);
  LossBreakdown la = a.step(1);
  LossBreakdown lb = b.step(1);
  double da = 0, db = 0;
  for (double d : la.distortion) da += d;
  for (double d : lb.distortion) db += d;
  // identical seeds: same batch, same forward, so distortions agree and the
  // rate term doubles exactly
  CHECK(da == db);
  CHECK(lb.l_sca - db == doctest::Approx(2 * (la.l_sca - da)).epsilon(1e-12));

  // single-level config reduces to D0 + lambda0 R0
  TrainConfig one = tiny_config();
  one.pyramid.levels = 1;
  one.pyramid.channels = {4};
  one.pyramid.lambdas = {0.01};
  Trainer c(one);
  LossBreakdown lc = c.step(1);
  CHECK(lc.l_sca ==
        doctest::Approx(lc.distortion[0] + 0.01 * lc.rate[0]).epsilon(1e-12));
}

TEST_CASE("loss_rd vanishes for perfect reconstruction at zero rate") {
  PyramidConfig cfg = PyramidConfig::spatial_default();
  cfg.levels = 2;
  cfg.channels = {4, 4};
  cfg.lambdas = {0.01, 0.02};
  Rng rng(42);
  TrainForward fwd;
  for (int l = 0; l < 2; ++l) {
    TensorR x = TensorR::random_uniform({1, 3, 16 << l, 16 << l}, rng, 0, 1);
    fwd.refs.push_back(constant(x));
    fwd.x_hats.push_back(constant(x));  // perfect reconstruction
    fwd.rate_bits.push_back(constant_scalar(0));  // degenerate prior
    fwd.level_pixels.push_back(256.0 * (1 << (2 * l)));
  }
  RdLoss rd = loss_rd(fwd, cfg);
  CHECK(rd.total->value[0] == 0.0);
  CHECK(rd.breakdown.l_sca == 0.0);
  for (double d : rd.breakdown.distortion) CHECK(d == 0.0);
}

TEST_CASE("stage 2 trains heads, stage 3 freezes them bit-exactly") {
  TrainConfig cfg = tiny_config();
  Trainer t(cfg);
  for (int s = 0; s < 2; ++s) t.step(1);

  auto head_values = [&t]() {
    std::vector<TensorR> out;
    for (const auto& p : t.model().params.items())
      if (p->name.find(".uncertainty.") != std::string::npos)
        out.push_back(p->value);
    return out;
  };

  auto before2 = head_values();
  LossBreakdown l2 = t.step(2);
  CHECK(l2.l_u != 0.0);
  auto after2 = head_values();
  bool changed = false;
  for (size_t i = 0; i < before2.size(); ++i)
    if (!(before2[i].arr() == after2[i].arr()).all()) changed = true;
  CHECK(changed);

  auto before3 = head_values();
  LossBreakdown l3 = t.step(3);
  CHECK(l3.l_ug >= 0.0);
  auto after3 = head_values();
  for (size_t i = 0; i < before3.size(); ++i)
    CHECK((before3[i].arr() == after3[i].arr()).all());

  // non-head parameters did move in stage 3
  bool moved = false;
  for (const auto& p : t.model().params.items())
    if (p->name.find(".uncertainty.") == std::string::npos &&
        p->grad.arr().abs().maxCoeff() > 0)
      moved = true;
  CHECK(moved);
}

TEST_CASE("short stage-1 run decreases the loss on average") {
  TrainConfig cfg = tiny_config();
  cfg.steps_stage1 = 40;
  cfg.pyramid.st_warmup_steps = 10;
  Trainer t(cfg);
  double first = 0, last = 0;
  for (int s = 0; s < 40; ++s) {
    LossBreakdown lb = t.step(1);
    if (s < 8) first += lb.l_sca;
    if (s >= 32) last += lb.l_sca;
  }
  CHECK(last < first);
}

TEST_CASE("train config round trip") {
  TrainConfig cfg = tiny_config();
  cfg.out_dir = "some_dir";
  cfg.corpus_dir = "";
  auto kv = parse_key_values(train_config_to_text(cfg));
  TrainConfig back = train_config_from_kv(kv);
  CHECK(back.batch == cfg.batch);
  CHECK(back.crop == cfg.crop);
  CHECK(back.steps_stage1 == cfg.steps_stage1);
  CHECK(back.pyramid.levels == cfg.pyramid.levels);
  CHECK(back.pyramid.channels == cfg.pyramid.channels);
  CHECK(back.pyramid.lambdas == cfg.pyramid.lambdas);
  CHECK(back.seed == cfg.seed);
  CHECK(back.out_dir == cfg.out_dir);
}

TEST_CASE("config validation rejects bad setups") {
  TrainConfig cfg = tiny_config();
  cfg.crop = 40;  // not a multiple of 16
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.lr_stage3 = 1.0;  // above stage-1 rate
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.steps_stage2 = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
