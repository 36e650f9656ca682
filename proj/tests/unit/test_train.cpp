#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "tempnet/metrics.hpp"
#include "tempnet/synthetic.hpp"
#include "tempnet/train.hpp"

using namespace tempnet;
namespace fs = std::filesystem;

namespace {

TempNetConfig tiny_net() {
  TempNetConfig cfg;
  cfg.input_shape = {4, 8, 8, 1};
  cfg.channels = 2;
  cfg.spatial_blocks = 2;
  cfg.temporal_blocks = 1;
  return cfg;
}

// Positives carry one bright frame, negatives are faint noise.
std::vector<LabeledClip> toy_clips(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledClip> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto x = oracle::random_tensor<float>(Shape{4, 8, 8, 1}, rng, -0.1, 0.1);
    const int label = static_cast<int>(i % 2);
    if (label) {
      const std::size_t t = rng() % 4;
      for (std::size_t k = 0; k < 64; ++k) x[t * 64 + k] += 1.0f;
    }
    out.push_back(LabeledClip{"clip" + std::to_string(i), std::move(x), label});
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tempnet_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Independent restatement of the four ratio formulas.
struct Sheet {
  double acc, prec, rec, f1;
};
Sheet sheet(double tp, double tn, double fp, double fn) {
  const double prec = tp / (tp + fp), rec = tp / (tp + fn);
  return {(tp + tn) / (tp + tn + fp + fn), prec, rec, 2 * tp / (2 * tp + fp + fn)};
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("bold-row counts: 100 clips, 50 positive, fn 11, fp 9") {
    const std::size_t tp = 50 - 11, tn = 50 - 9;
    const Metrics m = metric_math(tp, tn, 9, 11);
    CHECK(m.n == 100);
    CHECK(*m.accuracy == doctest::Approx(0.80).epsilon(0.005));
    CHECK(*m.precision == doctest::Approx(0.8125));
    CHECK(*m.recall == doctest::Approx(0.78));
    CHECK(*m.f1 == doctest::Approx(0.7959).epsilon(1e-4));
    CHECK(std::abs(*m.precision - 0.81) <= 0.005);
    CHECK(std::abs(*m.f1 - 0.80) <= 0.005);
  }

  TEST_CASE("all-negative perfect run leaves precision absent") {
    const Metrics m = metric_math(0, 17, 0, 0);
    CHECK(*m.accuracy == 1.0);
    CHECK_FALSE(m.precision.has_value());
    CHECK_FALSE(m.recall.has_value());
    CHECK_FALSE(m.f1.has_value());
  }

  TEST_CASE("random counts against a second implementation") {
    std::mt19937_64 rng(50);
    for (int rep = 0; rep < 500; ++rep) {
      const std::size_t tp = 1 + rng() % 60, tn = rng() % 60, fp = rng() % 60, fn = rng() % 60;
      const Metrics m = metric_math(tp, tn, fp, fn);
      const Sheet s = sheet(double(tp), double(tn), double(fp), double(fn));
      CHECK(m.n == tp + tn + fp + fn);
      CHECK(*m.accuracy == doctest::Approx(s.acc).epsilon(1e-12));
      CHECK(*m.precision == doctest::Approx(s.prec).epsilon(1e-12));
      CHECK(*m.recall == doctest::Approx(s.rec).epsilon(1e-12));
      CHECK(*m.f1 == doctest::Approx(s.f1).epsilon(1e-12));
    }
  }

  TEST_CASE("perfect predictor") {
    const auto r = make_report({{"a", 1, 1.0}, {"b", 0, 0.0}, {"c", 1, 1.0}});
    CHECK(*r.metrics.accuracy == 1.0);
    CHECK(*r.metrics.f1 == 1.0);
    CHECK(r.bce < 1e-5);
  }

  TEST_CASE("constant 0.5 predictor calls everything positive") {
    std::vector<ClipRecord> rec;
    for (int i = 0; i < 10; ++i) rec.push_back({std::to_string(i), i < 3 ? 1 : 0, 0.5});
    const auto r = make_report(rec);
    CHECK(r.bce == doctest::Approx(std::log(2.0)));
    CHECK(*r.metrics.accuracy == doctest::Approx(0.3));
    CHECK(r.metrics.fn == 0);
  }

  TEST_CASE("empty record list is an error") { CHECK_THROWS_AS(make_report({}), ValueError); }
}

TEST_SUITE("reports") {
  TEST_CASE("report file round trip carries all six columns") {
    const auto r = make_report({{"x/clip_1.tclp", 1, 0.75}, {"clip_2.tclp", 0, 0.125}, {"clip_3.tclp", 1, 0.25}});
    const std::string text = format_report(r);
    for (const char* key : {"accuracy=", "precision=", "bce=", "fn=", "fp=", "f1="}) {
      CHECK(text.find(std::string("\n") + key) != std::string::npos);
    }
    const auto back = parse_report(text);
    CHECK(format_report(back) == text);
    CHECK(back.records.size() == 3);
    CHECK(back.records[0].probability == 0.75);
  }

  TEST_CASE("absent metrics print as nan") {
    const auto text = format_report(make_report({{"a", 0, 0.1}}));
    CHECK(text.find("precision=nan") != std::string::npos);
  }

  TEST_CASE("single run is best everywhere") {
    const auto ranked = compare_runs({{"only", make_report({{"a", 1, 0.9}, {"b", 0, 0.6}})}});
    REQUIRE(ranked.size() == 1);
    for (bool b : ranked[0].best) CHECK(b);
  }

  TEST_CASE("per-column winners and ties") {
    EvalReport a, b;
    a.metrics = metric_math(40, 40, 10, 10);
    a.bce = 0.4;
    b.metrics = metric_math(45, 35, 15, 5);
    b.bce = 0.5;
    const auto ranked = compare_runs({{"a", a}, {"b", b}});
    REQUIRE(ranked.size() == 2);
    const auto& ra = ranked[0].name == "a" ? ranked[0] : ranked[1];
    const auto& rb = ranked[0].name == "a" ? ranked[1] : ranked[0];
    CHECK(ranked[0].name == "a");  // equal accuracy, lower BCE first
    CHECK(ra.best[static_cast<int>(Column::Accuracy)]);
    CHECK(rb.best[static_cast<int>(Column::Accuracy)]);
    CHECK(ra.best[static_cast<int>(Column::Precision)]);
    CHECK_FALSE(rb.best[static_cast<int>(Column::Precision)]);
    CHECK(ra.best[static_cast<int>(Column::Bce)]);
    CHECK(rb.best[static_cast<int>(Column::FalseNeg)]);
    CHECK(ra.best[static_cast<int>(Column::FalsePos)]);
    CHECK(rb.best[static_cast<int>(Column::F1)]);
    const std::string table = format_comparison(ranked);
    CHECK(table.find("*0.80") != std::string::npos);
  }
}

TEST_SUITE("optimizer") {
  TEST_CASE("small steps descend a quadratic") {
    std::mt19937_64 rng(51);
    for (int rep = 0; rep < 40; ++rep) {
      const auto target = oracle::random_tensor<float>(Shape{7}, rng);
      ParamStore<float> params;
      params.add("w", oracle::random_tensor<float>(Shape{7}, rng));
      auto loss = [&] {
        double s = 0;
        for (std::size_t i = 0; i < 7; ++i) s += std::pow(params.at(0)[i] - target[i], 2);
        return s;
      };
      auto grad = [&] {
        ParamStore<float> g;
        Tensor<float> t(Shape{7});
        for (std::size_t i = 0; i < 7; ++i) t[i] = 2 * (params.at(0)[i] - target[i]);
        g.add("w", t);
        return g;
      };
      std::unique_ptr<Optimizer> opt;
      if (rep % 2) {
        opt = std::make_unique<Adam>(1e-3, 0.9, 0.999, 1e-8);
      } else {
        opt = std::make_unique<SgdMomentum>(1e-3, 0.9);
      }
      const double before = loss();
      opt->step(params, grad());
      CHECK(loss() < before);
    }
  }

  TEST_CASE("first Adam step moves each weight by about lr") {
    ParamStore<float> p, g;
    p.add("w", Tensor<float>(Shape{2}, std::vector<float>{1.0f, -1.0f}));
    g.add("w", Tensor<float>(Shape{2}, std::vector<float>{0.3f, -5.0f}));
    Adam(0.01, 0.9, 0.999, 1e-8).step(p, g);
    CHECK(p.at(0)[0] == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(p.at(0)[1] == doctest::Approx(-0.99).epsilon(1e-6));
  }

  TEST_CASE("gradients are matched by name, not position") {
    ParamStore<float> p, g;
    p.add("a", Tensor<float>(Shape{1}, 1.0f));
    p.add("b", Tensor<float>(Shape{3}, 1.0f));
    g.add("b", Tensor<float>(Shape{3}, 1.0f));
    g.add("a", Tensor<float>(Shape{1}, -1.0f));
    SgdMomentum(0.5, 0.0).step(p, g);
    CHECK(p.get("a")[0] == 1.5f);
    CHECK(p.get("b")[2] == 0.5f);
    ParamStore<float> bad;
    bad.add("a", Tensor<float>(Shape{2}));
    bad.add("b", Tensor<float>(Shape{3}));
    CHECK_THROWS_AS(SgdMomentum(0.5, 0.0).step(p, bad), ShapeError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("lr 0 for one epoch leaves the initialization bit-identical") {
    const auto clips = toy_clips(6, 52);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    const auto init = TempNet<float>::build(tiny_net(), 3);
    const auto result = train(init, clips, clips, cfg);
    CHECK(result.net.params() == init.params());
    CHECK(result.history.size() == 1);
  }

  TEST_CASE("a single clip is memorized") {
    const auto clips = toy_clips(2, 53);
    const std::vector<LabeledClip> one{clips[1]};
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.epochs = 200;
    cfg.batch_size = 1;
    cfg.patience = 1000;
    auto net = tiny_net();
    net.channels = 16;
    const auto result = train(TempNet<float>::build(net, 4), one, one, cfg);
    CHECK(result.history.back().train_bce < 0.01);
    CHECK(result.history[result.best_epoch - 1].val_bce < 0.01);
  }

  TEST_CASE("deterministic runs agree bit for bit") {
    const auto clips = toy_clips(12, 54);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.learning_rate = 5e-3;
    const auto a = train(TempNet<float>::build(tiny_net(), 5), clips, clips, cfg);
    const auto b = train(TempNet<float>::build(tiny_net(), 5), clips, clips, cfg);
    CHECK(a.history == b.history);
    CHECK(a.net.params() == b.net.params());
    CHECK(format_history(a.history) == format_history(b.history));
  }

  TEST_CASE("batch gradients do not depend on the worker count") {
    const auto clips = toy_clips(5, 55);
    std::vector<const LabeledClip*> batch;
    for (const auto& c : clips) batch.push_back(&c);
    const auto net = TempNet<float>::build(tiny_net(), 6);
    double l1 = 0, l3 = 0;
    const auto g1 = batch_gradients(net, batch, 1, &l1);
    const auto g3 = batch_gradients(net, batch, 3, &l3);
    CHECK(g1 == g3);
    CHECK(l1 == l3);
    CHECK(g1.names() == net.params().names());
  }

  TEST_CASE("evaluate is invariant to clip order") {
    auto clips = toy_clips(9, 56);
    const auto net = TempNet<float>::build(tiny_net(), 7);
    const auto a = evaluate(net, clips);
    std::mt19937_64 rng(57);
    std::shuffle(clips.begin(), clips.end(), rng);
    const auto b = evaluate(net, clips, 0.5, 2);
    CHECK(a.metrics.tp == b.metrics.tp);
    CHECK(a.metrics.fp == b.metrics.fp);
    CHECK(a.metrics.fn == b.metrics.fn);
    CHECK(a.bce == doctest::Approx(b.bce).epsilon(1e-12));
  }

  TEST_CASE("empty splits and shape mismatches are errors") {
    const auto clips = toy_clips(4, 58);
    const auto net = TempNet<float>::build(tiny_net(), 8);
    CHECK_THROWS_AS(train(net, {}, clips, TrainConfig{}), ValueError);
    CHECK_THROWS_AS(train(net, clips, {}, TrainConfig{}), ValueError);
    auto wrong = clips;
    wrong[2].input = Tensor<float>(Shape{4, 8, 7, 1});
    CHECK_THROWS_AS(train(net, wrong, clips, TrainConfig{}), ShapeError);
    CHECK_THROWS_AS(evaluate(net, {}), ValueError);
  }

  TEST_CASE("history text round trip") {
    const std::vector<EpochRecord> h{{1, 0.7, 0.69, 0.5}, {2, 0.123456789012, 0.1, 1.0}};
    CHECK(parse_history(format_history(h)) == h);
    CHECK_THROWS_AS(parse_history("1\t0.5\n"), FormatError);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save, load and evaluate give the same report") {
    const auto dir = scratch("checkpoint");
    RunConfig cfg = parse_config("frames=4\nheight=8\nwidth=8\nchannels=2\nspatial_blocks=2\ntemporal_blocks=1\n");
    const auto net = TempNet<float>::build(cfg.net, 9);
    const auto clips = toy_clips(6, 59);
    save_model(dir / "m.tnwt", net, cfg);
    const auto loaded = load_model(dir / "m.tnwt");
    CHECK(loaded.net.params().metadata().at("config") == format_config(cfg));
    REQUIRE(loaded.net.params().size() == net.params().size());
    for (std::size_t i = 0; i < net.params().size(); ++i) {
      CHECK(loaded.net.params().name(i) == net.params().name(i));
      CHECK(loaded.net.params().at(i) == net.params().at(i));
    }
    CHECK(loaded.cfg.net == cfg.net);
    CHECK(format_report(evaluate(loaded.net, clips)) == format_report(evaluate(net, clips)));
    fs::remove_all(dir);
  }

  TEST_CASE("missing files and missing config metadata") {
    const auto dir = scratch("checkpoint_bad");
    CHECK_THROWS_AS(load_model(dir / "absent.tnwt"), IoError);
    save_params(TempNet<float>::build(tiny_net(), 1).params(), dir / "bare.tnwt");
    CHECK_THROWS_AS(load_model(dir / "bare.tnwt"), FormatError);
    fs::remove_all(dir);
  }

  TEST_CASE("load_split preprocesses and checks shapes") {
    const auto dir = scratch("split");
    SceneConfig scene;
    scene.height = 32;
    scene.width = 40;
    generate_dataset(dir, 10, 0.5, 3, scene);
    RunConfig cfg = parse_config("height=16\nwidth=20\n");
    const auto train_set = load_split(dir, Split::Train, cfg);
    CHECK_FALSE(train_set.empty());
    for (const auto& c : train_set) CHECK(c.input.shape() == Shape{20, 16, 20, 1});
    cfg.net.input_shape[1] = 18;
    CHECK_THROWS_AS(load_split(dir, Split::Val, cfg), ShapeError);
    CHECK_THROWS_AS(load_split(dir / "nowhere", Split::Val, cfg), IoError);
    fs::remove_all(dir);
  }
}
