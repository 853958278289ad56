#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "rf/fusion.hpp"
#include "rf/dataset_io.hpp"
#include "rf/net.hpp"
#include "rf/rules.hpp"
#include "rf/scenario_gen.hpp"

using namespace rf;
using namespace rf::net;

namespace {

NetConfig tiny_config() {
  NetConfig c;
  c.d = 8;
  c.n_heads = 2;
  c.n_hist_blocks = 1;
  c.n_joint_blocks = 1;
  c.d_flow = 2;
  c.n_flow_layers = 2;
  c.n_budget = 100.0;
  c.K = 5;
  return c;
}

std::vector<Scene> sample_scenes(int n, std::uint64_t seed, double density = 2.0) {
  gen::GenConfig cfg;
  cfg.n_scenes = n;
  cfg.mean_agent_density = density;
  cfg.seed = seed;
  return gen::generate_scenes(cfg).scenes;
}

double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

ad::Matrix random_matrix(int r, int c, std::mt19937_64& rng) {
  ad::Matrix m(r, c);
  for (double& v : m.data) v = 2.0 * u01(rng) - 1.0;
  return m;
}

/// Naive scaled dot-product multi-head attention, no tape.
ad::Matrix naive_attention(const ad::Matrix& q_in, const ad::Matrix& kv,
                           const ad::Matrix& wq, const ad::Matrix& wk,
                           const ad::Matrix& wv, const ad::Matrix& wo, int n_heads) {
  const int d = wq.cols;
  const int dh = d / n_heads;
  auto mm = [](const ad::Matrix& a, const ad::Matrix& b) {
    ad::Matrix o(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
      for (int j = 0; j < b.cols; ++j) {
        double s = 0.0;
        for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
        o.at(i, j) = s;
      }
    }
    return o;
  };
  const ad::Matrix q = mm(q_in, wq), k = mm(kv, wk), v = mm(kv, wv);
  ad::Matrix concat(q.rows, d);
  for (int h = 0; h < n_heads; ++h) {
    for (int i = 0; i < q.rows; ++i) {
      std::vector<double> scores(static_cast<std::size_t>(k.rows));
      double mx = -1e300;
      for (int j = 0; j < k.rows; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q.at(i, h * dh + c) * k.at(j, h * dh + c);
        scores[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, scores[static_cast<std::size_t>(j)]);
      }
      double z = 0.0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (int c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (int j = 0; j < k.rows; ++j) {
          acc += scores[static_cast<std::size_t>(j)] / z * v.at(j, h * dh + c);
        }
        concat.at(i, h * dh + c) = acc;
      }
    }
  }
  return mm(concat, wo);
}

}  // namespace

TEST_CASE("flow at initialization is an exact standard normal") {
  const NetParams params = init_params(tiny_config(), 1);
  const double at_mode = flow_log_density(params, {0.0, 0.0});
  CHECK(at_mode == doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-9));
  // Spot values against the closed-form density.
  for (const auto& z : {std::vector<double>{1.0, -0.5}, {2.0, 2.0}, {-3.0, 0.1}}) {
    const double want = -std::log(2.0 * M_PI) - 0.5 * (z[0] * z[0] + z[1] * z[1]);
    CHECK(flow_log_density(params, z) == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("flow density integrates to one on a 2D grid") {
  const NetParams params = init_params(tiny_config(), 2);
  const double step = 0.1;
  double mass = 0.0;
  for (double x = -8.0 + step / 2; x < 8.0; x += step) {
    for (double y = -8.0 + step / 2; y < 8.0; y += step) {
      mass += std::exp(flow_log_density(params, {x, y})) * step * step;
    }
  }
  CHECK(mass > 0.98);
  CHECK(mass < 1.02);
}

TEST_CASE("flow density stays finite for extreme latents") {
  const NetParams params = init_params(tiny_config(), 3);
  const double logp = flow_log_density(params, {1e3, -1e3});
  CHECK(std::isfinite(logp));
  CHECK(logp < -1e5);
}

TEST_CASE("run_attention matches a naive multi-head implementation") {
  std::mt19937_64 rng(4);
  const int d = 8, n_heads = 2;
  const ad::Matrix q = random_matrix(5, d, rng);
  const ad::Matrix kv = random_matrix(7, d, rng);
  const ad::Matrix wq = random_matrix(d, d, rng), wk = random_matrix(d, d, rng),
                   wv = random_matrix(d, d, rng), wo = random_matrix(d, d, rng);
  const ad::Matrix got = run_attention(q, kv, wq, wk, wv, wo, n_heads);
  const ad::Matrix want = naive_attention(q, kv, wq, wk, wv, wo, n_heads);
  REQUIRE(got.rows == want.rows);
  REQUIRE(got.cols == want.cols);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("inference is invariant to traffic-agent ordering") {
  Scene scene = sample_scenes(1, 21, 4.0)[0];
  if (scene.agent_histories.size() < 2) scene = sample_scenes(1, 22, 6.0)[0];
  REQUIRE(scene.agent_histories.size() >= 2);
  const NetParams params = init_params(tiny_config(), 5);
  const auto set = anchors::generate_anchors(scene, params.config.K, {});
  const NetOutput a = infer(scene, set, params);
  Scene permuted = scene;
  std::rotate(permuted.agent_histories.begin(), permuted.agent_histories.begin() + 1,
              permuted.agent_histories.end());
  if (!permuted.agent_futures.empty()) {
    std::rotate(permuted.agent_futures.begin(), permuted.agent_futures.begin() + 1,
                permuted.agent_futures.end());
  }
  const NetOutput b = infer(permuted, set, params);
  REQUIRE(a.evidence.size() == b.evidence.size());
  for (std::size_t k = 0; k < a.evidence.size(); ++k) {
    CHECK(a.evidence[k] == doctest::Approx(b.evidence[k]).epsilon(1e-9));
  }
  for (std::size_t k = 0; k < a.error_traces.size(); ++k) {
    for (std::size_t i = 0; i < a.error_traces[k].size(); ++i) {
      CHECK(a.error_traces[k].data[i] ==
            doctest::Approx(b.error_traces[k].data[i]).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("candidates are processed independently") {
  const Scene scene = sample_scenes(1, 31)[0];
  const NetParams params = init_params(tiny_config(), 6);
  auto set = anchors::generate_anchors(scene, params.config.K, {});
  const NetOutput a = infer(scene, set, params);
  // Perturb candidate 1 only; every other candidate's outputs are
  // bit-identical because no computation crosses candidates.
  for (auto& st : set.anchors[1].states) st.position.x += 0.7;
  const NetOutput b = infer(scene, set, params);
  for (std::size_t k = 0; k < a.evidence.size(); ++k) {
    if (k == 1) continue;
    CHECK(a.evidence[k] == b.evidence[k]);
    CHECK(a.error_traces[k].data == b.error_traces[k].data);
  }
  CHECK(a.evidence[1] != b.evidence[1]);
}

TEST_CASE("encode followed by decode reproduces infer") {
  const Scene scene = sample_scenes(1, 41)[0];
  const NetParams params = init_params(tiny_config(), 7);
  const auto set = anchors::generate_anchors(scene, params.config.K, {});
  const NetOutput direct = infer(scene, set, params);
  const NetOutput staged = decode(encode(scene, set, params), params);
  REQUIRE(direct.evidence.size() == staged.evidence.size());
  for (std::size_t k = 0; k < direct.evidence.size(); ++k) {
    CHECK(direct.evidence[k] == doctest::Approx(staged.evidence[k]).epsilon(1e-12));
    for (std::size_t i = 0; i < direct.error_traces[k].size(); ++i) {
      CHECK(direct.error_traces[k].data[i] ==
            doctest::Approx(staged.error_traces[k].data[i]).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("checkpoint round trip preserves parameters and config") {
  NetConfig cfg = tiny_config();
  cfg.n_budget = 123.0;
  const NetParams params = init_params(cfg, 99);
  const std::string path = "/tmp/rf_test_ckpt.json";
  save_checkpoint(params, path);
  const NetParams back = load_checkpoint(path);
  CHECK(back.config.d == cfg.d);
  CHECK(back.config.d_flow == cfg.d_flow);
  CHECK(back.config.K == cfg.K);
  CHECK(back.config.n_budget == doctest::Approx(123.0));
  CHECK(back.init_seed == 99);
  const auto a = params.store.flatten();
  const auto b = back.store.flatten();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("/tmp/rf_missing_ckpt.json"), IoError);
}

TEST_CASE("loss_uce matches hand-computed binary cross entropy") {
  NetOutput out;
  out.evidence = {1.0, 1.0};  // q = (0.5, 0.5), Dir(1,1) entropy is zero
  CHECK(loss_uce(out, 0, 0.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(loss_uce(out, 0, 1.0) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
  out.evidence = {1e6, 1.0};  // concentrated on the target: BCE near zero
  CHECK(loss_uce(out, 0, 0.0) < 1e-4);
  // Concentrated on the wrong candidate: large loss.
  CHECK(loss_uce(out, 1, 0.0) > 10.0);
}

TEST_CASE("loss_mse with zero refinement equals anchor-to-truth error") {
  const Scene scene = sample_scenes(1, 51)[0];
  const NetConfig cfg = tiny_config();
  const auto set = anchors::generate_anchors(scene, cfg.K, {});
  const Trajectory gt = ground_truth_trajectory(scene);
  NetOutput out;
  for (int k = 0; k < cfg.K; ++k) out.error_traces.push_back(ad::Matrix(cfg.F, 2));
  const int k_star = closest_anchor(set, gt);
  double want = 0.0;
  for (std::size_t t = 0; t < gt.states.size(); ++t) {
    want += (set.anchors[static_cast<std::size_t>(k_star)].states[t].position -
             gt.states[t].position)
                .norm2();
  }
  CHECK(loss_mse(out, set, gt) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches finite differences") {
  const std::vector<Scene> scenes = sample_scenes(2, 61);
  NetParams params = init_params(tiny_config(), 8);
  std::vector<double> grad;
  const double base = total_loss_grad(params, scenes, {}, grad);
  CHECK(std::isfinite(base));
  std::vector<double> flat = params.store.flatten();
  REQUIRE(grad.size() == flat.size());
  std::mt19937_64 rng(9);
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t j =
        static_cast<std::size_t>(u01(rng) * static_cast<double>(flat.size()));
    auto eval = [&](double delta) {
      std::vector<double> pert = flat;
      pert[j] += delta;
      params.store.unflatten(pert);
      return total_loss(params, scenes, {});
    };
    const double fd = (eval(h) - eval(-h)) / (2.0 * h);
    const double an = grad[j];
    const double scale = std::max({1.0, std::fabs(fd), std::fabs(an)});
    CHECK(std::fabs(fd - an) / scale < 1e-4);
    ++checked;
  }
  params.store.unflatten(flat);
  CHECK(checked == 40);
}

TEST_CASE("training is deterministic and reduces the loss") {
  Dataset train_data;
  train_data.scenes = sample_scenes(4, 71);
  Dataset val_data;
  val_data.scenes = sample_scenes(2, 72);
  NetConfig cfg = tiny_config();
  cfg.max_epochs = 8;
  cfg.patience = 8;
  cfg.batch_size = 2;
  const TrainResult a = net::train(train_data, val_data, cfg, 13);
  const TrainResult b = net::train(train_data, val_data, cfg, 13);
  REQUIRE(!a.log.empty());
  CHECK(!a.diverged);
  CHECK(a.log.back().val_total < a.log.front().val_total);
  const auto fa = a.params.store.flatten();
  const auto fb = b.params.store.flatten();
  REQUIRE(fa.size() == fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == fb[i]);
  // A different seed gives different parameters.
  const TrainResult c = net::train(train_data, val_data, cfg, 14);
  const auto fc = c.params.store.flatten();
  bool any_diff = false;
  for (std::size_t i = 0; i < fa.size(); ++i) any_diff = any_diff || fa[i] != fc[i];
  CHECK(any_diff);
}
