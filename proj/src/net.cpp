#include "rf/net.hpp"

#include "rf/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace rf::net {

using ad::Matrix;
using ad::Var;

void NetConfig::validate() const {
  if (d % n_heads != 0) throw InvariantError("NetConfig: d must be divisible by n_heads");
  if (d_flow < 2) throw InvariantError("NetConfig: d_flow must be >= 2");
  if (!(n_budget > 0.0)) throw InvariantError("NetConfig: N_budget must be positive");
  if (K < 2) throw InvariantError("NetConfig: K must be >= 2");
  if (H < 1 || F < 1) throw InvariantError("NetConfig: H and F must be >= 1");
}

int ParamStore::add(std::string name, int rows, int cols, double init_scale,
                    std::mt19937_64& rng) {
  Entry e;
  e.name = std::move(name);
  e.value = Matrix(rows, cols);
  // Portable uniform in [-1, 1); std distributions vary across platforms.
  for (double& v : e.value.data) {
    const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
    v = init_scale * (2.0 * u - 1.0);
  }
  entries_.push_back(std::move(e));
  return count() - 1;
}

int ParamStore::add_zeros(std::string name, int rows, int cols) {
  Entry e;
  e.name = std::move(name);
  e.value = Matrix(rows, cols);
  entries_.push_back(std::move(e));
  return count() - 1;
}

std::size_t ParamStore::flat_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(flat_size());
  for (const auto& e : entries_) {
    flat.insert(flat.end(), e.value.data.begin(), e.value.data.end());
  }
  return flat;
}

void ParamStore::unflatten(const std::vector<double>& flat) {
  if (flat.size() != flat_size()) throw InvariantError("unflatten: size mismatch");
  std::size_t off = 0;
  for (auto& e : entries_) {
    std::copy(flat.begin() + static_cast<long>(off),
              flat.begin() + static_cast<long>(off + e.value.size()),
              e.value.data.begin());
    off += e.value.size();
  }
}

namespace {

constexpr int kAgentFeat = 6;   // x, y, cos, sin, v, is_ego
constexpr int kAnchorFeat = 5;  // x, y, cos, sin, v
constexpr int kMapFeat = 10;    // x, y, dx, dy, kind one-hot(3), route flag, limit, red
constexpr double kPosScale = 0.1;
constexpr double kAlphaFloorLoss = 1e-6;

struct AttnIds {
  int wq{-1}, wk{-1}, wv{-1}, wo{-1};
};

struct BlockIds {
  int ln1_g{-1}, ln1_b{-1};
  AttnIds time_attn;
  int ln2_g{-1}, ln2_b{-1};
  AttnIds agent_attn;  // hist blocks only
  int ln3_g{-1}, ln3_b{-1};
  AttnIds cross_attn;
  int ln4_g{-1}, ln4_b{-1};
  int mlp_w1{-1}, mlp_b1{-1}, mlp_w2{-1}, mlp_b2{-1};
};

struct FlowLayerIds {
  int z0{-1}, a_hat{-1}, b_hat{-1};
};

struct Layout {
  int embed_agent_w, embed_agent_b;
  int embed_anchor_w, embed_anchor_b;
  int pos_embed;
  int map_w1, map_b1, map_w2, map_b2;
  std::vector<BlockIds> hist_blocks;
  std::vector<BlockIds> joint_blocks;
  int reg_w1, reg_b1, reg_w2, reg_b2;
  int flow_w1, flow_b1, flow_w2, flow_b2;
  std::vector<FlowLayerIds> flow_layers;
};

/// Builds the parameter layout; when `store` is non-null the tensors are
/// created (deterministic in rng), otherwise only indices are assigned.
Layout make_layout(const NetConfig& cfg, ParamStore* store, std::mt19937_64* rng) {
  int counter = 0;
  const auto add = [&](const std::string& name, int r, int c, double scale) {
    if (store != nullptr) return store->add(name, r, c, scale, *rng);
    return counter++;
  };
  const auto add0 = [&](const std::string& name, int r, int c) {
    if (store != nullptr) return store->add_zeros(name, r, c);
    return counter++;
  };
  const auto add1 = [&](const std::string& name, int r, int c) {
    // ones (layer-norm gains)
    if (store != nullptr) {
      const int idx = store->add_zeros(name, r, c);
      std::fill(store->value(idx).data.begin(), store->value(idx).data.end(), 1.0);
      return idx;
    }
    return counter++;
  };
  const int d = cfg.d;
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));
  Layout ly{};

  ly.embed_agent_w = add("embed_agent_w", kAgentFeat, d, 0.5);
  ly.embed_agent_b = add0("embed_agent_b", 1, d);
  ly.embed_anchor_w = add("embed_anchor_w", kAnchorFeat, d, 0.5);
  ly.embed_anchor_b = add0("embed_anchor_b", 1, d);
  ly.pos_embed = add("pos_embed", cfg.H + 1 + cfg.F, d, 0.1);
  ly.map_w1 = add("map_w1", kMapFeat, d, 0.5);
  ly.map_b1 = add0("map_b1", 1, d);
  ly.map_w2 = add("map_w2", d, d, ws);
  ly.map_b2 = add0("map_b2", 1, d);

  const auto add_attn = [&](const std::string& prefix) {
    AttnIds a;
    a.wq = add(prefix + "_wq", d, d, ws);
    a.wk = add(prefix + "_wk", d, d, ws);
    a.wv = add(prefix + "_wv", d, d, ws);
    a.wo = add(prefix + "_wo", d, d, ws);
    return a;
  };
  const auto add_block = [&](const std::string& prefix, bool with_agent) {
    BlockIds b;
    b.ln1_g = add1(prefix + "_ln1_g", 1, d);
    b.ln1_b = add0(prefix + "_ln1_b", 1, d);
    b.time_attn = add_attn(prefix + "_time");
    if (with_agent) {
      b.ln2_g = add1(prefix + "_ln2_g", 1, d);
      b.ln2_b = add0(prefix + "_ln2_b", 1, d);
      b.agent_attn = add_attn(prefix + "_agent");
    }
    b.ln3_g = add1(prefix + "_ln3_g", 1, d);
    b.ln3_b = add0(prefix + "_ln3_b", 1, d);
    b.cross_attn = add_attn(prefix + "_cross");
    b.ln4_g = add1(prefix + "_ln4_g", 1, d);
    b.ln4_b = add0(prefix + "_ln4_b", 1, d);
    b.mlp_w1 = add(prefix + "_mlp_w1", d, 2 * d, ws);
    b.mlp_b1 = add0(prefix + "_mlp_b1", 1, 2 * d);
    b.mlp_w2 = add(prefix + "_mlp_w2", 2 * d, d, 1.0 / std::sqrt(2.0 * d));
    b.mlp_b2 = add0(prefix + "_mlp_b2", 1, d);
    return b;
  };
  for (int i = 0; i < cfg.n_hist_blocks; ++i) {
    ly.hist_blocks.push_back(add_block("hist" + std::to_string(i), true));
  }
  for (int i = 0; i < cfg.n_joint_blocks; ++i) {
    ly.joint_blocks.push_back(add_block("joint" + std::to_string(i), false));
  }
  ly.reg_w1 = add("reg_w1", d, d, ws);
  ly.reg_b1 = add0("reg_b1", 1, d);
  ly.reg_w2 = add("reg_w2", d, 2, 0.01 * ws);
  ly.reg_b2 = add0("reg_b2", 1, 2);
  ly.flow_w1 = add("flow_w1", 2 * d, d, ws);
  ly.flow_b1 = add0("flow_b1", 1, d);
  ly.flow_w2 = add("flow_w2", d, cfg.d_flow, 0.1 * ws);
  ly.flow_b2 = add0("flow_b2", 1, cfg.d_flow);
  for (int i = 0; i < cfg.n_flow_layers; ++i) {
    FlowLayerIds f;
    f.z0 = add("flow" + std::to_string(i) + "_z0", 1, cfg.d_flow, 0.05);
    // softplus(0.5413...) = 1, so alpha starts at 1 and beta at 0: the
    // initialized flow is exactly the standard-normal base density.
    const double kInvSoftplus1 = 0.541324854612918;
    if (store != nullptr) {
      f.a_hat = store->add_zeros("flow" + std::to_string(i) + "_a", 1, 1);
      store->value(f.a_hat).data[0] = kInvSoftplus1;
      f.b_hat = store->add_zeros("flow" + std::to_string(i) + "_b", 1, 1);
      store->value(f.b_hat).data[0] = kInvSoftplus1;
    } else {
      f.a_hat = counter++;
      f.b_hat = counter++;
    }
    ly.flow_layers.push_back(f);
  }
  return ly;
}

// -- input featurization ------------------------------------------------

struct SceneInputs {
  std::vector<Matrix> agent_feats;   // ego first, [(H+1), kAgentFeat] each
  std::vector<Matrix> map_feats;     // per element, [P, kMapFeat]
  std::vector<Matrix> anchor_feats;  // per candidate, [F, kAnchorFeat]
};

SceneInputs featurize(const Scene& scene, const anchors::AnchorSet& anchor_set,
                      const NetConfig& cfg) {
  SceneInputs in;
  const EgoState& ego = scene.current_ego();
  const Vec2 origin = ego.position;
  const double rot = -ego.heading;
  const auto local = [&](const Vec2& p) { return (p - origin).rotated(rot); };
  const auto local_heading = [&](double h) { return geom::wrap_angle(h - ego.heading); };

  {
    Matrix m(static_cast<int>(scene.ego_history.size()), kAgentFeat);
    for (std::size_t t = 0; t < scene.ego_history.size(); ++t) {
      const EgoState& s = scene.ego_history[t];
      const Vec2 p = local(s.position);
      const double h = local_heading(s.heading);
      const int r = static_cast<int>(t);
      m.at(r, 0) = p.x * kPosScale;
      m.at(r, 1) = p.y * kPosScale;
      m.at(r, 2) = std::cos(h);
      m.at(r, 3) = std::sin(h);
      m.at(r, 4) = s.speed * kPosScale;
      m.at(r, 5) = 1.0;
    }
    in.agent_feats.push_back(std::move(m));
  }
  // Nearest agents by current distance, capped.
  std::vector<std::size_t> order(scene.agent_histories.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = (scene.agent_histories[a].back().position - origin).norm();
    const double db = (scene.agent_histories[b].back().position - origin).norm();
    return da < db;
  });
  const std::size_t cap = std::min<std::size_t>(order.size(),
                                                static_cast<std::size_t>(cfg.agent_cap));
  for (std::size_t i = 0; i < cap; ++i) {
    const auto& hist = scene.agent_histories[order[i]];
    Matrix m(static_cast<int>(hist.size()), kAgentFeat);
    for (std::size_t t = 0; t < hist.size(); ++t) {
      const AgentState& s = hist[t];
      const Vec2 p = local(s.position);
      const double h = local_heading(s.heading);
      const int r = static_cast<int>(t);
      m.at(r, 0) = p.x * kPosScale;
      m.at(r, 1) = p.y * kPosScale;
      m.at(r, 2) = std::cos(h);
      m.at(r, 3) = std::sin(h);
      m.at(r, 4) = s.speed * kPosScale;
      m.at(r, 5) = 0.0;
    }
    in.agent_feats.push_back(std::move(m));
  }

  const auto add_polyline = [&](const std::vector<Vec2>& pts, int kind, bool is_route,
                                double limit, double red) {
    Matrix m(static_cast<int>(pts.size()), kMapFeat);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec2 p = local(pts[i]);
      const Vec2 nxt = local(pts[std::min(i + 1, pts.size() - 1)]);
      const int r = static_cast<int>(i);
      m.at(r, 0) = p.x * kPosScale;
      m.at(r, 1) = p.y * kPosScale;
      m.at(r, 2) = (nxt.x - p.x) * kPosScale;
      m.at(r, 3) = (nxt.y - p.y) * kPosScale;
      m.at(r, 4 + kind) = 1.0;
      m.at(r, 7) = is_route ? 1.0 : 0.0;
      m.at(r, 8) = limit * kPosScale;
      m.at(r, 9) = red;
    }
    in.map_feats.push_back(std::move(m));
  };
  for (const auto& el : scene.map) {
    const int kind = static_cast<int>(el.kind);
    const double limit = el.kind == MapKind::kLaneCenterline ? el.speed_limit : 0.0;
    const double red = el.light == LightState::kRed ? 1.0 : 0.0;
    add_polyline(el.points, kind, false, limit, red);
  }
  if (scene.route) add_polyline(scene.route->polyline, 0, true, 0.0, 0.0);

  for (const auto& anchor : anchor_set.anchors) {
    Matrix m(static_cast<int>(anchor.states.size()), kAnchorFeat);
    for (std::size_t t = 0; t < anchor.states.size(); ++t) {
      const EgoState& s = anchor.states[t];
      const Vec2 p = local(s.position);
      const double h = local_heading(s.heading);
      const int r = static_cast<int>(t);
      m.at(r, 0) = p.x * kPosScale;
      m.at(r, 1) = p.y * kPosScale;
      m.at(r, 2) = std::cos(h);
      m.at(r, 3) = std::sin(h);
      m.at(r, 4) = s.speed * kPosScale;
    }
    in.anchor_feats.push_back(std::move(m));
  }
  return in;
}

// -- tape forward --------------------------------------------------------

struct Forward {
  ad::Tape tape;
  std::vector<Var> pv;  // parameter vars aligned with the store

  explicit Forward(const NetParams& params) {
    pv.reserve(static_cast<std::size_t>(params.store.count()));
    for (int i = 0; i < params.store.count(); ++i) {
      pv.push_back(tape.leaf(params.store.value(i)));
    }
  }
};

Var linear(Forward& f, Var x, int w, int b) {
  return ad::add_rowvec(ad::matmul(x, f.pv[static_cast<std::size_t>(w)]),
                        f.pv[static_cast<std::size_t>(b)]);
}

Var layer_norm(Forward& f, Var x, int g, int b) {
  return ad::add_rowvec(
      ad::mul_rowvec(ad::layer_norm_rows(x), f.pv[static_cast<std::size_t>(g)]),
      f.pv[static_cast<std::size_t>(b)]);
}

Var attention(Forward& f, Var q_in, Var kv_in, const AttnIds& ids, int n_heads) {
  const int d = q_in.cols();
  const int dh = d / n_heads;
  Var q = ad::matmul(q_in, f.pv[static_cast<std::size_t>(ids.wq)]);
  Var k = ad::matmul(kv_in, f.pv[static_cast<std::size_t>(ids.wk)]);
  Var v = ad::matmul(kv_in, f.pv[static_cast<std::size_t>(ids.wv)]);
  Var out{};
  for (int h = 0; h < n_heads; ++h) {
    Var qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
    Var scores = ad::scale(ad::matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var oh = ad::matmul(ad::softmax_rows(scores), vh);
    out = (h == 0) ? oh : ad::concat_cols(out, oh);
  }
  return ad::matmul(out, f.pv[static_cast<std::size_t>(ids.wo)]);
}

Var mlp_residual(Forward& f, Var x, const BlockIds& b, int /*n_heads*/) {
  Var u = layer_norm(f, x, b.ln4_g, b.ln4_b);
  Var h = ad::relu(linear(f, u, b.mlp_w1, b.mlp_b1));
  return ad::add(x, linear(f, h, b.mlp_w2, b.mlp_b2));
}

Var self_attn_residual(Forward& f, Var x, const AttnIds& attn, int ln_g, int ln_b,
                       int n_heads) {
  Var u = layer_norm(f, x, ln_g, ln_b);
  return ad::add(x, attention(f, u, u, attn, n_heads));
}

Var cross_attn_residual(Forward& f, Var x, Var mem, const AttnIds& attn, int ln_g,
                        int ln_b, int n_heads) {
  Var u = layer_norm(f, x, ln_g, ln_b);
  return ad::add(x, attention(f, u, mem, attn, n_heads));
}

struct EncodeResult {
  std::vector<Var> candidates;  // K vars of shape [H+1+F, d]
  Var map_memory;
};

EncodeResult encode_on_tape(Forward& f, const Layout& ly, const SceneInputs& in,
                            const NetConfig& cfg) {
  const int n_heads = cfg.n_heads;
  const int t_hist = cfg.H + 1;

  // Map memory via shared point MLP + max pool per element.
  Var map_memory{};
  if (in.map_feats.empty()) {
    map_memory = f.tape.leaf(Matrix::zeros(1, cfg.d));
  } else {
    for (std::size_t e = 0; e < in.map_feats.size(); ++e) {
      Var pts = f.tape.leaf(in.map_feats[e]);
      Var h = ad::relu(linear(f, pts, ly.map_w1, ly.map_b1));
      Var pooled = ad::col_max(linear(f, h, ly.map_w2, ly.map_b2));
      map_memory = (e == 0) ? pooled : ad::concat_rows(map_memory, pooled);
    }
  }

  // Agent stack, agent-major rows: row a*t_hist + t.
  const int n_agents = static_cast<int>(in.agent_feats.size());
  std::vector<int> hist_pos_idx(static_cast<std::size_t>(t_hist));
  for (int t = 0; t < t_hist; ++t) hist_pos_idx[static_cast<std::size_t>(t)] = t;
  Var stack{};
  for (int a = 0; a < n_agents; ++a) {
    Var e = linear(f, f.tape.leaf(in.agent_feats[static_cast<std::size_t>(a)]),
                   ly.embed_agent_w, ly.embed_agent_b);
    e = ad::add(e, ad::gather_rows(f.pv[static_cast<std::size_t>(ly.pos_embed)],
                                   hist_pos_idx));
    stack = (a == 0) ? e : ad::concat_rows(stack, e);
  }

  std::vector<int> to_time_major(static_cast<std::size_t>(n_agents * t_hist));
  std::vector<int> to_agent_major(to_time_major.size());
  for (int t = 0; t < t_hist; ++t) {
    for (int a = 0; a < n_agents; ++a) {
      to_time_major[static_cast<std::size_t>(t * n_agents + a)] = a * t_hist + t;
      to_agent_major[static_cast<std::size_t>(a * t_hist + t)] = t * n_agents + a;
    }
  }

  for (const BlockIds& blk : ly.hist_blocks) {
    // Self-attention across time, per agent.
    Var next{};
    for (int a = 0; a < n_agents; ++a) {
      Var xa = ad::slice_rows(stack, a * t_hist, (a + 1) * t_hist);
      Var ya = self_attn_residual(f, xa, blk.time_attn, blk.ln1_g, blk.ln1_b, n_heads);
      next = (a == 0) ? ya : ad::concat_rows(next, ya);
    }
    stack = next;
    // Self-attention across agents, per timestep; no positional encoding
    // over agents, keeping the operation permutation-equivariant.
    if (n_agents > 1) {
      Var tm = ad::gather_rows(stack, to_time_major);
      Var ynext{};
      for (int t = 0; t < t_hist; ++t) {
        Var xt = ad::slice_rows(tm, t * n_agents, (t + 1) * n_agents);
        Var yt = self_attn_residual(f, xt, blk.agent_attn, blk.ln2_g, blk.ln2_b, n_heads);
        ynext = (t == 0) ? yt : ad::concat_rows(ynext, yt);
      }
      stack = ad::gather_rows(ynext, to_agent_major);
    }
    stack = cross_attn_residual(f, stack, map_memory, blk.cross_attn, blk.ln3_g,
                                blk.ln3_b, n_heads);
    stack = mlp_residual(f, stack, blk, n_heads);
  }

  // Only the ego slice feeds the candidate encoder.
  Var ego_feat = ad::slice_rows(stack, 0, t_hist);

  std::vector<int> fut_pos_idx(static_cast<std::size_t>(cfg.F));
  for (int t = 0; t < cfg.F; ++t) fut_pos_idx[static_cast<std::size_t>(t)] = t_hist + t;

  EncodeResult result;
  result.map_memory = map_memory;
  for (const Matrix& anchor_feat : in.anchor_feats) {
    Var c = linear(f, f.tape.leaf(anchor_feat), ly.embed_anchor_w, ly.embed_anchor_b);
    c = ad::add(c, ad::gather_rows(f.pv[static_cast<std::size_t>(ly.pos_embed)],
                                   fut_pos_idx));
    Var joint = ad::concat_rows(ego_feat, c);
    for (const BlockIds& blk : ly.joint_blocks) {
      joint = self_attn_residual(f, joint, blk.time_attn, blk.ln1_g, blk.ln1_b, n_heads);
      joint = cross_attn_residual(f, joint, map_memory, blk.cross_attn, blk.ln3_g,
                                  blk.ln3_b, n_heads);
      joint = mlp_residual(f, joint, blk, n_heads);
    }
    result.candidates.push_back(joint);
  }
  return result;
}

struct DecodeResult {
  std::vector<Var> error_traces;  // K of [F, 2], meters
  Var latents;                    // [K, d_flow]
  Var log_density;                // [K, 1]
  Var evidence;                   // [K, 1]
};

/// Radial-flow log density with exact log-determinant accumulation.
Var flow_log_density_on_tape(Forward& f, const Layout& ly, Var z, const NetConfig& cfg) {
  const int K = z.rows();
  const int D = cfg.d_flow;
  Var ones = f.tape.leaf(Matrix::full(K, 1, 1.0));
  Var u = z;
  Var logdet = f.tape.leaf(Matrix::zeros(K, 1));
  for (const FlowLayerIds& fl : ly.flow_layers) {
    Var z0 = f.pv[static_cast<std::size_t>(fl.z0)];
    Var alpha = ad::softplus(f.pv[static_cast<std::size_t>(fl.a_hat)]);   // [1,1] > 0
    // beta = -alpha + softplus(b_hat) keeps the layer invertible.
    Var beta = ad::sub(ad::softplus(f.pv[static_cast<std::size_t>(fl.b_hat)]), alpha);
    Var alpha_col = ad::matmul(ones, alpha);  // [K,1]
    Var beta_col = ad::matmul(ones, beta);
    Var diff = ad::sub_rowvec(u, z0);
    Var r = ad::sqrt_op(ad::affine(ad::row_sum(ad::square(diff)), 1.0, 1e-12));
    Var h = ad::recip(ad::add(alpha_col, r));  // 1/(alpha + r)
    Var bh = ad::mul(beta_col, h);
    u = ad::add(u, ad::mul_colvec(diff, bh));
    Var one_p_bh = ad::affine(bh, 1.0, 1.0);
    Var term1 = ad::scale(ad::log_op(one_p_bh), static_cast<double>(D - 1));
    // d/dr of beta*h(r) is -beta*h^2; the Jacobian picks up beta*h'(r)*r.
    Var inner = ad::sub(one_p_bh, ad::mul(beta_col, ad::mul(ad::square(h), r)));
    Var term2 = ad::log_op(inner);
    logdet = ad::add(logdet, ad::add(term1, term2));
  }
  Var base = ad::affine(ad::scale(ad::row_sum(ad::square(u)), -0.5), 1.0,
                        -0.5 * D * std::log(2.0 * M_PI));
  return ad::add(base, logdet);
}

DecodeResult decode_on_tape(Forward& f, const Layout& ly, const std::vector<Var>& cands,
                            Var scene_summary, const NetConfig& cfg) {
  DecodeResult out;
  const int t_hist = cfg.H + 1;
  Var latents{};
  for (std::size_t k = 0; k < cands.size(); ++k) {
    Var zk = cands[k];
    Var fut = ad::slice_rows(zk, t_hist, t_hist + cfg.F);
    Var e = linear(f, ad::relu(linear(f, fut, ly.reg_w1, ly.reg_b1)), ly.reg_w2,
                   ly.reg_b2);
    // The head operates in normalized units; rescale to meters.
    out.error_traces.push_back(ad::scale(e, 1.0 / kPosScale));
    // The raw map summary sits beside the candidate features so the flow
    // sees scene geometry at full scale, not only through the attention
    // trunk where repeated normalization damps it.
    Var pooled = ad::concat_cols(ad::mean_rows(zk), scene_summary);
    Var lat = linear(f, ad::relu(linear(f, pooled, ly.flow_w1, ly.flow_b1)), ly.flow_w2,
                     ly.flow_b2);
    latents = (k == 0) ? lat : ad::concat_rows(latents, lat);
  }
  out.latents = latents;
  out.log_density = flow_log_density_on_tape(f, ly, latents, cfg);
  out.evidence = ad::scale(ad::exp_op(out.log_density), cfg.n_budget);
  return out;
}

Var loss_mse_on_tape(Forward& f, const DecodeResult& dec,
                     const anchors::AnchorSet& anchor_set, const Matrix& gt, int k_star) {
  const Var& e = dec.error_traces[static_cast<std::size_t>(k_star)];
  Matrix anchor_m(e.rows(), 2);
  const auto& states = anchor_set.anchors[static_cast<std::size_t>(k_star)].states;
  for (int t = 0; t < e.rows(); ++t) {
    anchor_m.at(t, 0) = states[static_cast<std::size_t>(t)].position.x;
    anchor_m.at(t, 1) = states[static_cast<std::size_t>(t)].position.y;
  }
  Var refined = ad::add(e, f.tape.leaf(std::move(anchor_m)));
  Var diff = ad::sub(refined, f.tape.leaf(gt));
  return ad::sum_all(ad::square(diff));
}

Var loss_uce_on_tape(Forward& f, const DecodeResult& dec, int k_star, double lambda_ent,
                     const NetConfig& cfg) {
  const int K = dec.log_density.rows();
  // q = n / sum(n) is exactly a softmax over the per-candidate log density,
  // since n_k = N_budget * exp(logp_k). Transpose [K,1] -> [1,K] by slicing.
  Var row = ad::slice_rows(dec.log_density, 0, 1);
  for (int k = 1; k < K; ++k) {
    row = ad::concat_cols(row, ad::slice_rows(dec.log_density, k, k + 1));
  }
  Var q = ad::softmax_rows(row);  // [1,K]
  Matrix target(1, K);
  target.at(0, k_star) = 1.0;
  Var y = f.tape.leaf(target);
  Var log_q = ad::log_op(ad::clamp_min(q, 1e-12));
  Var log_1mq = ad::log_op(ad::clamp_min(ad::affine(q, -1.0, 1.0), 1e-12));
  Var bce_terms =
      ad::add(ad::mul(y, log_q), ad::mul(ad::affine(y, -1.0, 1.0), log_1mq));
  Var bce = ad::scale(ad::sum_all(bce_terms), -1.0);

  // Differential entropy of Dir(n) with the evidence as concentrations.
  Var n_clamped = ad::clamp_min(dec.evidence, kAlphaFloorLoss);  // [K,1]
  Var alpha0 = ad::sum_all(n_clamped);
  Var log_beta = ad::sub(ad::sum_all(ad::lgamma_op(n_clamped)), ad::lgamma_op(alpha0));
  Var entropy = ad::add(
      log_beta,
      ad::sub(ad::mul(ad::affine(alpha0, 1.0, -static_cast<double>(K)),
                      ad::digamma_op(alpha0)),
              ad::sum_all(ad::mul(ad::affine(n_clamped, 1.0, -1.0),
                                  ad::digamma_op(n_clamped)))));
  (void)cfg;
  return ad::sub(bce, ad::scale(entropy, lambda_ent));
}

NetOutput extract_output(const DecodeResult& dec) {
  NetOutput out;
  for (const Var& e : dec.error_traces) out.error_traces.push_back(e.val());
  const Matrix& n = dec.evidence.val();
  for (int k = 0; k < n.rows; ++k) {
    const double v = n.at(k, 0);
    if (!std::isfinite(v)) {
      throw InvariantError("evidence is non-finite (training divergence)");
    }
    out.evidence.push_back(std::max(v, 1e-300));
  }
  const Matrix& z = dec.latents.val();
  for (int k = 0; k < z.rows; ++k) {
    std::vector<double> row(static_cast<std::size_t>(z.cols));
    for (int j = 0; j < z.cols; ++j) row[static_cast<std::size_t>(j)] = z.at(k, j);
    out.latents.push_back(std::move(row));
  }
  return out;
}

}  // namespace

NetParams init_params(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  NetParams params;
  params.config = config;
  params.init_seed = seed;
  std::mt19937_64 rng(seed);
  make_layout(config, &params.store, &rng);
  return params;
}

EncodedScene encode(const Scene& scene, const anchors::AnchorSet& anchor_set,
                    const NetParams& params) {
  const Layout ly = make_layout(params.config, nullptr, nullptr);
  const SceneInputs in = featurize(scene, anchor_set, params.config);
  Forward f(params);
  const EncodeResult enc = encode_on_tape(f, ly, in, params.config);
  EncodedScene out;
  for (const Var& c : enc.candidates) out.candidate_features.push_back(c.val());
  out.map_summary = ad::mean_rows(enc.map_memory).val();
  return out;
}

NetOutput decode(const EncodedScene& features, const NetParams& params) {
  const Layout ly = make_layout(params.config, nullptr, nullptr);
  Forward f(params);
  std::vector<Var> cands;
  for (const Matrix& m : features.candidate_features) cands.push_back(f.tape.leaf(m));
  const DecodeResult dec =
      decode_on_tape(f, ly, cands, f.tape.leaf(features.map_summary), params.config);
  return extract_output(dec);
}

NetOutput infer(const Scene& scene, const anchors::AnchorSet& anchor_set,
                const NetParams& params) {
  const Layout ly = make_layout(params.config, nullptr, nullptr);
  const SceneInputs in = featurize(scene, anchor_set, params.config);
  Forward f(params);
  const EncodeResult enc = encode_on_tape(f, ly, in, params.config);
  const DecodeResult dec = decode_on_tape(f, ly, enc.candidates,
                                          ad::mean_rows(enc.map_memory), params.config);
  return extract_output(dec);
}

int closest_anchor(const anchors::AnchorSet& anchor_set, const Trajectory& ego_future) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < anchor_set.anchors.size(); ++k) {
    const auto& states = anchor_set.anchors[k].states;
    double d = 0.0;
    for (std::size_t t = 0; t < states.size() && t < ego_future.states.size(); ++t) {
      d += (states[t].position - ego_future.states[t].position).norm2();
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

double loss_mse(const NetOutput& output, const anchors::AnchorSet& anchor_set,
                const Trajectory& ego_future) {
  const int k_star = closest_anchor(anchor_set, ego_future);
  const Matrix& e = output.error_traces[static_cast<std::size_t>(k_star)];
  const auto& states = anchor_set.anchors[static_cast<std::size_t>(k_star)].states;
  double loss = 0.0;
  for (int t = 0; t < e.rows; ++t) {
    const Vec2 refined{states[static_cast<std::size_t>(t)].position.x + e.at(t, 0),
                       states[static_cast<std::size_t>(t)].position.y + e.at(t, 1)};
    loss += (refined - ego_future.states[static_cast<std::size_t>(t)].position).norm2();
  }
  return loss;
}

double loss_uce(const NetOutput& output, int k_star, double lambda_ent) {
  const std::size_t K = output.evidence.size();
  double total_n = 0.0;
  for (double n : output.evidence) total_n += n;
  double bce = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double q = std::max(output.evidence[k] / total_n, 1e-12);
    const double y = (static_cast<int>(k) == k_star) ? 1.0 : 0.0;
    bce -= y * std::log(q) + (1.0 - y) * std::log(std::max(1.0 - q, 1e-12));
  }
  // Dirichlet differential entropy with the evidence as concentrations.
  double alpha0 = 0.0, log_beta = 0.0, sum_term = 0.0;
  for (double n : output.evidence) alpha0 += std::max(n, kAlphaFloorLoss);
  for (double n : output.evidence) {
    const double a = std::max(n, kAlphaFloorLoss);
    log_beta += std::lgamma(a);
    sum_term += (a - 1.0) * ad::digamma(a);
  }
  log_beta -= std::lgamma(alpha0);
  const double entropy =
      log_beta + (alpha0 - static_cast<double>(K)) * ad::digamma(alpha0) - sum_term;
  return bce - lambda_ent * entropy;
}

double flow_log_density(const NetParams& params, const std::vector<double>& z) {
  if (static_cast<int>(z.size()) != params.config.d_flow) {
    throw InvariantError("flow_log_density: latent width mismatch");
  }
  const Layout ly = make_layout(params.config, nullptr, nullptr);
  Forward f(params);
  Matrix zm(1, params.config.d_flow);
  zm.data = z;
  Var logp = flow_log_density_on_tape(f, ly, f.tape.leaf(std::move(zm)), params.config);
  return logp.val().at(0, 0);
}

namespace {

struct SceneCache {
  anchors::AnchorSet anchor_set;
  SceneInputs inputs;
  Matrix gt;  // [F, 2]
  int k_star{0};
};

SceneCache build_cache(const Scene& scene, const NetConfig& cfg,
                       const anchors::BicycleLimits& limits) {
  SceneCache c;
  c.anchor_set = anchors::generate_anchors(scene, cfg.K, limits, cfg.dt, cfg.F);
  c.inputs = featurize(scene, c.anchor_set, cfg);
  if (!scene.ego_future.empty()) {
    c.gt = Matrix(cfg.F, 2);
    for (int t = 0; t < cfg.F; ++t) {
      c.gt.at(t, 0) = scene.ego_future[static_cast<std::size_t>(t)].position.x;
      c.gt.at(t, 1) = scene.ego_future[static_cast<std::size_t>(t)].position.y;
    }
    c.k_star = closest_anchor(c.anchor_set, ground_truth_trajectory(scene));
  }
  return c;
}

struct SceneLoss {
  double total{0.0};
  double mse{0.0};
  double uce{0.0};
};

SceneLoss scene_loss_grad(NetParams& params, const Layout& ly, const SceneCache& cache,
                          std::vector<double>* grad_accum) {
  const NetConfig& cfg = params.config;
  Forward f(params);
  const EncodeResult enc = encode_on_tape(f, ly, cache.inputs, cfg);
  const DecodeResult dec = decode_on_tape(f, ly, enc.candidates,
                                          ad::mean_rows(enc.map_memory), cfg);
  Var mse = loss_mse_on_tape(f, dec, cache.anchor_set, cache.gt, cache.k_star);
  Var uce = loss_uce_on_tape(f, dec, cache.k_star, cfg.lambda_ent, cfg);
  Var total = ad::add(ad::scale(mse, cfg.w_mse), ad::scale(uce, cfg.w_uce));
  SceneLoss out;
  out.mse = mse.val().at(0, 0);
  out.uce = uce.val().at(0, 0);
  out.total = total.val().at(0, 0);
  if (grad_accum != nullptr) {
    f.tape.backward(total);
    std::size_t off = 0;
    for (int i = 0; i < params.store.count(); ++i) {
      const Matrix& g = f.tape.grad(f.pv[static_cast<std::size_t>(i)].id);
      for (std::size_t j = 0; j < g.size(); ++j) (*grad_accum)[off + j] += g.data[j];
      off += g.size();
    }
  }
  return out;
}

}  // namespace

double total_loss(NetParams& params, const std::vector<Scene>& scenes,
                  const anchors::BicycleLimits& limits) {
  const Layout ly = make_layout(params.config, nullptr, nullptr);
  double total = 0.0;
  for (const Scene& s : scenes) {
    const SceneCache cache = build_cache(s, params.config, limits);
    total += scene_loss_grad(params, ly, cache, nullptr).total;
  }
  return total / std::max<std::size_t>(scenes.size(), 1);
}

double total_loss_grad(NetParams& params, const std::vector<Scene>& scenes,
                       const anchors::BicycleLimits& limits, std::vector<double>& grad) {
  const Layout ly = make_layout(params.config, nullptr, nullptr);
  grad.assign(params.store.flat_size(), 0.0);
  double total = 0.0;
  for (const Scene& s : scenes) {
    const SceneCache cache = build_cache(s, params.config, limits);
    total += scene_loss_grad(params, ly, cache, &grad).total;
  }
  const double inv = 1.0 / std::max<std::size_t>(scenes.size(), 1);
  for (double& g : grad) g *= inv;
  return total * inv;
}

TrainResult train(const Dataset& train_data, const Dataset& val_data,
                  const NetConfig& config, std::uint64_t seed,
                  const anchors::BicycleLimits& limits) {
  config.validate();
  TrainResult result;
  result.params = init_params(config, seed);
  NetParams& params = result.params;
  const Layout ly = make_layout(config, nullptr, nullptr);

  std::vector<SceneCache> train_cache;
  train_cache.reserve(train_data.scenes.size());
  for (const Scene& s : train_data.scenes) train_cache.push_back(build_cache(s, config, limits));
  std::vector<SceneCache> val_cache;
  val_cache.reserve(val_data.scenes.size());
  for (const Scene& s : val_data.scenes) val_cache.push_back(build_cache(s, config, limits));

  const std::size_t n_flat = params.store.flat_size();
  std::vector<double> m(n_flat, 0.0), v(n_flat, 0.0), grad(n_flat);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  std::vector<std::size_t> order(train_cache.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_flat = params.store.flatten();
  int since_best = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(epoch + 1));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    double epoch_mse = 0.0, epoch_uce = 0.0;
    bool finite = true;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const SceneLoss l = scene_loss_grad(params, ly, train_cache[order[i]], &grad);
        if (!std::isfinite(l.total)) {
          finite = false;
          break;
        }
        epoch_mse += l.mse;
        epoch_uce += l.uce;
      }
      if (!finite) break;
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      ++step;
      std::vector<double> flat = params.store.flatten();
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t j = 0; j < n_flat; ++j) {
        const double g = grad[j] * inv_batch;
        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
        flat[j] -= config.learning_rate * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
      }
      params.store.unflatten(flat);
    }
    if (!finite) {
      result.diverged = true;
      params.store.unflatten(best_flat);
      break;
    }

    double val_total = 0.0;
    for (const SceneCache& c : val_cache) {
      val_total += scene_loss_grad(params, ly, c, nullptr).total;
    }
    val_total /= std::max<std::size_t>(val_cache.size(), 1);

    TrainLogRow row;
    row.epoch = epoch;
    row.train_mse = epoch_mse / std::max<std::size_t>(train_cache.size(), 1);
    row.train_uce = epoch_uce / std::max<std::size_t>(train_cache.size(), 1);
    row.val_total = val_total;
    result.log.push_back(row);

    if (val_total < best_val - 1e-12) {
      best_val = val_total;
      best_flat = params.store.flatten();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  params.store.unflatten(best_flat);
  return result;
}

namespace {

nlohmann::ordered_json config_to_json(const NetConfig& c) {
  return {{"d", c.d},
          {"n_heads", c.n_heads},
          {"n_hist_blocks", c.n_hist_blocks},
          {"n_joint_blocks", c.n_joint_blocks},
          {"d_flow", c.d_flow},
          {"n_flow_layers", c.n_flow_layers},
          {"n_budget", c.n_budget},
          {"w_mse", c.w_mse},
          {"w_uce", c.w_uce},
          {"lambda_ent", c.lambda_ent},
          {"agent_cap", c.agent_cap},
          {"K", c.K},
          {"H", c.H},
          {"F", c.F},
          {"dt", c.dt},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience}};
}

NetConfig config_from_json(const nlohmann::ordered_json& j) {
  NetConfig c;
  c.d = j.at("d");
  c.n_heads = j.at("n_heads");
  c.n_hist_blocks = j.at("n_hist_blocks");
  c.n_joint_blocks = j.at("n_joint_blocks");
  c.d_flow = j.at("d_flow");
  c.n_flow_layers = j.at("n_flow_layers");
  c.n_budget = j.at("n_budget");
  c.w_mse = j.at("w_mse");
  c.w_uce = j.at("w_uce");
  c.lambda_ent = j.at("lambda_ent");
  c.agent_cap = j.at("agent_cap");
  c.K = j.at("K");
  c.H = j.at("H");
  c.F = j.at("F");
  c.dt = j.at("dt");
  c.learning_rate = j.at("learning_rate");
  c.batch_size = j.at("batch_size");
  c.max_epochs = j.at("max_epochs");
  c.patience = j.at("patience");
  return c;
}

}  // namespace

void save_checkpoint(const NetParams& params, const std::string& path) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["config"] = config_to_json(params.config);
  j["init_seed"] = params.init_seed;
  j["flat_params"] = params.store.flatten();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump() << '\n';
}

NetParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::ordered_json j;
  in >> j;
  if (j.at("version").get<int>() != 1) {
    throw InvariantError("unsupported checkpoint version");
  }
  NetParams params = init_params(config_from_json(j.at("config")),
                                 j.value("init_seed", std::uint64_t{0}));
  params.store.unflatten(j.at("flat_params").get<std::vector<double>>());
  return params;
}

void write_loss_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss log: " + path);
  out << "epoch,train_mse,train_uce,val_total\n";
  for (const auto& row : log) {
    out << row.epoch << ',' << row.train_mse << ',' << row.train_uce << ','
        << row.val_total << '\n';
  }
}

ad::Matrix run_attention(const ad::Matrix& queries, const ad::Matrix& keys_values,
                         const ad::Matrix& wq, const ad::Matrix& wk,
                         const ad::Matrix& wv, const ad::Matrix& wo, int n_heads) {
  NetParams dummy;  // empty store; weights are fed in as leaves
  Forward f(dummy);
  AttnIds ids;
  ids.wq = static_cast<int>(f.pv.size());
  f.pv.push_back(f.tape.leaf(wq));
  ids.wk = static_cast<int>(f.pv.size());
  f.pv.push_back(f.tape.leaf(wk));
  ids.wv = static_cast<int>(f.pv.size());
  f.pv.push_back(f.tape.leaf(wv));
  ids.wo = static_cast<int>(f.pv.size());
  f.pv.push_back(f.tape.leaf(wo));
  Var q = f.tape.leaf(queries);
  Var kv = f.tape.leaf(keys_values);
  return attention(f, q, kv, ids, n_heads).val();
}

}  // namespace rf::net
