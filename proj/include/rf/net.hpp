// The learned planner: a factorized-attention encoder over scene context
// and candidate futures, a per-candidate regression head, and a latent
// radial-flow density head that converts candidate latents into evidence
// pseudo-counts. Training runs on the in-repo reverse-mode tape.
#pragma once

#include <random>

#include "rf/ad.hpp"
#include "rf/anchors.hpp"

namespace rf::net {

struct NetConfig {
  int d{64};            // latent width, divisible by n_heads
  int n_heads{2};
  int n_hist_blocks{2};
  int n_joint_blocks{2};
  int d_flow{8};        // flow latent width, >= 2
  int n_flow_layers{6};
  double n_budget{1000.0};  // evidence budget, set to the training-set size
  double w_mse{1.0};
  double w_uce{1.0};
  double lambda_ent{1e-5};
  int agent_cap{8};     // nearest agents kept, ego excluded
  int K{40};            // candidate count, shared with the RH planner
  int H{4};
  int F{6};
  double dt{0.5};
  // optimizer
  double learning_rate{1e-3};
  int batch_size{32};
  int max_epochs{200};
  int patience{10};

  void validate() const;
};

/// Named parameter tensors with a flat view for the optimizer and for
/// finite-difference checks.
class ParamStore {
 public:
  int add(std::string name, int rows, int cols, double init_scale, std::mt19937_64& rng);
  int add_zeros(std::string name, int rows, int cols);

  int count() const { return static_cast<int>(entries_.size()); }
  const ad::Matrix& value(int i) const { return entries_[static_cast<std::size_t>(i)].value; }
  ad::Matrix& value(int i) { return entries_[static_cast<std::size_t>(i)].value; }
  const std::string& name(int i) const { return entries_[static_cast<std::size_t>(i)].name; }

  std::size_t flat_size() const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

 private:
  struct Entry {
    std::string name;
    ad::Matrix value;
  };
  std::vector<Entry> entries_;
};

struct NetParams {
  NetConfig config;
  ParamStore store;
  std::uint64_t init_seed{0};
};

/// Fresh parameters; deterministic in (config, seed).
NetParams init_params(const NetConfig& config, std::uint64_t seed);

struct NetOutput {
  // error_traces[k] is an F x 2 matrix of per-step refinements (meters).
  std::vector<ad::Matrix> error_traces;
  std::vector<double> evidence;               // K positive reals
  std::vector<std::vector<double>> latents;   // K x d_flow
};

/// Per-candidate encoder features, shape [H+1+F, d] each, plus the
/// pooled map summary consumed by the evidence head.
struct EncodedScene {
  std::vector<ad::Matrix> candidate_features;
  ad::Matrix map_summary;  // [1, d]
};

EncodedScene encode(const Scene& scene, const anchors::AnchorSet& anchor_set,
                    const NetParams& params);
NetOutput decode(const EncodedScene& features, const NetParams& params);
NetOutput infer(const Scene& scene, const anchors::AnchorSet& anchor_set,
                const NetParams& params);

/// Index of the anchor closest to the ground-truth future (squared L2).
int closest_anchor(const anchors::AnchorSet& anchor_set, const Trajectory& ego_future);

/// Masked MSE on the refinement of the closest mode.
double loss_mse(const NetOutput& output, const anchors::AnchorSet& anchor_set,
                const Trajectory& ego_future);

/// BCE on the evidence-normalized marginal minus the Dirichlet-entropy
/// reward.
double loss_uce(const NetOutput& output, int k_star, double lambda_ent);

/// Log-density of a flow latent under the current flow parameters.
double flow_log_density(const NetParams& params, const std::vector<double>& z);

/// Total training loss for a set of scenes, as a function of the flat
/// parameter vector. Exposed for gradient checking.
double total_loss(NetParams& params, const std::vector<Scene>& scenes,
                  const anchors::BicycleLimits& limits);

/// Same loss plus its gradient through the tape.
double total_loss_grad(NetParams& params, const std::vector<Scene>& scenes,
                       const anchors::BicycleLimits& limits, std::vector<double>& grad);

struct TrainLogRow {
  int epoch{0};
  double train_mse{0.0};
  double train_uce{0.0};
  double val_total{0.0};
};

struct TrainResult {
  NetParams params;
  std::vector<TrainLogRow> log;
  bool diverged{false};
  int best_epoch{-1};
};

/// Adam training with early stopping on validation loss. Deterministic
/// under a fixed seed. On divergence the last finite checkpoint is kept.
TrainResult train(const Dataset& train_data, const Dataset& val_data,
                  const NetConfig& config, std::uint64_t seed,
                  const anchors::BicycleLimits& limits = {});

void save_checkpoint(const NetParams& params, const std::string& path);
NetParams load_checkpoint(const std::string& path);

void write_loss_log(const std::vector<TrainLogRow>& log, const std::string& path);

/// Multi-head attention built from tape ops with explicit weights;
/// exposed so tests can compare it against a naive implementation.
ad::Matrix run_attention(const ad::Matrix& queries, const ad::Matrix& keys_values,
                         const ad::Matrix& wq, const ad::Matrix& wk,
                         const ad::Matrix& wv, const ad::Matrix& wo, int n_heads);

}  // namespace rf::net
