#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "clrm/common/json_util.hpp"
#include "clrm/nn/ops.hpp"
#include "clrm/nn/params.hpp"

namespace clrm::policy {

/// dense: one asset, a dense layer produces (mu, log sigma) for its wells.
/// embedding: several assets, per-well rows of two tables are dotted with eta.
enum class HeadKind { dense, embedding };
/// gru: GRU-type gate on each sublayer output. residual: x + y, used to check the ungated reduction.
enum class GateKind { gru, residual };

struct PolicyConfig {
  HeadKind head = HeadKind::embedding;
  int input_width = 0;   ///< columns of the global input
  int n_d = 4;           ///< rows (report intervals) of the global input
  int wells = 0;         ///< dense: wells of the asset; embedding: total wells over all assets
  int n_m = 128;
  int heads = 4;
  int tau = 5;
  int layers = 2;
  int conv_filters = 64;
  int conv_width = 3;
  int mlp_hidden = 128;
  int value_hidden = 64;
  GateKind gate = GateKind::gru;
  double gate_bias = 2.0;
  double log_sigma_min = -5.0;
  double log_sigma_max = 1.0;
  std::uint64_t seed = 0;

  /// Single-asset network: dense head, MLP hidden width 64.
  static PolicyConfig single_asset(int input_width, int wells, std::uint64_t seed);
  /// Multi-asset network: embedding heads, MLP hidden width 128.
  static PolicyConfig multi_asset(int input_width, int total_wells, std::uint64_t seed);

  void validate() const;
};

Json to_json(const PolicyConfig& c);
PolicyConfig policy_from_json(const Json& j);

/// The last tau policy states of one episode, oldest first, zero before they exist.
class Memory {
 public:
  Memory(int tau, int n_m);

  void push(const Eigen::VectorXd& state);
  /// tau x n_m row-major.
  const Eigen::VectorXd& slots() const { return slots_; }
  /// Number of trailing slots that hold real states.
  int valid() const { return valid_; }
  int tau() const { return tau_; }

 private:
  int tau_;
  int n_m_;
  int valid_ = 0;
  Eigen::VectorXd slots_;
};

/// One decision for each sample of a batch.
struct PolicyBatch {
  /// Global inputs, each n_d x input_width.
  std::vector<Eigen::MatrixXd> inputs;
  /// Memory per sample, slots x n_m row-major, oldest first. Every sample uses
  /// the same slot count (normally tau).
  std::vector<Eigen::VectorXd> memory;
  int memory_slots = 0;
  /// Valid trailing memory slots per sample; the leading slots are masked.
  std::vector<int> memory_valid;
  /// Action rows per sample: 0-based well index within the head. For the
  /// embedding head these are global well IDs minus one.
  std::vector<std::vector<int>> action_rows;

  int size() const { return static_cast<int>(inputs.size()); }
};

struct PolicyOutput {
  nn::Tensor state;      ///< [B, n_m], the new policy state (also eta)
  nn::Tensor mu;         ///< [P], one entry per (sample, well) pair
  nn::Tensor log_sigma;  ///< [P], clamped
  nn::Tensor value;      ///< [B]
  std::vector<int> pair_sample;  ///< sample of each pair
  std::vector<int> pair_offset;  ///< first pair of each sample, plus a final end entry
};

class Policy {
 public:
  explicit Policy(PolicyConfig config);

  const PolicyConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  PolicyOutput forward(const PolicyBatch& batch) const;

  /// Temporal CNN: x [B, n_d, W] -> xi [B, n_m].
  nn::Tensor encode(const nn::Tensor& x) const;
  /// Gated transformer over memory [B, slots, n_m] and the current token xi [B, n_m].
  nn::Tensor transform(const nn::Tensor& memory, const nn::Tensor& xi, const std::vector<int>& leading_masked) const;
  /// Action distribution for eta [B, n_m] and the rows of each sample.
  void heads(const nn::Tensor& eta, const std::vector<std::vector<int>>& rows, PolicyOutput& out) const;
  nn::Tensor value(const nn::Tensor& eta) const;

  /// Packs inputs into a [B, n_d, W] constant; throws on width mismatch.
  nn::Tensor pack_inputs(const std::vector<Eigen::MatrixXd>& inputs) const;

 private:
  nn::Tensor p(const std::string& name) const { return params_.get(name); }
  nn::Tensor gate(const std::string& prefix, const nn::Tensor& x, const nn::Tensor& y) const;
  void add_gate(const std::string& prefix, std::mt19937_64& rng);

  PolicyConfig config_;
  nn::ParamStore params_;
};

/// Sinusoidal encodings of the distances slots-1, ..., 0 to the current token: [slots, width].
Eigen::VectorXd relative_encoding(int slots, int width);

struct Sample {
  std::vector<double> raw;     ///< pre-clip Gaussian draw
  std::vector<double> action;  ///< clipped to [-1, 1]
  double logp = 0.0;           ///< at the pre-clip draw
};

/// Diagonal Gaussian sample; deterministic mode returns clip(mu) and its log density at mu.
Sample sample_action(std::span<const double> mu, std::span<const double> log_sigma, std::mt19937_64& rng,
                     bool deterministic);
double gaussian_logp(std::span<const double> x, std::span<const double> mu, std::span<const double> log_sigma);

/// Per-sample log-probabilities of raw draws x under the output's distributions -> [B].
nn::Tensor log_prob(const PolicyOutput& out, const std::vector<double>& raw);
/// Per-sample entropies -> [B].
nn::Tensor entropy(const PolicyOutput& out);

}  // namespace clrm::policy
