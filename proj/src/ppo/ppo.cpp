#include "clrm/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clrm/common/errors.hpp"

namespace clrm::ppo {

using namespace clrm::nn;

void PPOConfig::validate() const {
  if (iterations < 1) throw ConfigError("ppo: iterations must be positive");
  if (epochs < 1) throw ConfigError("ppo: epochs must be positive");
  if (minibatch < 1) throw ConfigError("ppo: minibatch must be positive");
  if (!(clip > 0)) throw ConfigError("ppo: clip must be positive");
  if (!(gamma > 0 && gamma <= 1)) throw ConfigError("ppo: gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0 && gae_lambda <= 1)) throw ConfigError("ppo: gae_lambda must lie in [0, 1]");
  if (!(lr_first > 0) || !(lr_last > 0)) throw ConfigError("ppo: learning rates must be positive");
  if (!(reward_scale > 0)) throw ConfigError("ppo: reward_scale must be positive");
  if (episodes_per_iteration < 1) throw ConfigError("ppo: episodes_per_iteration must be positive");
  if (termination_warmup < 0) throw ConfigError("ppo: termination_warmup must be non-negative");
  if (eval_every < 1) throw ConfigError("ppo: eval_every must be positive");
  if (!(max_failed_fraction >= 0 && max_failed_fraction < 1)) throw ConfigError("ppo: max_failed_fraction in [0, 1)");
}

Json to_json(const PPOConfig& c) {
  return Json{{"iterations", c.iterations},
              {"epochs", c.epochs},
              {"minibatch", c.minibatch},
              {"clip", c.clip},
              {"lr_first", c.lr_first},
              {"lr_last", c.lr_last},
              {"gae_lambda", c.gae_lambda},
              {"gamma", c.gamma},
              {"entropy_coeff", c.entropy_coeff},
              {"value_coeff", c.value_coeff},
              {"reward_scale", c.reward_scale},
              {"episodes_per_iteration", c.episodes_per_iteration},
              {"termination_warmup", c.termination_warmup},
              {"eval_every", c.eval_every},
              {"max_failed_fraction", c.max_failed_fraction}};
}

PPOConfig ppo_from_json(const Json& j, PPOConfig c) {
  require_known_keys(j,
                     {"iterations", "epochs", "minibatch", "clip", "lr_first", "lr_last", "gae_lambda", "gamma",
                      "entropy_coeff", "value_coeff", "reward_scale", "episodes_per_iteration",
                      "termination_warmup", "eval_every", "max_failed_fraction"},
                     "ppo");
  try {
    read_optional(j, "iterations", c.iterations);
    read_optional(j, "epochs", c.epochs);
    read_optional(j, "minibatch", c.minibatch);
    read_optional(j, "clip", c.clip);
    read_optional(j, "lr_first", c.lr_first);
    read_optional(j, "lr_last", c.lr_last);
    read_optional(j, "gae_lambda", c.gae_lambda);
    read_optional(j, "gamma", c.gamma);
    read_optional(j, "entropy_coeff", c.entropy_coeff);
    read_optional(j, "value_coeff", c.value_coeff);
    read_optional(j, "reward_scale", c.reward_scale);
    read_optional(j, "episodes_per_iteration", c.episodes_per_iteration);
    read_optional(j, "termination_warmup", c.termination_warmup);
    read_optional(j, "eval_every", c.eval_every);
    read_optional(j, "max_failed_fraction", c.max_failed_fraction);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("ppo: ") + e.what());
  }
  c.validate();
  return c;
}

double Trajectory::npv() const {
  double s = 0.0;
  for (const auto& st : steps) s += st.reward;
  return s;
}

void Trajectory::validate() const {
  if (steps.empty() || steps.size() > 19) throw ArgumentError("trajectory: needs 1 to 19 steps");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    if (!std::isfinite(s.reward)) throw ArgumentError("trajectory: non-finite reward");
    if (s.raw.size() != action_rows.size() || s.action.size() != action_rows.size()) {
      throw ArgumentError("trajectory: action length differs from the well count");
    }
    if (s.done != (i + 1 == steps.size())) throw ArgumentError("trajectory: done flag must mark only the last step");
  }
}

Advantages compute_gae(const Trajectory& t, double gamma, double lambda, double reward_scale) {
  const std::size_t n = t.steps.size();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const auto& s = t.steps[i];
    const bool terminal = s.done || i + 1 == n;
    const double next_value = terminal ? 0.0 : t.steps[i + 1].value;
    const double delta = s.reward * reward_scale + gamma * next_value - s.value;
    running = delta + (terminal ? 0.0 : gamma * lambda * running);
    out.advantages[i] = running;
    out.returns[i] = running + s.value;
  }
  return out;
}

void normalize_advantages(std::vector<double>& a) {
  if (a.empty()) return;
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  var /= n;
  const double sd = std::sqrt(var);
  for (double& x : a) x = sd > 0 ? (x - mean) / sd : 0.0;
}

double clipped_objective(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

Tensor surrogate_loss(const Tensor& ratio, const std::vector<double>& advantages, double clip) {
  const int b = ratio.size();
  if (static_cast<int>(advantages.size()) != b) throw ArgumentError("surrogate_loss: one advantage per ratio");
  const Tensor a = Tensor::constant(ratio.shape(), Eigen::Map<const Eigen::VectorXd>(advantages.data(), b));
  return scale(mean(minimum(mul(ratio, a), mul(clamp(ratio, 1.0 - clip, 1.0 + clip), a))), -1.0);
}

namespace {

struct FlatSample {
  const Trajectory* traj;
  const StepRecord* step;
  double advantage;
  double ret;
};

}  // namespace

UpdateStats ppo_update(policy::Policy& net, Adam& adam, const std::vector<Trajectory>& batch, const PPOConfig& cfg,
                       double lr, std::mt19937_64& rng) {
  std::vector<FlatSample> samples;
  std::vector<double> adv;
  for (const auto& t : batch) {
    const Advantages a = compute_gae(t, cfg.gamma, cfg.gae_lambda, cfg.reward_scale);
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      samples.push_back({&t, &t.steps[i], 0.0, a.returns[i]});
      adv.push_back(a.advantages[i]);
    }
  }
  if (samples.empty()) throw ArgumentError("ppo_update: empty batch");
  if (cfg.minibatch > static_cast<int>(samples.size())) {
    throw ArgumentError("ppo_update: minibatch " + std::to_string(cfg.minibatch) + " exceeds " +
                        std::to_string(samples.size()) + " collected steps");
  }
  normalize_advantages(adv);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].advantage = adv[i];

  const Eigen::VectorXd saved = net.params().flat_values();
  const auto saved_t = adam.step_count();
  const auto saved_m = adam.first_moments();
  const auto saved_v = adam.second_moments();

  UpdateStats stats;
  std::vector<std::size_t> order(samples.size());
  const int tau = net.config().tau;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatch);
      const int b = static_cast<int>(end - start);
      policy::PolicyBatch mb;
      mb.memory_slots = tau;
      std::vector<double> raw, old_logp(b), advs(b), rets(b);
      for (int i = 0; i < b; ++i) {
        const FlatSample& s = samples[order[start + i]];
        mb.inputs.push_back(s.step->observation);
        mb.memory.push_back(s.step->memory);
        mb.memory_valid.push_back(s.step->memory_valid);
        mb.action_rows.push_back(s.traj->action_rows);
        raw.insert(raw.end(), s.step->raw.begin(), s.step->raw.end());
        old_logp[i] = s.step->logp;
        advs[i] = s.advantage;
        rets[i] = s.ret;
      }
      auto constant = [b](const std::vector<double>& v) {
        return Tensor::constant({b}, Eigen::Map<const Eigen::VectorXd>(v.data(), b));
      };
      const policy::PolicyOutput out = net.forward(mb);
      const Tensor ratio = nn::exp(sub(policy::log_prob(out, raw), constant(old_logp)));
      const Tensor policy_loss = surrogate_loss(ratio, advs, cfg.clip);
      const Tensor value_loss = mean(square(sub(out.value, constant(rets))));
      const Tensor ent = mean(policy::entropy(out));
      const Tensor loss = sub(add(policy_loss, scale(value_loss, cfg.value_coeff)), scale(ent, cfg.entropy_coeff));

      if (epoch == 0 && start == 0) {
        stats.first_ratio_deviation = (ratio.value().array() - 1.0).abs().maxCoeff();
      }
      if (!std::isfinite(loss.item())) {
        net.params().set_flat_values(saved);
        adam.restore(saved_t, saved_m, saved_v);
        stats.aborted = true;
        stats.abort_reason = "non-finite loss in epoch " + std::to_string(epoch);
        return stats;
      }
      stats.policy_loss += policy_loss.item();
      stats.value_loss += value_loss.item();
      stats.entropy += ent.item();
      stats.clip_fraction += ((ratio.value().array() - 1.0).abs() > cfg.clip).cast<double>().mean();
      ++stats.minibatches;
      net.params().zero_grad();
      loss.backward();
      adam.step(lr);
    }
  }
  stats.policy_loss /= stats.minibatches;
  stats.value_loss /= stats.minibatches;
  stats.entropy /= stats.minibatches;
  stats.clip_fraction /= stats.minibatches;
  return stats;
}

}  // namespace clrm::ppo
