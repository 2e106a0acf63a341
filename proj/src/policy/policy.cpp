#include "clrm/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "clrm/common/errors.hpp"

namespace clrm::policy {

using namespace clrm::nn;

PolicyConfig PolicyConfig::single_asset(int input_width, int wells, std::uint64_t seed) {
  PolicyConfig c;
  c.head = HeadKind::dense;
  c.input_width = input_width;
  c.wells = wells;
  c.mlp_hidden = 64;
  c.seed = seed;
  return c;
}

PolicyConfig PolicyConfig::multi_asset(int input_width, int total_wells, std::uint64_t seed) {
  PolicyConfig c;
  c.head = HeadKind::embedding;
  c.input_width = input_width;
  c.wells = total_wells;
  c.mlp_hidden = 128;
  c.seed = seed;
  return c;
}

void PolicyConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string("policy: ") + name + " must be positive");
  };
  positive(input_width, "input_width");
  positive(n_d, "n_d");
  positive(wells, "wells");
  positive(n_m, "n_m");
  positive(heads, "heads");
  positive(tau, "tau");
  positive(layers, "layers");
  positive(conv_filters, "conv_filters");
  positive(mlp_hidden, "mlp_hidden");
  positive(value_hidden, "value_hidden");
  if (conv_width < 1 || conv_width % 2 == 0) throw ConfigError("policy: conv_width must be odd");
  if (n_m % heads != 0 || n_m % 2 != 0) throw ConfigError("policy: n_m must be even and divisible by heads");
  if (!(log_sigma_min < log_sigma_max)) throw ConfigError("policy: log_sigma_min must be below log_sigma_max");
}

Json to_json(const PolicyConfig& c) {
  return Json{{"head", c.head == HeadKind::dense ? "dense" : "embedding"},
              {"input_width", c.input_width},
              {"n_d", c.n_d},
              {"wells", c.wells},
              {"n_m", c.n_m},
              {"heads", c.heads},
              {"tau", c.tau},
              {"layers", c.layers},
              {"conv_filters", c.conv_filters},
              {"conv_width", c.conv_width},
              {"mlp_hidden", c.mlp_hidden},
              {"value_hidden", c.value_hidden},
              {"gate", c.gate == GateKind::gru ? "gru" : "residual"},
              {"gate_bias", c.gate_bias},
              {"log_sigma_min", c.log_sigma_min},
              {"log_sigma_max", c.log_sigma_max},
              {"seed", c.seed}};
}

PolicyConfig policy_from_json(const Json& j) {
  require_known_keys(j,
                     {"head", "input_width", "n_d", "wells", "n_m", "heads", "tau", "layers", "conv_filters",
                      "conv_width", "mlp_hidden", "value_hidden", "gate", "gate_bias", "log_sigma_min",
                      "log_sigma_max", "seed"},
                     "policy");
  PolicyConfig c;
  try {
    std::string head = "embedding", gate = "gru";
    read_optional(j, "head", head);
    read_optional(j, "gate", gate);
    if (head != "dense" && head != "embedding") throw ConfigError("policy: unknown head '" + head + "'");
    if (gate != "gru" && gate != "residual") throw ConfigError("policy: unknown gate '" + gate + "'");
    c.head = head == "dense" ? HeadKind::dense : HeadKind::embedding;
    c.gate = gate == "gru" ? GateKind::gru : GateKind::residual;
    read_optional(j, "input_width", c.input_width);
    read_optional(j, "n_d", c.n_d);
    read_optional(j, "wells", c.wells);
    read_optional(j, "n_m", c.n_m);
    read_optional(j, "heads", c.heads);
    read_optional(j, "tau", c.tau);
    read_optional(j, "layers", c.layers);
    read_optional(j, "conv_filters", c.conv_filters);
    read_optional(j, "conv_width", c.conv_width);
    read_optional(j, "mlp_hidden", c.mlp_hidden);
    read_optional(j, "value_hidden", c.value_hidden);
    read_optional(j, "gate_bias", c.gate_bias);
    read_optional(j, "log_sigma_min", c.log_sigma_min);
    read_optional(j, "log_sigma_max", c.log_sigma_max);
    read_optional(j, "seed", c.seed);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("policy: ") + e.what());
  }
  c.validate();
  return c;
}

Memory::Memory(int tau, int n_m) : tau_(tau), n_m_(n_m), slots_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tau) * n_m)) {
  if (tau < 1 || n_m < 1) throw ArgumentError("memory: tau and n_m must be positive");
}

void Memory::push(const Eigen::VectorXd& state) {
  if (state.size() != n_m_) throw ArgumentError("memory: state has length " + std::to_string(state.size()));
  const Eigen::Index keep = static_cast<Eigen::Index>(tau_ - 1) * n_m_;
  slots_.head(keep) = slots_.tail(keep).eval();
  slots_.tail(n_m_) = state;
  valid_ = std::min(valid_ + 1, tau_);
}

Eigen::VectorXd relative_encoding(int slots, int width) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(slots) * width);
  for (int j = 0; j < slots; ++j) {
    const double d = slots - 1 - j;
    for (int i = 0; i < width / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / width);
      r[j * width + 2 * i] = std::sin(d * freq);
      r[j * width + 2 * i + 1] = std::cos(d * freq);
    }
  }
  return r;
}

void Policy::add_gate(const std::string& prefix, std::mt19937_64& rng) {
  const int n = config_.n_m;
  if (config_.gate == GateKind::residual) return;
  for (const char* m : {"w_r", "u_r", "w_z", "u_z", "w_g", "u_g"}) {
    params_.add(prefix + "." + m, {n, n}, orthogonal_init(n, n, 1.0, rng));
  }
  params_.add(prefix + ".b_g", {n}, Eigen::VectorXd::Constant(n, config_.gate_bias));
}

Policy::Policy(PolicyConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  std::mt19937_64 rng(c.seed);
  auto dense = [&](const std::string& name, int in, int out, double gain, bool bias) {
    params_.add(name + ".w", {in, out}, orthogonal_init(in, out, gain, rng));
    if (bias) params_.add(name + ".b", {out}, Eigen::VectorXd::Zero(out));
  };
  dense("encoder.conv1", c.conv_width * c.input_width, c.conv_filters, 1.0, true);
  dense("encoder.conv2", c.conv_width * c.conv_filters, c.conv_filters, 1.0, true);
  dense("encoder.out", c.conv_filters, c.n_m, 1.0, true);
  for (int l = 0; l < c.layers; ++l) {
    const std::string pre = "transformer" + std::to_string(l);
    params_.add(pre + ".ln1.gain", {c.n_m}, Eigen::VectorXd::Ones(c.n_m));
    params_.add(pre + ".ln1.bias", {c.n_m}, Eigen::VectorXd::Zero(c.n_m));
    for (const char* m : {"q", "k", "v", "r", "o"}) dense(pre + ".attn." + m, c.n_m, c.n_m, 1.0, false);
    params_.add(pre + ".attn.u", {c.n_m}, Eigen::VectorXd::Zero(c.n_m));
    params_.add(pre + ".attn.v_bias", {c.n_m}, Eigen::VectorXd::Zero(c.n_m));
    add_gate(pre + ".gate1", rng);
    params_.add(pre + ".ln2.gain", {c.n_m}, Eigen::VectorXd::Ones(c.n_m));
    params_.add(pre + ".ln2.bias", {c.n_m}, Eigen::VectorXd::Zero(c.n_m));
    dense(pre + ".mlp1", c.n_m, c.mlp_hidden, 1.0, true);
    dense(pre + ".mlp2", c.mlp_hidden, c.n_m, 1.0, true);
    add_gate(pre + ".gate2", rng);
  }
  if (c.head == HeadKind::dense) {
    dense("head.dense", c.n_m, 2 * c.wells, 0.01, true);
  } else {
    const double sd = 1.0 / c.n_m;
    params_.add("head.mu_table", {c.wells, c.n_m}, normal_init(c.wells * c.n_m, sd, rng));
    params_.add("head.sigma_table", {c.wells, c.n_m}, normal_init(c.wells * c.n_m, sd, rng));
  }
  dense("value.hidden", c.n_m, c.value_hidden, 1.0, true);
  dense("value.out", c.value_hidden, 1, 1.0, true);
}

Tensor Policy::pack_inputs(const std::vector<Eigen::MatrixXd>& inputs) const {
  const int b = static_cast<int>(inputs.size()), t = config_.n_d, w = config_.input_width;
  Eigen::VectorXd flat(static_cast<Eigen::Index>(b) * t * w);
  for (int i = 0; i < b; ++i) {
    if (inputs[i].rows() != t || inputs[i].cols() != w) {
      throw ArgumentError("policy: input " + std::to_string(i) + " is " + std::to_string(inputs[i].rows()) + "x" +
                          std::to_string(inputs[i].cols()) + ", network expects " + std::to_string(t) + "x" +
                          std::to_string(w));
    }
    MatrixMap(flat.data() + static_cast<Eigen::Index>(i) * t * w, t, w) = inputs[i];
  }
  return Tensor::constant({b, t, w}, std::move(flat));
}

Tensor Policy::encode(const Tensor& x) const {
  Tensor h = relu(conv1d(x, p("encoder.conv1.w"), p("encoder.conv1.b")));
  h = relu(conv1d(h, p("encoder.conv2.w"), p("encoder.conv2.b")));
  return linear(mean_time(h), p("encoder.out.w"), p("encoder.out.b"));
}

Tensor Policy::gate(const std::string& prefix, const Tensor& x, const Tensor& y) const {
  if (config_.gate == GateKind::residual) return add(x, y);
  const Tensor r = sigmoid(add(linear(y, p(prefix + ".w_r")), linear(x, p(prefix + ".u_r"))));
  const Tensor z = sigmoid(sub(add(linear(y, p(prefix + ".w_z")), linear(x, p(prefix + ".u_z"))), p(prefix + ".b_g")));
  const Tensor h = nn::tanh(add(linear(y, p(prefix + ".w_g")), linear(mul(r, x), p(prefix + ".u_g"))));
  return add(x, mul(z, sub(h, x)));
}

Tensor Policy::transform(const Tensor& memory, const Tensor& xi, const std::vector<int>& leading_masked) const {
  const auto& c = config_;
  const int b = xi.dim(0), n = c.n_m;
  if (memory.rank() != 3 || memory.dim(0) != b || memory.dim(2) != n) {
    throw ArgumentError("policy: memory " + shape_string(memory.shape()) + " does not match state " +
                        shape_string(xi.shape()));
  }
  const int slots = memory.dim(1) + 1;
  const Tensor rel = Tensor::constant({slots, n}, relative_encoding(slots, n));
  Tensor h = xi;
  for (int l = 0; l < c.layers; ++l) {
    const std::string pre = "transformer" + std::to_string(l);
    const Tensor g1 = p(pre + ".ln1.gain"), b1 = p(pre + ".ln1.bias");
    const Tensor seq = reshape(concat_seq(memory, reshape(h, {b, 1, n})), {b * slots, n});
    const Tensor normed = layer_norm(seq, g1, b1);
    const Tensor k = reshape(linear(normed, p(pre + ".attn.k.w")), {b, slots, n});
    const Tensor v = reshape(linear(normed, p(pre + ".attn.v.w")), {b, slots, n});
    const Tensor q = linear(layer_norm(h, g1, b1), p(pre + ".attn.q.w"));
    const Tensor r = linear(rel, p(pre + ".attn.r.w"));
    const Tensor scores = attention_scores(q, k, r, p(pre + ".attn.u"), p(pre + ".attn.v_bias"), c.heads);
    const Tensor weights = masked_softmax(scores, leading_masked, c.heads);
    const Tensor attended = relu(linear(attention_mix(weights, v, c.heads), p(pre + ".attn.o.w")));
    h = gate(pre + ".gate1", h, attended);
    const Tensor normed2 = layer_norm(h, p(pre + ".ln2.gain"), p(pre + ".ln2.bias"));
    const Tensor hidden = relu(linear(normed2, p(pre + ".mlp1.w"), p(pre + ".mlp1.b")));
    h = gate(pre + ".gate2", h, relu(linear(hidden, p(pre + ".mlp2.w"), p(pre + ".mlp2.b"))));
  }
  return h;
}

void Policy::heads(const Tensor& eta, const std::vector<std::vector<int>>& rows, PolicyOutput& out) const {
  const auto& c = config_;
  const int b = eta.dim(0);
  if (static_cast<int>(rows.size()) != b) throw ArgumentError("policy: one row list per sample is required");
  out.pair_sample.clear();
  out.pair_offset.assign(1, 0);
  std::vector<int> flat_rows;
  for (int i = 0; i < b; ++i) {
    for (int r : rows[i]) {
      if (r < 0 || r >= c.wells) {
        throw ArgumentError("policy: well row " + std::to_string(r) + " outside [0, " + std::to_string(c.wells) + ")");
      }
      out.pair_sample.push_back(i);
      flat_rows.push_back(c.head == HeadKind::dense ? i * c.wells + r : r);
    }
    out.pair_offset.push_back(static_cast<int>(out.pair_sample.size()));
  }
  const int pairs = static_cast<int>(flat_rows.size());
  Tensor mu, raw_sigma;
  if (c.head == HeadKind::dense) {
    const Tensor full = linear(eta, p("head.dense.w"), p("head.dense.b"));
    auto pick = [&](int start) {
      const Tensor part = reshape(slice_cols(full, start, c.wells), {b * c.wells, 1});
      return reshape(gather_rows(part, flat_rows), {pairs});
    };
    mu = pick(0);
    raw_sigma = pick(c.wells);
  } else {
    const Tensor eta_rep = gather_rows(eta, out.pair_sample);
    mu = rowwise_dot(gather_rows(p("head.mu_table"), flat_rows), eta_rep);
    raw_sigma = rowwise_dot(gather_rows(p("head.sigma_table"), flat_rows), eta_rep);
  }
  out.mu = mu;
  out.log_sigma = clamp(raw_sigma, c.log_sigma_min, c.log_sigma_max);
}

Tensor Policy::value(const Tensor& eta) const {
  const Tensor h = relu(linear(eta, p("value.hidden.w"), p("value.hidden.b")));
  return reshape(linear(h, p("value.out.w"), p("value.out.b")), {eta.dim(0)});
}

PolicyOutput Policy::forward(const PolicyBatch& batch) const {
  const auto& c = config_;
  const int b = batch.size();
  if (b == 0) throw ArgumentError("policy: empty batch");
  if (static_cast<int>(batch.memory.size()) != b || static_cast<int>(batch.memory_valid.size()) != b ||
      static_cast<int>(batch.action_rows.size()) != b) {
    throw ArgumentError("policy: batch fields have inconsistent lengths");
  }
  const int slots = batch.memory_slots;
  Eigen::VectorXd mem(static_cast<Eigen::Index>(b) * slots * c.n_m);
  std::vector<int> masked(b);
  for (int i = 0; i < b; ++i) {
    if (batch.memory[i].size() != static_cast<Eigen::Index>(slots) * c.n_m) {
      throw ArgumentError("policy: memory of sample " + std::to_string(i) + " has the wrong length");
    }
    if (batch.memory_valid[i] < 0 || batch.memory_valid[i] > slots) {
      throw ArgumentError("policy: memory_valid outside [0, slots]");
    }
    mem.segment(static_cast<Eigen::Index>(i) * slots * c.n_m, static_cast<Eigen::Index>(slots) * c.n_m) =
        batch.memory[i];
    masked[i] = slots - batch.memory_valid[i];
  }
  PolicyOutput out;
  const Tensor xi = encode(pack_inputs(batch.inputs));
  out.state = transform(Tensor::constant({b, slots, c.n_m}, std::move(mem)), xi, masked);
  heads(out.state, batch.action_rows, out);
  out.value = value(out.state);
  return out;
}

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

double gaussian_logp(std::span<const double> x, std::span<const double> mu, std::span<const double> log_sigma) {
  if (x.size() != mu.size() || mu.size() != log_sigma.size()) throw ArgumentError("gaussian_logp: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mu[i]) / std::exp(log_sigma[i]);
    s += -0.5 * z * z - log_sigma[i] - kHalfLog2Pi;
  }
  return s;
}

Sample sample_action(std::span<const double> mu, std::span<const double> log_sigma, std::mt19937_64& rng,
                     bool deterministic) {
  if (mu.size() != log_sigma.size()) throw ArgumentError("sample_action: length mismatch");
  Sample s;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double x = deterministic ? mu[i] : mu[i] + std::exp(log_sigma[i]) * normal(rng);
    s.raw.push_back(x);
    s.action.push_back(std::clamp(x, -1.0, 1.0));
  }
  s.logp = gaussian_logp(s.raw, mu, log_sigma);
  return s;
}

Tensor log_prob(const PolicyOutput& out, const std::vector<double>& raw) {
  const int pairs = out.mu.size();
  if (static_cast<int>(raw.size()) != pairs) throw ArgumentError("log_prob: one draw per (sample, well) pair required");
  const Tensor x = Tensor::constant({pairs}, Eigen::Map<const Eigen::VectorXd>(raw.data(), pairs));
  const Tensor z = mul(sub(x, out.mu), nn::exp(scale(out.log_sigma, -1.0)));
  const Tensor per = add_scalar(sub(scale(square(z), -0.5), out.log_sigma), -kHalfLog2Pi);
  return segment_sum(per, out.pair_sample, static_cast<int>(out.pair_offset.size()) - 1);
}

Tensor entropy(const PolicyOutput& out) {
  return segment_sum(add_scalar(out.log_sigma, 0.5 + kHalfLog2Pi), out.pair_sample,
                     static_cast<int>(out.pair_offset.size()) - 1);
}

}  // namespace clrm::policy
