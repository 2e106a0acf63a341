#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "clrm/common/errors.hpp"
#include "clrm/env/environment.hpp"
#include "clrm/geostat/asset.hpp"
#include "clrm/policy/policy.hpp"

using namespace clrm;
using namespace clrm::nn;
using namespace clrm::policy;

namespace {

PolicyConfig tiny_config(HeadKind head, std::uint64_t seed) {
  PolicyConfig c;
  c.head = head;
  c.input_width = 7;
  c.wells = 5;
  c.n_m = 8;
  c.heads = 2;
  c.tau = 3;
  c.conv_filters = 6;
  c.mlp_hidden = 10;
  c.value_hidden = 4;
  c.seed = seed;
  return c;
}

PolicyBatch random_batch(const PolicyConfig& c, int b, std::mt19937_64& rng, int valid = -1) {
  std::uniform_real_distribution<double> unit(0, 1);
  std::uniform_int_distribution<int> slots(0, c.tau);
  PolicyBatch batch;
  batch.memory_slots = c.tau;
  for (int i = 0; i < b; ++i) {
    Eigen::MatrixXd x(c.n_d, c.input_width);
    for (int r = 0; r < x.rows(); ++r)
      for (int col = 0; col < x.cols(); ++col) x(r, col) = unit(rng);
    batch.inputs.push_back(x);
    batch.memory.push_back(normal_init(c.tau * c.n_m, 1.0, rng));
    batch.memory_valid.push_back(valid >= 0 ? valid : slots(rng));
    std::vector<int> rows;
    for (int w = 0; w < c.wells; ++w)
      if (c.head == HeadKind::dense || unit(rng) < 0.6) rows.push_back(w);
    if (rows.empty()) rows.push_back(0);
    batch.action_rows.push_back(rows);
  }
  return batch;
}

std::int64_t expected_count(const PolicyConfig& c) {
  const std::int64_t n = c.n_m, f = c.conv_filters, k = c.conv_width, h = c.mlp_hidden;
  const std::int64_t encoder = k * c.input_width * f + f + k * f * f + f + f * n + n;
  const std::int64_t gate = c.gate == GateKind::gru ? 6 * n * n + n : 0;
  const std::int64_t layer = 2 * n + 5 * n * n + 2 * n + gate + 2 * n + n * h + h + h * n + n + gate;
  const std::int64_t head = c.head == HeadKind::dense ? n * 2 * c.wells + 2 * c.wells : 2 * c.wells * n;
  const std::int64_t value = n * c.value_hidden + c.value_hidden + c.value_hidden + 1;
  return encoder + c.layers * layer + head + value;
}

std::vector<geostat::AssetSpec> table1_assets() {
  return {geostat::table1_asset('A'), geostat::table1_asset('B'), geostat::table1_asset('C'),
          geostat::table1_asset('D')};
}

Eigen::VectorXd layer_norm_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& b) {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  return ((x.array() - mu) / std::sqrt(var + 1e-5)).matrix().cwiseProduct(g) + b;
}

Eigen::MatrixXd as_matrix(const Tensor& t) { return t.matrix(); }

}  // namespace

TEST(Policy, OutputShapesForTable1Assets) {
  const auto assets = table1_assets();
  const env::GlobalLayout layout(assets);
  const auto ids = env::build_well_ids(assets);
  Policy net(PolicyConfig::multi_asset(layout.width(), ids.total, 1));
  std::mt19937_64 rng(2);
  PolicyBatch batch = random_batch(net.config(), 4, rng, 0);
  for (int a = 0; a < 4; ++a) {
    batch.action_rows[a].clear();
    for (int id : ids.asset(a)) batch.action_rows[a].push_back(id - 1);
  }
  const PolicyOutput out = net.forward(batch);
  EXPECT_EQ(out.state.shape(), (Shape{4, 128}));
  EXPECT_EQ(out.value.shape(), (Shape{4}));
  for (int a = 0; a < 4; ++a) {
    const int n = out.pair_offset[a + 1] - out.pair_offset[a];
    EXPECT_EQ(n, assets[a].well_count());
  }
  EXPECT_EQ(out.pair_offset[2] - out.pair_offset[1], 16);  // asset B: 12 producers + 4 injectors
  EXPECT_EQ(out.mu.size(), out.log_sigma.size());
  EXPECT_TRUE(out.mu.value().allFinite());
  EXPECT_TRUE(out.value.value().allFinite());
}

TEST(Policy, WidthMismatchRejected) {
  Policy net(tiny_config(HeadKind::dense, 1));
  std::mt19937_64 rng(3);
  PolicyBatch batch = random_batch(net.config(), 2, rng);
  batch.inputs[1] = Eigen::MatrixXd::Zero(4, 8);
  EXPECT_THROW(net.forward(batch), ArgumentError);
  batch = random_batch(net.config(), 2, rng);
  batch.action_rows[0] = {5};
  EXPECT_THROW(net.forward(batch), ArgumentError);
}

TEST(Policy, ParameterCountMatchesLayerFormula) {
  const auto assets = table1_assets();
  const env::GlobalLayout layout(assets);
  const PolicyConfig global = PolicyConfig::multi_asset(layout.width(), 50, 1);
  EXPECT_EQ(Policy(global).params().parameter_count(), expected_count(global));
  for (const auto& asset : assets) {
    const env::GlobalLayout single({asset});
    const PolicyConfig c = PolicyConfig::single_asset(single.width(), asset.well_count(), 1);
    const std::int64_t count = Policy(c).params().parameter_count();
    EXPECT_EQ(count, expected_count(c));
    RecordProperty("single_asset_" + asset.name, std::to_string(count));
  }
  RecordProperty("global", std::to_string(expected_count(global)));
}

TEST(Policy, ZeroInputEncodesToBiasConstant) {
  Policy net(PolicyConfig::single_asset(12, 4, 5));
  const Tensor zeros = net.pack_inputs({Eigen::MatrixXd::Zero(4, 12), Eigen::MatrixXd::Zero(4, 12)});
  const Tensor xi = net.encode(zeros);
  // Conv biases start at zero, so a null block maps to the output bias.
  const Eigen::MatrixXd m = as_matrix(xi);
  EXPECT_EQ(m.row(0), m.row(1));
  EXPECT_EQ(m.row(0).transpose(), net.params().get("encoder.out.b").value());
  EXPECT_EQ(xi.shape(), (Shape{2, 128}));
}

TEST(Policy, ConvWeightPermutationChangesOutput) {
  Policy net(PolicyConfig::single_asset(12, 4, 6));
  std::mt19937_64 rng(6);
  Eigen::MatrixXd x(4, 12);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = std::uniform_real_distribution<double>(0, 1)(rng);
  const Tensor input = net.pack_inputs({x});
  const Eigen::VectorXd before = net.encode(input).value();
  auto& w = net.params().get("encoder.conv1.w").node()->value;
  MatrixMap m(w.data(), 3 * 12, 64);
  m.col(0).swap(m.col(1));
  EXPECT_GT((net.encode(input).value() - before).norm(), 1e-8);
}

TEST(Policy, DegenerateGateReducesToMlpPath) {
  PolicyConfig c = PolicyConfig::multi_asset(9, 3, 7);
  c.gate = GateKind::residual;
  Policy net(c);
  for (int l = 0; l < c.layers; ++l) {
    net.params().get("transformer" + std::to_string(l) + ".attn.o.w").node()->value.setZero();
  }
  std::mt19937_64 rng(7);
  PolicyBatch batch = random_batch(c, 3, rng);
  const PolicyOutput out = net.forward(batch);
  const Tensor xi = net.encode(net.pack_inputs(batch.inputs));
  for (int b = 0; b < 3; ++b) {
    Eigen::VectorXd h = as_matrix(xi).row(b).transpose();
    for (int l = 0; l < c.layers; ++l) {
      const std::string pre = "transformer" + std::to_string(l);
      auto val = [&](const std::string& n) { return net.params().get(pre + n).value(); };
      auto mat = [&](const std::string& n) { return net.params().get(pre + n).matrix(); };
      const Eigen::VectorXd normed = layer_norm_oracle(h, val(".ln2.gain"), val(".ln2.bias"));
      const Eigen::VectorXd hidden = (mat(".mlp1.w").transpose() * normed + val(".mlp1.b")).cwiseMax(0.0);
      h += (mat(".mlp2.w").transpose() * hidden + val(".mlp2.b")).cwiseMax(0.0);
    }
    EXPECT_LT((as_matrix(out.state).row(b).transpose() - h).norm(), 1e-10 * (1 + h.norm()));
  }
}

TEST(Policy, MaskedSlotsMatchTruncatedMemory) {
  const PolicyConfig c = PolicyConfig::multi_asset(9, 3, 8);
  Policy net(c);
  std::mt19937_64 rng(8);
  for (int valid = 0; valid < c.tau; ++valid) {
    PolicyBatch full = random_batch(c, 2, rng, valid);
    PolicyBatch cut = full;
    cut.memory_slots = valid;
    for (int i = 0; i < 2; ++i) {
      cut.memory[i] = full.memory[i].tail(valid * c.n_m);
      cut.memory_valid[i] = valid;
    }
    const PolicyOutput a = net.forward(full), b = net.forward(cut);
    EXPECT_LT((a.state.value() - b.state.value()).norm(), 1e-12 * (1 + a.state.value().norm())) << valid;
    EXPECT_LT((a.mu.value() - b.mu.value()).norm(), 1e-12);
    EXPECT_LT((a.value.value() - b.value.value()).norm(), 1e-12);
  }
}

TEST(Policy, StatesOlderThanTauHaveNoEffect) {
  const PolicyConfig c = tiny_config(HeadKind::dense, 9);
  Policy net(c);
  std::mt19937_64 rng(9);
  Memory m1(c.tau, c.n_m), m2(c.tau, c.n_m);
  m1.push(normal_init(c.n_m, 1.0, rng));
  m2.push(normal_init(c.n_m, 1.0, rng));  // differs only in the oldest state
  PolicyBatch batch = random_batch(c, 1, rng);
  for (int k = 0; k < c.tau; ++k) {
    batch.memory[0] = m1.slots();
    batch.memory_valid[0] = m1.valid();
    const Eigen::VectorXd s = net.forward(batch).state.value();
    m1.push(s);
    m2.push(s);
  }
  EXPECT_EQ(m1.slots(), m2.slots());
  batch.memory[0] = m1.slots();
  const PolicyOutput a = net.forward(batch);
  batch.memory[0] = m2.slots();
  EXPECT_EQ(a.state.value(), net.forward(batch).state.value());
}

TEST(Policy, MemoryRingBuffer) {
  Memory m(3, 2);
  EXPECT_EQ(m.valid(), 0);
  EXPECT_EQ(m.slots(), Eigen::VectorXd::Zero(6));
  for (int i = 1; i <= 4; ++i) m.push(Eigen::VectorXd::Constant(2, i));
  EXPECT_EQ(m.valid(), 3);
  EXPECT_EQ(m.slots()[0], 2);
  EXPECT_EQ(m.slots()[5], 4);
  EXPECT_THROW(m.push(Eigen::VectorXd::Zero(3)), ArgumentError);
}

TEST(Policy, EmbeddingGradientsStayOnAssetRows) {
  const auto assets = table1_assets();
  const env::GlobalLayout layout(assets);
  const auto ids = env::build_well_ids(assets);
  PolicyConfig c = PolicyConfig::multi_asset(layout.width(), ids.total, 10);
  c.n_m = 16;
  c.heads = 2;
  c.mlp_hidden = 16;
  c.conv_filters = 8;
  Policy net(c);
  std::mt19937_64 rng(10);
  for (int asset = 0; asset < 4; ++asset) {
    PolicyBatch batch = random_batch(c, 3, rng);
    for (auto& rows : batch.action_rows) {
      rows.clear();
      for (int id : ids.asset(asset)) rows.push_back(id - 1);
    }
    net.params().zero_grad();
    const PolicyOutput out = net.forward(batch);
    add(add(sum(out.mu), sum(out.log_sigma)), sum(out.value)).backward();
    for (const char* table : {"head.mu_table", "head.sigma_table"}) {
      const Tensor& t = net.params().get(table);
      const ConstMatrixMap g(t.grad().data(), ids.total, c.n_m);
      for (int row = 0; row < ids.total; ++row) {
        const bool mine = row + 1 >= ids.asset(asset).front() && row + 1 <= ids.asset(asset).back();
        if (mine) {
          EXPECT_GT(g.row(row).norm(), 0.0) << table << " row " << row;
        } else {
          EXPECT_EQ(g.row(row).norm(), 0.0) << table << " row " << row;
        }
      }
    }
    EXPECT_GT(net.params().get("encoder.conv1.w").grad().norm(), 0.0);
  }
}

TEST(Policy, EmbeddingHeadMatchesDotProductOracle) {
  const PolicyConfig c = PolicyConfig::multi_asset(9, 6, 11);
  Policy net(c);
  std::mt19937_64 rng(11);
  PolicyBatch batch = random_batch(c, 4, rng);
  const PolicyOutput out = net.forward(batch);
  const auto mu_table = net.params().get("head.mu_table").matrix();
  const auto sigma_table = net.params().get("head.sigma_table").matrix();
  const Eigen::MatrixXd eta = as_matrix(out.state);
  int pair = 0;
  for (int b = 0; b < 4; ++b)
    for (int row : batch.action_rows[b]) {
      double mu = 0, ls = 0;
      for (int d = 0; d < c.n_m; ++d) {
        mu += mu_table(row, d) * eta(b, d);
        ls += sigma_table(row, d) * eta(b, d);
      }
      EXPECT_NEAR(out.mu.value()[pair], mu, 1e-12);
      EXPECT_NEAR(out.log_sigma.value()[pair], std::clamp(ls, -5.0, 1.0), 1e-12);
      ++pair;
    }
}

TEST(Policy, ZeroEmbeddingRowsGiveZeroDistribution) {
  Policy net(PolicyConfig::multi_asset(9, 6, 12));
  net.params().get("head.mu_table").node()->value.setZero();
  net.params().get("head.sigma_table").node()->value.setZero();
  std::mt19937_64 rng(12);
  const PolicyOutput out = net.forward(random_batch(net.config(), 3, rng));
  EXPECT_EQ(out.mu.value().norm(), 0.0);
  EXPECT_EQ(out.log_sigma.value().norm(), 0.0);
}

TEST(Policy, DenseHeadMatchesMatrixOracle) {
  Policy net(PolicyConfig::single_asset(9, 5, 13));
  std::mt19937_64 rng(13);
  const PolicyBatch batch = random_batch(net.config(), 3, rng);
  const PolicyOutput out = net.forward(batch);
  const Eigen::MatrixXd full = as_matrix(out.state) * net.params().get("head.dense.w").matrix();
  const auto& bias = net.params().get("head.dense.b").value();
  EXPECT_EQ(out.mu.size(), 15);
  for (int b = 0; b < 3; ++b)
    for (int w = 0; w < 5; ++w) {
      EXPECT_NEAR(out.mu.value()[b * 5 + w], full(b, w) + bias[w], 1e-12);
      EXPECT_NEAR(out.log_sigma.value()[b * 5 + w], std::clamp(full(b, 5 + w) + bias[5 + w], -5.0, 1.0), 1e-12);
    }
  net.params().get("head.dense.w").node()->value.setZero();
  EXPECT_EQ(net.forward(batch).mu.value().norm(), 0.0);
}

TEST(Policy, ValueHeadZeroWeightsAndTrunkGradient) {
  Policy net(tiny_config(HeadKind::dense, 14));
  std::mt19937_64 rng(14);
  const PolicyBatch batch = random_batch(net.config(), 3, rng);
  net.params().zero_grad();
  sum(net.forward(batch).value).backward();
  EXPECT_GT(net.params().get("encoder.conv1.w").grad().norm(), 0.0);
  EXPECT_GT(net.params().get("transformer0.attn.q.w").grad().norm(), 0.0);
  net.params().get("value.out.w").node()->value.setZero();
  EXPECT_EQ(net.forward(batch).value.value().norm(), 0.0);
}

TEST(Policy, EndToEndGradientCheck) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (HeadKind head : {HeadKind::dense, HeadKind::embedding}) {
      Policy net(tiny_config(head, seed));
      std::mt19937_64 rng(100 + seed);
      const PolicyBatch batch = random_batch(net.config(), 3, rng);
      std::vector<double> raw;
      {
        NoGradGuard guard;
        const PolicyOutput out = net.forward(batch);
        for (Eigen::Index i = 0; i < out.mu.size(); ++i) raw.push_back(out.mu.value()[i] + 0.3 * (i % 3 - 1));
      }
      auto loss = [&] {
        const PolicyOutput out = net.forward(batch);
        return add(add(sum(log_prob(out, raw)), sum(square(out.value))), scale(sum(entropy(out)), 0.1));
      };
      const auto r = gradient_check(loss, net.params().tensors(), 1e-5);
      EXPECT_LE(r.global_relative_error, 1e-4) << "seed " << seed;
      RecordProperty("worst_tensor_error_seed" + std::to_string(seed), std::to_string(r.max_relative_error));
    }
  }
}

TEST(Sampling, DeterministicLimit) {
  std::mt19937_64 rng(1);
  const std::vector<double> mu{0.3, -2.0}, ls{-5.0, -5.0};
  const Sample s = sample_action(mu, ls, rng, false);
  EXPECT_NEAR(s.action[0], 0.3, 0.05);
  EXPECT_EQ(s.action[1], -1.0);
  const Sample d = sample_action(mu, ls, rng, true);
  EXPECT_EQ(d.action[0], 0.3);
  EXPECT_EQ(d.raw[1], -2.0);
}

TEST(Sampling, LogProbMatchesClosedForm) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> mu(6), ls(6);
    for (int i = 0; i < 6; ++i) {
      mu[i] = n(rng);
      ls[i] = std::clamp(n(rng), -5.0, 1.0);
    }
    const Sample s = sample_action(mu, ls, rng, false);
    double expect = 0;
    for (int i = 0; i < 6; ++i) {
      const double sigma = std::exp(ls[i]);
      expect += -(s.raw[i] - mu[i]) * (s.raw[i] - mu[i]) / (2 * sigma * sigma) - std::log(sigma) -
                0.5 * std::log(2 * std::numbers::pi);
    }
    EXPECT_NEAR(s.logp, expect, 1e-12);
  }
}

TEST(Sampling, TensorLogProbAgreesWithScalarFormula) {
  Policy net(tiny_config(HeadKind::embedding, 3));
  std::mt19937_64 rng(3);
  const PolicyBatch batch = random_batch(net.config(), 4, rng);
  const PolicyOutput out = net.forward(batch);
  std::vector<double> raw;
  std::vector<double> per_sample;
  for (int b = 0; b < 4; ++b) {
    const int lo = out.pair_offset[b], hi = out.pair_offset[b + 1];
    std::vector<double> mu(out.mu.value().data() + lo, out.mu.value().data() + hi);
    std::vector<double> ls(out.log_sigma.value().data() + lo, out.log_sigma.value().data() + hi);
    const Sample s = sample_action(mu, ls, rng, false);
    raw.insert(raw.end(), s.raw.begin(), s.raw.end());
    per_sample.push_back(s.logp);
  }
  const Tensor lp = log_prob(out, raw);
  for (int b = 0; b < 4; ++b) EXPECT_NEAR(lp.value()[b], per_sample[b], 1e-12);
}

TEST(Sampling, MonteCarloMean) {
  std::mt19937_64 rng(4);
  const std::vector<double> mu{0.2}, ls{std::log(0.3)};
  const int n = 100000;
  double total = 0;
  for (int i = 0; i < n; ++i) total += sample_action(mu, ls, rng, false).raw[0];
  EXPECT_NEAR(total / n, 0.2, 3 * 0.3 / std::sqrt(static_cast<double>(n)));
}

TEST(Policy, ConfigJsonRoundTrip) {
  PolicyConfig c = tiny_config(HeadKind::dense, 5);
  c.gate = GateKind::residual;
  const PolicyConfig d = policy_from_json(to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
  EXPECT_THROW(policy_from_json(Json{{"heads_", 2}}), ConfigError);
  EXPECT_THROW(policy_from_json(Json{{"input_width", 5}, {"wells", 2}, {"heads", 3}}), ConfigError);
}

TEST(Policy, ForwardIsDeterministic) {
  Policy a(tiny_config(HeadKind::embedding, 21)), b(tiny_config(HeadKind::embedding, 21));
  std::mt19937_64 rng(21);
  const PolicyBatch batch = random_batch(a.config(), 3, rng);
  EXPECT_EQ(a.forward(batch).mu.value(), b.forward(batch).mu.value());
}
