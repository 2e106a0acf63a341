#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "clrm/nn/ops.hpp"
#include "clrm/nn/params.hpp"

namespace clrm::checks {

/// A differentiable op wrapped into a scalar loss, with the leaves to check.
struct OpCase {
  std::string name;
  std::function<nn::Tensor()> loss;
  std::vector<nn::Tensor> params;
};

inline nn::Tensor random_param(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  return nn::Tensor::parameter(shape, nn::normal_init(nn::shape_size(shape), scale, rng));
}

/// Reduces y to a scalar through a fixed random projection so every output entry matters.
inline std::function<nn::Tensor()> projected(std::function<nn::Tensor()> f, nn::Shape out_shape,
                                             std::mt19937_64& rng) {
  const nn::Tensor r = nn::Tensor::constant(out_shape, nn::normal_init(nn::shape_size(out_shape), 1.0, rng));
  return [f, r] { return nn::sum(nn::mul(f(), r)); };
}

inline std::vector<OpCase> op_cases(std::uint64_t seed) {
  using namespace clrm::nn;
  std::mt19937_64 rng(seed);
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name, std::vector<Tensor> params, std::function<Tensor()> f, Shape out) {
    cases.push_back({std::move(name), projected(std::move(f), std::move(out), rng), std::move(params)});
  };

  {
    Tensor x = random_param({5, 4}, rng), w = random_param({4, 3}, rng), b = random_param({3}, rng);
    add_case("linear", {x, w, b}, [=] { return linear(x, w, b); }, {5, 3});
    add_case("linear_no_bias", {x, w}, [=] { return linear(x, w); }, {5, 3});
    Tensor v = random_param({4}, rng);
    add_case("linear_vector", {v, w, b}, [=] { return linear(v, w, b); }, {3});
  }
  {
    Tensor a = random_param({3, 4}, rng), b = random_param({4, 2}, rng);
    add_case("matmul", {a, b}, [=] { return matmul(a, b); }, {3, 2});
  }
  {
    Tensor a = random_param({3, 4}, rng), b = random_param({3, 4}, rng), row = random_param({4}, rng);
    add_case("add", {a, b}, [=] { return add(a, b); }, {3, 4});
    add_case("add_broadcast", {a, row}, [=] { return add(a, row); }, {3, 4});
    add_case("sub", {a, b}, [=] { return sub(a, b); }, {3, 4});
    add_case("sub_broadcast", {a, row}, [=] { return sub(a, row); }, {3, 4});
    add_case("mul", {a, b}, [=] { return mul(a, b); }, {3, 4});
    add_case("scale", {a}, [=] { return scale(a, -1.7); }, {3, 4});
    add_case("add_scalar", {a}, [=] { return add_scalar(a, 0.3); }, {3, 4});
    add_case("minimum", {a, b}, [=] { return minimum(a, b); }, {3, 4});
    add_case("relu", {a}, [=] { return relu(a); }, {3, 4});
    add_case("sigmoid", {a}, [=] { return sigmoid(a); }, {3, 4});
    add_case("tanh", {a}, [=] { return nn::tanh(a); }, {3, 4});
    add_case("exp", {a}, [=] { return nn::exp(a); }, {3, 4});
    add_case("square", {a}, [=] { return square(a); }, {3, 4});
    add_case("clamp", {a}, [=] { return clamp(a, -0.5, 0.5); }, {3, 4});
    add_case("sum", {a}, [=] { return scale(sum(square(a)), 1.0); }, {});
    add_case("mean", {a}, [=] { return mean(square(a)); }, {});
  }
  {
    Tensor x = random_param({4, 6}, rng), g = random_param({6}, rng), b = random_param({6}, rng);
    add_case("layer_norm", {x, g, b}, [=] { return layer_norm(x, g, b); }, {4, 6});
  }
  {
    Tensor x = random_param({6, 5}, rng);
    add_case("softmax", {x}, [=] { return softmax(x); }, {6, 5});
    add_case("masked_softmax", {x}, [=] { return masked_softmax(x, {0, 2, 4}, 2); }, {6, 5});
  }
  {
    Tensor x = random_param({2, 4, 3}, rng), w = random_param({9, 5}, rng), b = random_param({5}, rng);
    add_case("conv1d", {x, w, b}, [=] { return conv1d(x, w, b); }, {2, 4, 5});
    add_case("mean_time", {x}, [=] { return mean_time(x); }, {2, 3});
  }
  {
    Tensor table = random_param({5, 3}, rng), other = random_param({4, 3}, rng);
    const std::vector<int> idx{4, 0, 4, 2};
    add_case("gather_rows", {table}, [=] { return gather_rows(table, idx); }, {4, 3});
    add_case("rowwise_dot", {table, other}, [=] { return rowwise_dot(gather_rows(table, idx), other); }, {4});
    Tensor v = random_param({6}, rng);
    add_case("segment_sum", {v}, [=] { return segment_sum(v, {0, 2, 2, 1, 0, 2}, 3); }, {3});
  }
  {
    Tensor a = random_param({3, 2}, rng), b = random_param({3, 4}, rng);
    add_case("concat_cols", {a, b}, [=] { return concat_cols({a, b}); }, {3, 6});
    add_case("slice_cols", {b}, [=] { return slice_cols(b, 1, 2); }, {3, 2});
    Tensor s1 = random_param({2, 3, 4}, rng), s2 = random_param({2, 1, 4}, rng);
    add_case("concat_seq", {s1, s2}, [=] { return concat_seq(s1, s2); }, {2, 4, 4});
    add_case("reshape", {s1}, [=] { return reshape(s1, {6, 4}); }, {6, 4});
  }
  {
    const int batch = 2, heads = 2, hd = 3, slots = 4, width = heads * hd;
    Tensor q = random_param({batch, width}, rng), k = random_param({batch, slots, width}, rng);
    Tensor r = random_param({slots, width}, rng), u = random_param({width}, rng), v = random_param({width}, rng);
    add_case("attention_scores", {q, k, r, u, v}, [=] { return attention_scores(q, k, r, u, v, heads); },
             {batch * heads, slots});
    Tensor w = random_param({batch * heads, slots}, rng), vals = random_param({batch, slots, width}, rng);
    add_case("attention_mix", {w, vals}, [=] { return attention_mix(w, vals, heads); }, {batch, width});
  }
  return cases;
}

}  // namespace clrm::checks
