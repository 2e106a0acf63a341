#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "clrm/common/json_util.hpp"
#include "clrm/nn/tensor.hpp"

namespace clrm::nn {

/// Named trainable tensors, in registration order.
class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape, Eigen::VectorXd values);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  std::int64_t parameter_count() const;

  /// Allocates every gradient and sets it to zero.
  void zero_grad();
  Eigen::VectorXd flat_values() const;
  void set_flat_values(const Eigen::VectorXd& flat);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Row-major [rows, cols] matrix with orthonormal rows or columns (whichever
/// is fewer), scaled by gain. Householder QR of a Gaussian matrix with the
/// sign of R's diagonal folded in.
Eigen::VectorXd orthogonal_init(int rows, int cols, double gain, std::mt19937_64& rng);
Eigen::VectorXd normal_init(int count, double stddev, std::mt19937_64& rng);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over every tensor of a ParamStore.
class Adam {
 public:
  explicit Adam(const ParamStore& store, AdamConfig config = {});

  /// One update. Throws StateError when a parameter has no gradient.
  void step(double lr);

  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Eigen::VectorXd>& first_moments() const { return m_; }
  const std::vector<Eigen::VectorXd>& second_moments() const { return v_; }
  void restore(std::int64_t t, std::vector<Eigen::VectorXd> m, std::vector<Eigen::VectorXd> v);

 private:
  const ParamStore* store_;
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<Eigen::VectorXd> m_;
  std::vector<Eigen::VectorXd> v_;
};

/// Linear decay from lr_first at iteration 0 to lr_last at iteration iterations-1.
double linear_lr(int iteration, int iterations, double lr_first = 1e-4, double lr_last = 1e-5);

/// Writes params.bin (plus Adam moments when given) and manifest.json into dir.
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store, const Adam* adam,
                     const Json& metadata);
/// Loads values (and Adam state when given) into an existing store of the same
/// layout. Returns the stored metadata. Throws LoadError on any mismatch.
Json load_checkpoint(const std::filesystem::path& dir, ParamStore& store, Adam* adam);

struct GradCheckResult {
  double max_relative_error = 0.0;  ///< worst tensor
  std::string worst;                ///< index of the worst tensor in the checked list, as text
  double global_relative_error = 0.0;  ///< over all checked entries as one vector
};

/// Central finite differences of loss() against every entry of params.
/// Relative error of vectors a, n is ||a - n|| / max(||a||, ||n||, 1e-12),
/// reported per tensor and for the concatenation of all of them.
GradCheckResult gradient_check(const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
                               double h = 1e-5);

}  // namespace clrm::nn
