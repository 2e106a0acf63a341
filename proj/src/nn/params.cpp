#include "clrm/nn/params.hpp"

#include <cmath>

#include "clrm/common/binary_container.hpp"
#include "clrm/common/errors.hpp"

namespace clrm::nn {

Tensor ParamStore::add(const std::string& name, Shape shape, Eigen::VectorXd values) {
  if (contains(name)) throw ArgumentError("param store: duplicate parameter '" + name + "'");
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

const Tensor& ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("param store: no parameter '" + name + "'");
  return tensors_[it->second];
}

std::int64_t ParamStore::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (const auto& t : tensors_) t.node()->grad_buffer().setZero();
}

Eigen::VectorXd ParamStore::flat_values() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index o = 0;
  for (const auto& t : tensors_) {
    flat.segment(o, t.size()) = t.value();
    o += t.size();
  }
  return flat;
}

void ParamStore::set_flat_values(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw ArgumentError("param store: flat vector has the wrong length");
  Eigen::Index o = 0;
  for (const auto& t : tensors_) {
    t.node()->value = flat.segment(o, t.size());
    o += t.size();
  }
}

Eigen::VectorXd orthogonal_init(int rows, int cols, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (int j = 0; j < small; ++j)
    for (int i = 0; i < big; ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  RowMatrix w = rows >= cols ? RowMatrix(q) : RowMatrix(q.transpose());
  w *= gain;
  return Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
}

Eigen::VectorXd normal_init(int count, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Eigen::VectorXd v(count);
  for (int i = 0; i < count; ++i) v[i] = normal(rng);
  return v;
}

Adam::Adam(const ParamStore& store, AdamConfig config) : store_(&store), config_(config) {
  for (const auto& t : store.tensors()) {
    m_.push_back(Eigen::VectorXd::Zero(t.size()));
    v_.push_back(Eigen::VectorXd::Zero(t.size()));
  }
}

void Adam::step(double lr) {
  const auto& ts = store_->tensors();
  if (ts.size() != m_.size()) throw StateError("adam: parameter store changed after construction");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!ts[i].has_grad()) throw StateError("adam: parameter '" + store_->names()[i] + "' has no gradient");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& g = ts[i].grad();
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
    auto& value = ts[i].node()->value;
    value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

void Adam::restore(std::int64_t t, std::vector<Eigen::VectorXd> m, std::vector<Eigen::VectorXd> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw LoadError("adam: moment count mismatch");
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size()) throw LoadError("adam: moment shape mismatch");
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

double linear_lr(int iteration, int iterations, double lr_first, double lr_last) {
  if (iterations < 1 || iteration < 0 || iteration >= iterations) {
    throw ArgumentError("linear_lr: iteration " + std::to_string(iteration) + " outside [0, " +
                        std::to_string(iterations) + ")");
  }
  if (iterations == 1) return lr_first;
  return lr_first + (lr_last - lr_first) * iteration / static_cast<double>(iterations - 1);
}

namespace {

TensorRecord record(const std::string& name, const Shape& shape, const Eigen::VectorXd& v) {
  TensorRecord r;
  r.name = name;
  for (int d : shape) r.dims.push_back(static_cast<std::uint64_t>(d));
  r.data.assign(v.data(), v.data() + v.size());
  return r;
}

Eigen::VectorXd checked_values(const BinaryContainer& c, const std::string& name, const Tensor& like) {
  const TensorRecord* r = c.find(name);
  if (!r) throw LoadError("checkpoint: missing tensor '" + name + "'");
  if (r->dims.size() != like.shape().size()) throw LoadError("checkpoint: rank mismatch for '" + name + "'");
  for (std::size_t i = 0; i < r->dims.size(); ++i) {
    if (r->dims[i] != static_cast<std::uint64_t>(like.shape()[i])) {
      throw LoadError("checkpoint: shape mismatch for '" + name + "', expected " + shape_string(like.shape()));
    }
  }
  return Eigen::Map<const Eigen::VectorXd>(r->data.data(), static_cast<Eigen::Index>(r->data.size()));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store, const Adam* adam,
                     const Json& metadata) {
  std::filesystem::create_directories(dir);
  BinaryContainer c;
  Json params = Json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& t = store.tensors()[i];
    c.tensors.push_back(record(store.names()[i], t.shape(), t.value()));
    params.push_back({{"name", store.names()[i]}, {"shape", t.shape()}});
    if (adam) {
      c.tensors.push_back(record("adam.m/" + store.names()[i], t.shape(), adam->first_moments()[i]));
      c.tensors.push_back(record("adam.v/" + store.names()[i], t.shape(), adam->second_moments()[i]));
    }
  }
  c.attributes["adam"] = adam ? 1 : 0;
  c.attributes["adam_step"] = adam ? adam->step_count() : 0;
  write_container(dir / "params.bin", c);
  Json manifest = {{"format", "clrm-checkpoint-1"},
                   {"parameter_count", store.parameter_count()},
                   {"parameters", params},
                   {"adam_step", adam ? adam->step_count() : 0},
                   {"metadata", metadata}};
  write_json(dir / "manifest.json", manifest);
}

Json load_checkpoint(const std::filesystem::path& dir, ParamStore& store, Adam* adam) {
  Json manifest;
  BinaryContainer c;
  try {
    manifest = read_json(dir / "manifest.json");
    c = read_container(dir / "params.bin");
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError("checkpoint: cannot read " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format", std::string{}) != "clrm-checkpoint-1") throw LoadError("checkpoint: unknown format");
  const auto& params = manifest.at("parameters");
  if (params.size() != store.size()) {
    throw LoadError("checkpoint: holds " + std::to_string(params.size()) + " tensors, model has " +
                    std::to_string(store.size()));
  }
  std::vector<Eigen::VectorXd> values, m, v;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.names()[i];
    if (params[i].at("name").get<std::string>() != name) {
      throw LoadError("checkpoint: tensor " + std::to_string(i) + " is '" + params[i].at("name").get<std::string>() +
                      "', model expects '" + name + "'");
    }
    values.push_back(checked_values(c, name, store.tensors()[i]));
    if (adam) {
      if (c.attribute("adam") != 1) throw LoadError("checkpoint: no optimizer state stored");
      m.push_back(checked_values(c, "adam.m/" + name, store.tensors()[i]));
      v.push_back(checked_values(c, "adam.v/" + name, store.tensors()[i]));
    }
  }
  for (std::size_t i = 0; i < store.size(); ++i) store.tensors()[i].node()->value = values[i];
  if (adam) adam->restore(c.attribute("adam_step"), std::move(m), std::move(v));
  return manifest.at("metadata");
}

GradCheckResult gradient_check(const std::function<Tensor()>& loss, const std::vector<Tensor>& params, double h) {
  for (const auto& p : params) p.node()->grad_buffer().setZero();
  loss().backward();
  GradCheckResult result;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Eigen::VectorXd analytic = params[i].grad();
    Eigen::VectorXd numeric(analytic.size());
    auto& value = params[i].node()->value;
    {
      NoGradGuard guard;
      for (Eigen::Index j = 0; j < value.size(); ++j) {
        const double saved = value[j];
        value[j] = saved + h;
        const double up = loss().item();
        value[j] = saved - h;
        const double down = loss().item();
        value[j] = saved;
        numeric[j] = (up - down) / (2.0 * h);
      }
    }
    const double denom = std::max({analytic.norm(), numeric.norm(), 1e-12});
    const double err = (analytic - numeric).norm() / denom;
    diff2 += (analytic - numeric).squaredNorm();
    a2 += analytic.squaredNorm();
    n2 += numeric.squaredNorm();
    if (result.worst.empty() || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst = std::to_string(i);
    }
  }
  result.global_relative_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return result;
}

}  // namespace clrm::nn
