#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rivercast/linalg.hpp"

namespace rivercast::nn {

/// A learnable dense tensor (rank <= 2) with its gradient accumulator.
struct Tensor {
  Matrix value;
  Matrix grad;

  Tensor() = default;
  explicit Tensor(Matrix v) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Named learnable tensors. std::map keeps element addresses stable, which
/// the tape relies on.
using ParameterMap = std::map<std::string, Tensor>;

void zero_grads(ParameterMap& params);
std::size_t parameter_count(const ParameterMap& params);

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a computation for reverse-mode differentiation. One tape per
/// forward pass; not thread-safe.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  Var constant(Matrix value);
  Var parameter(Tensor& tensor);

  /// Accumulates d(loss)/d(parameter) into every parameter's `grad`.
  /// Throws ContractError if `loss` is not 1x1.
  void backward(Var loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator of a node; only valid during backward.
  Matrix& grad(std::size_t id);
  std::size_t size() const { return nodes_.size(); }

  Var record(Matrix value, bool requires_grad, Backprop backprop);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backprop backprop;
    Tensor* param = nullptr;
  };
  std::vector<Node> nodes_;
};

// Forward ops. Each throws DimensionError on incompatible shapes.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Adds a 1xC row to every row of `a`.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// 1 - a
Var one_minus(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
Var gather_rows(Var a, std::span<const Eigen::Index> rows);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var sum(Var a);
Var mean(Var a);
/// Applies the constant NxN matrix `m` to each consecutive block of N rows of
/// `a` (a batch of node-feature matrices stacked vertically).
Var block_left_multiply(const Matrix& m, Var a);
/// sum_i w_i (a_i - y_i)^2 / sum_i w_i for a column vector `a`.
Var weighted_mse(Var a, std::span<const double> targets, std::span<const double> weights);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

/// Adam with bias correction. Moments are keyed by parameter name.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one update from the accumulated gradients. When `clip_norm` > 0
  /// the global gradient norm is first scaled down to at most `clip_norm`.
  void step(ParameterMap& params, double clip_norm = 0.0);

  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

/// Checkpoint format `rivercast.checkpoint` v1: a JSON document
/// `{format, version, meta, params: {name: {shape: [r, c], values: [...]}}}`.
/// Values are written with round-trip precision.
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParameterMap& params,
                     const nlohmann::json& meta);
ParameterMap load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

nlohmann::json params_to_json(const ParameterMap& params);
ParameterMap params_from_json(const nlohmann::json& doc);

}  // namespace rivercast::nn
