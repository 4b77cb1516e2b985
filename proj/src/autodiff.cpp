#include "rivercast/autodiff.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "rivercast/errors.hpp"

namespace rivercast::nn {
namespace {

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

void require_same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("operands recorded on different tapes");
  }
}

void require_same_shape(const char* op, Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                         shape_str(b.value()));
  }
}

bool any_grad(Var a) { return a.tape()->requires_grad(a.id()); }
bool any_grad(Var a, Var b) { return any_grad(a) || any_grad(b); }

template <typename F>
Var unary(Var a, Matrix value, F&& local_grad) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(std::move(value), any_grad(a),
                  [ia, local_grad](Tape& tape, std::size_t self) {
                    if (!tape.requires_grad(ia)) return;
                    tape.grad(ia) += local_grad(tape, self);
                  });
}

}  // namespace

void zero_grads(ParameterMap& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

std::size_t parameter_count(const ParameterMap& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += static_cast<std::size_t>(p.size());
  return n;
}

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("scalar() on non-scalar value " + shape_str(v));
  return v(0, 0);
}

Var Tape::record(Matrix value, bool requires_grad, Backprop backprop) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::parameter(Tensor& tensor) {
  Var v = record(tensor.value, true, nullptr);
  nodes_.back().param = &tensor;
  return v;
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad.setZero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("loss recorded on a different tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        shape_str(nodes_[loss.id()].value));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad(loss.id()).setOnes();
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) {
        n.param->zero_grad();
      }
      n.param->grad += n.grad;
    }
    if (n.backprop) n.backprop(*this, i);
  }
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.value()) + " x " +
                         shape_str(b.value()));
  }
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  Matrix value = a.value() * b.value();
  return t.record(std::move(value), any_grad(a, b), [ia, ib](Tape& tape, std::size_t self) {
    const Matrix& g = tape.grad(self);
    if (tape.requires_grad(ia)) tape.grad(ia).noalias() += g * tape.value(ib).transpose();
    if (tape.requires_grad(ib)) tape.grad(ib).noalias() += tape.value(ia).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape()->record(a.value() + b.value(), any_grad(a, b),
                          [ia, ib](Tape& tape, std::size_t self) {
                            const Matrix& g = tape.grad(self);
                            if (tape.requires_grad(ia)) tape.grad(ia) += g;
                            if (tape.requires_grad(ib)) tape.grad(ib) += g;
                          });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape()->record(a.value() - b.value(), any_grad(a, b),
                          [ia, ib](Tape& tape, std::size_t self) {
                            const Matrix& g = tape.grad(self);
                            if (tape.requires_grad(ia)) tape.grad(ia) += g;
                            if (tape.requires_grad(ib)) tape.grad(ib) -= g;
                          });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), any_grad(a, b),
                          [ia, ib](Tape& tape, std::size_t self) {
                            const Matrix& g = tape.grad(self);
                            if (tape.requires_grad(ia)) {
                              tape.grad(ia) += g.cwiseProduct(tape.value(ib));
                            }
                            if (tape.requires_grad(ib)) {
                              tape.grad(ib) += g.cwiseProduct(tape.value(ia));
                            }
                          });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " +
                         shape_str(row.value()));
  }
  const std::size_t ia = a.id();
  const std::size_t ir = row.id();
  Matrix value = a.value();
  value.rowwise() += row.value().row(0);
  return a.tape()->record(std::move(value), any_grad(a, row),
                          [ia, ir](Tape& tape, std::size_t self) {
                            const Matrix& g = tape.grad(self);
                            if (tape.requires_grad(ia)) tape.grad(ia) += g;
                            if (tape.requires_grad(ir)) tape.grad(ir) += g.colwise().sum();
                          });
}

Var scale(Var a, double s) {
  return unary(a, a.value() * s,
               [s](Tape& tape, std::size_t self) -> Matrix { return tape.grad(self) * s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, (a.value().array() + s).matrix(),
               [](Tape& tape, std::size_t self) -> Matrix { return tape.grad(self); });
}

Var one_minus(Var a) {
  return unary(a, (1.0 - a.value().array()).matrix(),
               [](Tape& tape, std::size_t self) -> Matrix { return -tape.grad(self); });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool needs_grad = false;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row counts differ " + shape_str(parts.front().value()) +
                           " vs " + shape_str(p.value()));
    }
    cols += p.cols();
    needs_grad = needs_grad || any_grad(p);
  }
  Matrix value(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    value.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.cols();
  }
  return parts.front().tape()->record(
      std::move(value), needs_grad, [layout](Tape& tape, std::size_t self) {
        const Matrix& g = tape.grad(self);
        for (const auto& [id, off] : layout) {
          if (!tape.requires_grad(id)) continue;
          Matrix& gi = tape.grad(id);
          gi += g.middleCols(off, gi.cols());
        }
      });
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(a.value()));
  }
  const std::size_t ia = a.id();
  return a.tape()->record(a.value().middleRows(begin, count), any_grad(a),
                          [ia, begin, count](Tape& tape, std::size_t self) {
                            tape.grad(ia).middleRows(begin, count) += tape.grad(self);
                          });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + shape_str(a.value()));
  }
  const std::size_t ia = a.id();
  return a.tape()->record(a.value().middleCols(begin, count), any_grad(a),
                          [ia, begin, count](Tape& tape, std::size_t self) {
                            tape.grad(ia).middleCols(begin, count) += tape.grad(self);
                          });
}

Var gather_rows(Var a, std::span<const Eigen::Index> rows) {
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  Matrix value(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= a.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(idx[r]) + " outside " +
                           shape_str(a.value()));
    }
    value.row(static_cast<Eigen::Index>(r)) = a.value().row(idx[r]);
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(value), any_grad(a),
                          [ia, idx = std::move(idx)](Tape& tape, std::size_t self) {
                            const Matrix& g = tape.grad(self);
                            Matrix& ga = tape.grad(ia);
                            for (std::size_t r = 0; r < idx.size(); ++r) {
                              ga.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
                            }
                          });
}

Var sigmoid(Var a) {
  Matrix value = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return unary(a, std::move(value), [](Tape& tape, std::size_t self) -> Matrix {
    const auto y = tape.value(self).array();
    return (tape.grad(self).array() * y * (1.0 - y)).matrix();
  });
}

Var tanh(Var a) {
  Matrix value = a.value().array().tanh().matrix();
  return unary(a, std::move(value), [](Tape& tape, std::size_t self) -> Matrix {
    const auto y = tape.value(self).array();
    return (tape.grad(self).array() * (1.0 - y * y)).matrix();
  });
}

Var relu(Var a) {
  Matrix value = a.value().cwiseMax(0.0);
  return unary(a, std::move(value), [](Tape& tape, std::size_t self) -> Matrix {
    return (tape.value(self).array() > 0.0).select(tape.grad(self).array(), 0.0).matrix();
  });
}

Var sum(Var a) {
  Matrix value(1, 1);
  value(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return unary(a, std::move(value), [r, c](Tape& tape, std::size_t self) -> Matrix {
    return Matrix::Constant(r, c, tape.grad(self)(0, 0));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw DimensionError("mean of an empty tensor");
  Matrix value(1, 1);
  value(0, 0) = a.value().mean();
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  const double inv = 1.0 / static_cast<double>(r * c);
  return unary(a, std::move(value), [r, c, inv](Tape& tape, std::size_t self) -> Matrix {
    return Matrix::Constant(r, c, tape.grad(self)(0, 0) * inv);
  });
}

Var block_left_multiply(const Matrix& m, Var a) {
  const Eigen::Index n = m.rows();
  if (m.cols() != n || n == 0 || a.rows() % n != 0) {
    throw DimensionError("block_left_multiply: " + shape_str(m) + " does not tile " +
                         shape_str(a.value()));
  }
  const Eigen::Index blocks = a.rows() / n;
  Matrix value(a.rows(), a.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) {
    value.middleRows(b * n, n).noalias() = m * a.value().middleRows(b * n, n);
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(value), any_grad(a),
                          [ia, mt = Matrix(m.transpose()), n, blocks](Tape& tape, std::size_t self) {
                            const Matrix& g = tape.grad(self);
                            Matrix& ga = tape.grad(ia);
                            for (Eigen::Index b = 0; b < blocks; ++b) {
                              ga.middleRows(b * n, n).noalias() += mt * g.middleRows(b * n, n);
                            }
                          });
}

Var weighted_mse(Var a, std::span<const double> targets, std::span<const double> weights) {
  if (a.value().size() == 0) throw ContractError("weighted_mse: empty batch");
  if (a.cols() != 1 || static_cast<std::size_t>(a.rows()) != targets.size() ||
      targets.size() != weights.size()) {
    throw DimensionError("weighted_mse: predictions " + shape_str(a.value()) + " vs " +
                         std::to_string(targets.size()) + " targets, " +
                         std::to_string(weights.size()) + " weights");
  }
  const Eigen::Index n = a.rows();
  double wsum = 0.0;
  double acc = 0.0;
  Matrix dloss(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    const double d = a.value()(i, 0) - targets[static_cast<std::size_t>(i)];
    wsum += w;
    acc += w * d * d;
    dloss(i, 0) = 2.0 * w * d;
  }
  if (!(wsum > 0.0)) throw ContractError("weighted_mse: weights sum to zero");
  Matrix value(1, 1);
  value(0, 0) = acc / wsum;
  dloss /= wsum;
  return unary(a, std::move(value),
               [dloss = std::move(dloss)](Tape& tape, std::size_t self) -> Matrix {
                 return dloss * tape.grad(self)(0, 0);
               });
}

void Adam::step(ParameterMap& params, double clip_norm) {
  ++step_;
  double factor = 1.0;
  if (clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& [name, p] : params) sq += p.grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) factor = clip_norm / norm;
  }
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (auto& [name, p] : params) {
    if (p.grad.size() != p.value.size()) continue;
    auto [it, inserted] = moments_.try_emplace(name);
    auto& [m, v] = it->second;
    if (inserted) {
      m = Matrix::Zero(p.rows(), p.cols());
      v = Matrix::Zero(p.rows(), p.cols());
    }
    const Matrix g = p.grad * factor;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2();
    p.value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

nlohmann::json params_to_json(const ParameterMap& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, p] : params) {
    std::vector<double> values(p.value.data(), p.value.data() + p.value.size());
    out[name] = {{"shape", {p.rows(), p.cols()}}, {"values", values}};
  }
  return out;
}

ParameterMap params_from_json(const nlohmann::json& doc) {
  ParameterMap params;
  for (const auto& [name, entry] : doc.items()) {
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    const auto values = entry.at("values").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Eigen::Index>(values.size())) {
      throw ConfigError("checkpoint entry '" + name + "' has inconsistent shape");
    }
    Matrix m(shape[0], shape[1]);
    std::copy(values.begin(), values.end(), m.data());
    params.emplace(name, Tensor(std::move(m)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterMap& params,
                     const nlohmann::json& meta) {
  nlohmann::json doc;
  doc["format"] = "rivercast.checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["meta"] = meta;
  doc["params"] = params_to_json(params);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
}

ParameterMap load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    if (doc.at("format") != "rivercast.checkpoint") {
      throw ConfigError(path.string() + " is not a rivercast checkpoint");
    }
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ConfigError(path.string() + ": unsupported checkpoint version");
    }
    if (meta != nullptr) *meta = doc.value("meta", nlohmann::json::object());
    return params_from_json(doc.at("params"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace rivercast::nn
