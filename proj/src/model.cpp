#include "rivercast/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rivercast/errors.hpp"

namespace rivercast {
namespace {

using nn::Var;

Matrix glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void add_gru(nn::ParameterMap& p, const std::string& prefix, int d_in, int hidden,
             std::mt19937_64& rng) {
  for (const char* gate : {"r", "u", "c"}) {
    p.emplace(prefix + ".wx_" + gate, nn::Tensor(glorot(d_in, hidden, rng)));
    p.emplace(prefix + ".wh_" + gate, nn::Tensor(glorot(hidden, hidden, rng)));
    p.emplace(prefix + ".b_" + gate, nn::Tensor(Matrix::Zero(1, hidden)));
  }
}

int decoder_input(const ModelConfig& c) {
  switch (c.architecture) {
    case Architecture::graph_gru: return 2 * c.hidden;
    case Architecture::plain_gru: return c.hidden;
    case Architecture::mlp:
      return c.window * (static_cast<int>(c.n_nodes) + 1);
  }
  return c.hidden;
}

/// Parameter lookup that enters the tape either as a tracked leaf or a constant.
struct Binder {
  nn::Tape& tape;
  nn::ParameterMap& params;
  bool track;

  Var operator()(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("model is missing parameter '" + name + "'");
    return track ? tape.parameter(it->second) : tape.constant(it->second.value);
  }
};

GruWeights bind_gru(const Binder& bind, const std::string& prefix) {
  return {bind(prefix + ".wx_r"), bind(prefix + ".wh_r"), bind(prefix + ".b_r"),
          bind(prefix + ".wx_u"), bind(prefix + ".wh_u"), bind(prefix + ".b_u"),
          bind(prefix + ".wx_c"), bind(prefix + ".wh_c"), bind(prefix + ".b_c")};
}

Var decode(const Binder& bind, const ModelConfig& c, const NormStats& norm, Var z) {
  for (int l = 0; l < c.decoder_layers; ++l) {
    const std::string k = std::to_string(l);
    z = nn::relu(nn::add_row(nn::matmul(z, bind("dec.w" + k)), bind("dec.b" + k)));
  }
  Var out = nn::add_row(nn::matmul(z, bind("dec.w_out")), bind("dec.b_out"));
  return nn::add_scalar(nn::scale(out, norm.target_std), norm.target_mean);
}

void check_config(const ModelConfig& c) {
  if (c.n_nodes == 0 || c.target_node >= c.n_nodes) throw ContractError("bad node configuration");
  if (c.hidden < 1 || c.diffusion_steps < 1 || c.decoder_layers < 0 || c.window < 1) {
    throw ContractError("model sizes must be positive");
  }
  if (c.horizon < 1 || c.horizon > 6) {
    throw ContractError("horizon must be within 1..6, got " + std::to_string(c.horizon));
  }
}

}  // namespace

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::graph_gru: return "graph_gru";
    case Architecture::plain_gru: return "plain_gru";
    case Architecture::mlp: return "mlp";
  }
  return "unknown";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "graph_gru") return Architecture::graph_gru;
  if (s == "plain_gru") return Architecture::plain_gru;
  if (s == "mlp") return Architecture::mlp;
  throw ConfigError("unknown architecture '" + s + "'");
}

BaseModel BaseModel::initialize(const ModelConfig& config, const NormStats& norm,
                                std::uint64_t seed) {
  check_config(config);
  if (norm.stage_mean.size() != config.n_nodes || norm.stage_std.size() != config.n_nodes) {
    throw ContractError("normalization statistics do not match the node count");
  }
  BaseModel m{config, norm, {}};
  std::mt19937_64 rng(seed);
  const int h = config.hidden;
  const int n = static_cast<int>(config.n_nodes);
  switch (config.architecture) {
    case Architecture::graph_gru: {
      const int rows = config.diffusion_steps * (1 + h);
      for (const char* gate : {"r", "u", "c"}) {
        m.params.emplace(std::string("gcgru.w_") + gate, nn::Tensor(glorot(rows, h, rng)));
        m.params.emplace(std::string("gcgru.b_") + gate, nn::Tensor(Matrix::Zero(1, h)));
      }
      add_gru(m.params, "rain", 1, h, rng);
      break;
    }
    case Architecture::plain_gru:
      add_gru(m.params, "gru", n + 1, h, rng);
      break;
    case Architecture::mlp:
      break;
  }
  int width = decoder_input(config);
  for (int l = 0; l < config.decoder_layers; ++l) {
    const std::string k = std::to_string(l);
    m.params.emplace("dec.w" + k, nn::Tensor(glorot(width, h, rng)));
    m.params.emplace("dec.b" + k, nn::Tensor(Matrix::Zero(1, h)));
    width = h;
  }
  m.params.emplace("dec.w_out", nn::Tensor(glorot(width, 1, rng)));
  m.params.emplace("dec.b_out", nn::Tensor(Matrix::Zero(1, 1)));
  return m;
}

void save_model(const BaseModel& model, const std::filesystem::path& path,
                const nlohmann::json& extra_meta) {
  const auto& c = model.config;
  nlohmann::json meta{
      {"architecture", to_string(c.architecture)},
      {"target", c.target == TargetKind::stage ? "stage" : "discharge"},
      {"n_nodes", c.n_nodes},
      {"target_node", c.target_node},
      {"hidden", c.hidden},
      {"diffusion_steps", c.diffusion_steps},
      {"decoder_layers", c.decoder_layers},
      {"window", c.window},
      {"horizon", c.horizon},
      {"norm",
       {{"stage_mean", model.norm.stage_mean},
        {"stage_std", model.norm.stage_std},
        {"rain_mean", model.norm.rain_mean},
        {"rain_std", model.norm.rain_std},
        {"target_mean", model.norm.target_mean},
        {"target_std", model.norm.target_std}}},
      {"extra", extra_meta}};
  nn::save_checkpoint(path, model.params, meta);
}

BaseModel load_model(const std::filesystem::path& path, nlohmann::json* extra_meta) {
  nlohmann::json meta;
  BaseModel m;
  m.params = nn::load_checkpoint(path, &meta);
  try {
    auto& c = m.config;
    c.architecture = architecture_from_string(meta.at("architecture").get<std::string>());
    c.target = meta.at("target").get<std::string>() == "stage" ? TargetKind::stage
                                                               : TargetKind::discharge;
    c.n_nodes = meta.at("n_nodes").get<std::size_t>();
    c.target_node = meta.at("target_node").get<std::size_t>();
    c.hidden = meta.at("hidden").get<int>();
    c.diffusion_steps = meta.at("diffusion_steps").get<int>();
    c.decoder_layers = meta.at("decoder_layers").get<int>();
    c.window = meta.at("window").get<int>();
    c.horizon = meta.at("horizon").get<int>();
    const auto& n = meta.at("norm");
    m.norm.stage_mean = n.at("stage_mean").get<std::vector<double>>();
    m.norm.stage_std = n.at("stage_std").get<std::vector<double>>();
    m.norm.rain_mean = n.at("rain_mean").get<double>();
    m.norm.rain_std = n.at("rain_std").get<double>();
    m.norm.target_mean = n.at("target_mean").get<double>();
    m.norm.target_std = n.at("target_std").get<double>();
    if (extra_meta != nullptr) *extra_meta = meta.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + ": " + e.what());
  }
  check_config(m.config);
  return m;
}

Matrix diffusion_weights(std::span<const double> theta, int d_out, int d_in, int steps) {
  if (theta.size() != static_cast<std::size_t>(d_out * d_in * steps)) {
    throw DimensionError("diffusion kernel has " + std::to_string(theta.size()) +
                         " entries, expected " + std::to_string(d_out * d_in * steps));
  }
  Matrix w(steps * d_in, d_out);
  for (int o = 0; o < d_out; ++o) {
    for (int i = 0; i < d_in; ++i) {
      for (int k = 0; k < steps; ++k) {
        w(k * d_in + i, o) = theta[static_cast<std::size_t>((o * d_in + i) * steps + k)];
      }
    }
  }
  return w;
}

Var diffusion_features(Var x, const TransitionSet& transitions) {
  const auto steps = transitions.powers.size();
  if (steps == 1) return x;
  std::vector<Var> parts;
  parts.reserve(steps);
  parts.push_back(x);
  for (std::size_t k = 1; k < steps; ++k) {
    parts.push_back(nn::block_left_multiply(transitions.powers[k], x));
  }
  return nn::concat_cols(parts);
}

Var diffusion_conv(Var x, Var weights, const Var* bias, const TransitionSet& transitions) {
  const auto steps = static_cast<Eigen::Index>(transitions.powers.size());
  if (weights.rows() != steps * x.cols()) {
    throw DimensionError("diffusion_conv: weights have " + std::to_string(weights.rows()) +
                         " rows, expected K*D_in = " + std::to_string(steps * x.cols()));
  }
  Var out = nn::matmul(diffusion_features(x, transitions), weights);
  return bias != nullptr ? nn::add_row(out, *bias) : out;
}

Matrix dconv(const Matrix& x, const Matrix& weights, const TransitionSet& transitions) {
  const auto n = static_cast<Eigen::Index>(transitions.transition.rows());
  if (x.rows() != n) {
    throw DimensionError("dconv: input has " + std::to_string(x.rows()) + " rows for " +
                         std::to_string(n) + " nodes");
  }
  nn::Tape tape;
  Var out = nn::relu(diffusion_conv(tape.constant(x), tape.constant(weights), nullptr, transitions));
  return out.value();
}

Var plain_gru_step(Var x, Var h, const GruWeights& w) {
  using namespace nn;
  Var r = sigmoid(add_row(matmul(x, w.wx_r) + matmul(h, w.wh_r), w.b_r));
  Var u = sigmoid(add_row(matmul(x, w.wx_u) + matmul(h, w.wh_u), w.b_u));
  Var c = nn::tanh(add_row(matmul(x, w.wx_c) + matmul(r * h, w.wh_c), w.b_c));
  return u * h + one_minus(u) * c;
}

Var gcgru_step(Var x, Var h, const GraphGruWeights& w, const TransitionSet& transitions) {
  using namespace nn;
  const Eigen::Index n = transitions.transition.rows();
  if (x.rows() != h.rows() || x.rows() % n != 0) {
    throw DimensionError("gcgru_step: inputs (" + std::to_string(x.rows()) + " rows) and state (" +
                         std::to_string(h.rows()) + " rows) do not tile " + std::to_string(n) +
                         " nodes");
  }
  const Var xh[] = {x, h};
  // Reset and update gates share the diffused [X, H] features.
  Var joint = diffusion_features(concat_cols(xh), transitions);
  const auto rows = static_cast<Eigen::Index>(transitions.powers.size()) * (x.cols() + h.cols());
  if (w.w_r.rows() != rows || w.w_u.rows() != rows) {
    throw DimensionError("gcgru_step: gate weights need K*(D+H) = " + std::to_string(rows) + " rows");
  }
  Var r = sigmoid(add_row(matmul(joint, w.w_r), w.b_r));
  Var u = sigmoid(add_row(matmul(joint, w.w_u), w.b_u));
  const Var xrh[] = {x, r * h};
  Var c = nn::tanh(diffusion_conv(concat_cols(xrh), w.w_c, &w.b_c, transitions));
  return u * h + one_minus(u) * c;
}

Var forward_batch(nn::Tape& tape, BaseModel& model, const TransitionSet& transitions,
                  const SequenceData& data, std::span<const std::size_t> origins, bool track) {
  const ModelConfig& c = model.config;
  const auto batch = static_cast<Eigen::Index>(origins.size());
  const auto n = static_cast<Eigen::Index>(c.n_nodes);
  const auto window = static_cast<std::size_t>(c.window);
  if (batch == 0) throw ContractError("forward_batch: empty batch");
  if (data.stage.cols() != n || data.rain.size() != static_cast<std::size_t>(data.stage.rows())) {
    throw DimensionError("forward_batch: input data does not match the model's node count");
  }
  for (std::size_t o : origins) {
    if (o + 1 < window || o >= data.rain.size()) {
      throw ContractError("forward_batch: window ending at hour " + std::to_string(o) +
                          " is outside the data");
    }
  }
  Binder bind{tape, model.params, track};
  const int h = c.hidden;

  auto step_start = [&](std::size_t o) { return o + 1 - window; };

  Var z;
  switch (c.architecture) {
    case Architecture::graph_gru: {
      if (transitions.transition.rows() != n ||
          static_cast<int>(transitions.powers.size()) != c.diffusion_steps) {
        throw DimensionError("forward_batch: transition set does not match the model");
      }
      GraphGruWeights gw{bind("gcgru.w_r"), bind("gcgru.b_r"), bind("gcgru.w_u"),
                         bind("gcgru.b_u"), bind("gcgru.w_c"), bind("gcgru.b_c")};
      GruWeights rw = bind_gru(bind, "rain");
      Var hw = tape.constant(Matrix::Zero(batch * n, h));
      Var hr = tape.constant(Matrix::Zero(batch, h));
      for (std::size_t s = 0; s < window; ++s) {
        Matrix xs(batch * n, 1);
        Matrix rs(batch, 1);
        for (Eigen::Index b = 0; b < batch; ++b) {
          const std::size_t hour = step_start(origins[static_cast<std::size_t>(b)]) + s;
          xs.middleRows(b * n, n) = data.stage.row(static_cast<Eigen::Index>(hour)).transpose();
          rs(b, 0) = data.rain[hour];
        }
        hw = gcgru_step(tape.constant(std::move(xs)), hw, gw, transitions);
        hr = plain_gru_step(tape.constant(std::move(rs)), hr, rw);
      }
      std::vector<Eigen::Index> rows(static_cast<std::size_t>(batch));
      for (Eigen::Index b = 0; b < batch; ++b) {
        rows[static_cast<std::size_t>(b)] = b * n + static_cast<Eigen::Index>(c.target_node);
      }
      const Var parts[] = {nn::gather_rows(hw, rows), hr};
      z = nn::concat_cols(parts);
      break;
    }
    case Architecture::plain_gru: {
      GruWeights gw = bind_gru(bind, "gru");
      Var hs = tape.constant(Matrix::Zero(batch, h));
      for (std::size_t s = 0; s < window; ++s) {
        Matrix xs(batch, n + 1);
        for (Eigen::Index b = 0; b < batch; ++b) {
          const std::size_t hour = step_start(origins[static_cast<std::size_t>(b)]) + s;
          xs.row(b).head(n) = data.stage.row(static_cast<Eigen::Index>(hour));
          xs(b, n) = data.rain[hour];
        }
        hs = plain_gru_step(tape.constant(std::move(xs)), hs, gw);
      }
      z = hs;
      break;
    }
    case Architecture::mlp: {
      const auto w = static_cast<Eigen::Index>(window);
      Matrix flat(batch, w * (n + 1));
      for (Eigen::Index b = 0; b < batch; ++b) {
        const std::size_t start = step_start(origins[static_cast<std::size_t>(b)]);
        for (Eigen::Index s = 0; s < w; ++s) {
          const auto hour = static_cast<Eigen::Index>(start) + s;
          flat.row(b).segment(s * (n + 1), n) = data.stage.row(hour);
          flat(b, s * (n + 1) + n) = data.rain[static_cast<std::size_t>(hour)];
        }
      }
      z = tape.constant(std::move(flat));
      break;
    }
  }
  return decode(bind, c, model.norm, z);
}

double forward(const ForecastWindow& window, BaseModel& model, const TransitionSet& transitions) {
  const ModelConfig& c = model.config;
  if (window.horizon < 1 || window.horizon > 6) {
    throw ContractError("horizon must be within 1..6, got " + std::to_string(window.horizon));
  }
  if (window.horizon != c.horizon) {
    throw ContractError("window horizon " + std::to_string(window.horizon) +
                        " differs from the model horizon " + std::to_string(c.horizon));
  }
  const auto t = static_cast<Eigen::Index>(c.window);
  const auto n = static_cast<Eigen::Index>(c.n_nodes);
  if (window.stage_series.rows() != t || window.stage_series.cols() != n ||
      window.rainfall_series.size() != static_cast<std::size_t>(t)) {
    throw DimensionError("forecast window must be " + std::to_string(t) + "x" +
                         std::to_string(n) + " with " + std::to_string(t) + " rainfall values");
  }
  SequenceData data;
  data.stage.resize(t, n);
  data.rain.resize(static_cast<std::size_t>(t));
  for (Eigen::Index s = 0; s < t; ++s) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto idx = static_cast<std::size_t>(j);
      data.stage(s, j) = (window.stage_series(s, j) - model.norm.stage_mean[idx]) /
                         model.norm.stage_std[idx];
    }
    data.rain[static_cast<std::size_t>(s)] =
        (window.rainfall_series[static_cast<std::size_t>(s)] - model.norm.rain_mean) /
        model.norm.rain_std;
  }
  nn::Tape tape;
  const std::size_t origin[] = {static_cast<std::size_t>(t - 1)};
  return forward_batch(tape, model, transitions, data, origin, false).scalar();
}

std::vector<double> predict(BaseModel& model, const TransitionSet& transitions,
                            const SequenceData& data, std::span<const std::size_t> origins,
                            std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(origins.size());
  for (std::size_t begin = 0; begin < origins.size(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, origins.size() - begin);
    nn::Tape tape;
    Var pred = forward_batch(tape, model, transitions, data, origins.subspan(begin, count), false);
    for (Eigen::Index i = 0; i < pred.rows(); ++i) out.push_back(pred.value()(i, 0));
  }
  return out;
}

BinWeights BinWeights::fit(std::span<const double> targets, int bins) {
  if (targets.empty()) throw ContractError("cannot fit loss weights on an empty target set");
  if (bins < 1) throw ContractError("bin count must be positive");
  BinWeights w;
  const auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
  w.lo_ = *lo;
  w.hi_ = *hi;
  w.counts_.assign(static_cast<std::size_t>(bins), 0);
  w.total_ = targets.size();
  for (double y : targets) {
    const double r = w.hi_ > w.lo_ ? (y - w.lo_) / (w.hi_ - w.lo_) : 0.0;
    const auto b = std::clamp(static_cast<long>(std::floor(r * bins)), 0L, static_cast<long>(bins - 1));
    ++w.counts_[static_cast<std::size_t>(b)];
  }
  return w;
}

double BinWeights::weight(double y) const {
  if (counts_.empty()) throw ContractError("loss weights used before fitting");
  const auto bins = static_cast<long>(counts_.size());
  const double r = hi_ > lo_ ? (y - lo_) / (hi_ - lo_) : 0.0;
  const auto b = std::clamp(static_cast<long>(std::floor(r * static_cast<double>(bins))), 0L, bins - 1);
  const std::size_t count = std::max<std::size_t>(counts_[static_cast<std::size_t>(b)], 1);
  return std::log1p(static_cast<double>(total_) / static_cast<double>(count));
}

std::vector<double> BinWeights::weights(std::span<const double> targets) const {
  std::vector<double> out;
  out.reserve(targets.size());
  for (double y : targets) out.push_back(weight(y));
  return out;
}

double weighted_mse_loss(std::span<const double> predictions, std::span<const double> targets,
                         const BinWeights& bins) {
  if (predictions.empty()) throw ContractError("weighted_mse_loss: empty batch");
  if (predictions.size() != targets.size()) {
    throw DimensionError("weighted_mse_loss: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(targets.size()) + " targets");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double w = bins.weight(targets[i]);
    const double d = predictions[i] - targets[i];
    num += w * d * d;
    den += w;
  }
  return num / den;
}

}  // namespace rivercast
