#include "hprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "hprobe/error.hpp"
#include "hprobe/random.hpp"

namespace hprobe {

std::string_view to_string(ProbeKind k) {
  return k == ProbeKind::kLinear ? "linear" : "mlp";
}

std::string_view to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "gelu";
}

ProbeKind probe_kind_from_string(std::string_view s) {
  if (s == "linear") return ProbeKind::kLinear;
  if (s == "mlp") return ProbeKind::kMlp;
  throw ConfigError("probe.kind must be 'linear' or 'mlp'");
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "gelu") return Activation::kGelu;
  throw ConfigError("probe.activation must be 'relu' or 'gelu'");
}

ProbeArch ProbeArch::linear(int hidden_dim) {
  ProbeArch a;
  a.kind = ProbeKind::kLinear;
  a.layer_dims = {hidden_dim, 1};
  a.use_layer_norm = false;
  return a;
}

ProbeArch ProbeArch::default_mlp(int hidden_dim) {
  std::vector<int> widths;
  int prev = hidden_dim;
  for (int w : {hidden_dim / 4, hidden_dim / 16}) {
    if (w >= 2 && w < prev) {
      widths.push_back(w);
      prev = w;
    }
  }
  if (widths.empty()) widths.push_back(std::max(2, hidden_dim));
  return mlp(hidden_dim, widths);
}

ProbeArch ProbeArch::mlp(int hidden_dim, const std::vector<int>& hidden_widths,
                         Activation activation, bool use_layer_norm) {
  ProbeArch a;
  a.kind = ProbeKind::kMlp;
  a.layer_dims.push_back(hidden_dim);
  a.layer_dims.insert(a.layer_dims.end(), hidden_widths.begin(),
                      hidden_widths.end());
  a.layer_dims.push_back(1);
  a.activation = activation;
  a.use_layer_norm = use_layer_norm;
  return a;
}

void validate_arch(const ProbeArch& arch) {
  const auto& d = arch.layer_dims;
  if (d.size() < 2) throw ConfigError("probe: layer_dims needs >= 2 entries");
  if (d.back() != 1) throw ConfigError("probe: layer_dims must end at 1");
  if (std::any_of(d.begin(), d.end(), [](int w) { return w < 1; })) {
    throw ConfigError("probe: layer_dims entries must be positive");
  }
  for (std::size_t i = 2; i < d.size(); ++i) {
    if (d[i] >= d[i - 1]) {
      throw ConfigError(
          "probe: layer_dims must be strictly decreasing after the input");
    }
  }
  if (arch.kind == ProbeKind::kLinear && d.size() != 2) {
    throw ConfigError("probe: a linear probe has layer_dims [hidden_dim, 1]");
  }
  if (arch.kind == ProbeKind::kMlp && d.size() < 3) {
    throw ConfigError("probe: an mlp probe needs at least one hidden layer");
  }
}

std::size_t ProbeParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += l.weight.size() + l.bias.size() + l.norm_gain.size() +
         l.norm_shift.size();
  }
  return n;
}

std::vector<double> ProbeParams::flatten() const {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (const auto& l : layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
        out.push_back(l.weight(i, j));
      }
    }
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) out.push_back(l.bias(j));
    for (Eigen::Index j = 0; j < l.norm_gain.size(); ++j) out.push_back(l.norm_gain(j));
    for (Eigen::Index j = 0; j < l.norm_shift.size(); ++j) out.push_back(l.norm_shift(j));
  }
  return out;
}

void ProbeParams::assign(std::span<const double> values) {
  if (values.size() != num_parameters()) {
    throw ShapeError("probe: parameter vector has " +
                     std::to_string(values.size()) + " entries, expected " +
                     std::to_string(num_parameters()));
  }
  std::size_t k = 0;
  for (auto& l : layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = values[k++];
    }
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = values[k++];
    for (Eigen::Index j = 0; j < l.norm_gain.size(); ++j) l.norm_gain(j) = values[k++];
    for (Eigen::Index j = 0; j < l.norm_shift.size(); ++j) l.norm_shift(j) = values[k++];
  }
}

ProbeParams ProbeParams::zeros_like() const {
  ProbeParams z = *this;
  for (auto& l : z.layers) {
    l.weight.setZero();
    l.bias.setZero();
    l.norm_gain.setZero();
    l.norm_shift.setZero();
  }
  return z;
}

bool ProbeParams::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite() ||
        !l.norm_gain.allFinite() || !l.norm_shift.allFinite()) {
      return false;
    }
  }
  return true;
}

void ProbeParams::round_to_float() {
  auto r = [](auto& m) { m = m.template cast<float>().template cast<double>(); };
  for (auto& l : layers) {
    r(l.weight);
    r(l.bias);
    r(l.norm_gain);
    r(l.norm_shift);
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamped_sigmoid(double z) {
  return sigmoid(std::clamp(z, -kLogitClamp, kLogitClamp));
}

ProbeParams init_probe(const ProbeArch& arch, std::uint64_t seed) {
  validate_arch(arch);
  Rng rng = make_rng(seed, "probe.init");
  ProbeParams p;
  p.arch = arch;
  const auto& d = arch.layer_dims;
  for (std::size_t k = 0; k + 1 < d.size(); ++k) {
    const int in = d[k], out = d[k + 1];
    std::normal_distribution<double> w(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    DenseLayer layer;
    layer.weight.resize(in, out);
    for (int i = 0; i < in; ++i) {
      for (int j = 0; j < out; ++j) layer.weight(i, j) = w(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    const bool hidden = k + 2 < d.size();
    if (hidden && arch.use_layer_norm) {
      layer.norm_gain = Eigen::VectorXd::Ones(out);
      layer.norm_shift = Eigen::VectorXd::Zero(out);
    }
    p.layers.push_back(std::move(layer));
  }
  p.round_to_float();
  return p;
}

namespace {

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
}

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi *
                     std::numbers::sqrt2;
  return cdf + x * pdf;
}

void check_input(const ProbeParams& params, const Eigen::MatrixXd& states) {
  if (params.layers.empty()) throw ShapeError("probe: no layers");
  if (states.cols() != params.layers.front().weight.rows()) {
    throw ShapeError("probe: state width " + std::to_string(states.cols()) +
                     " != hidden_dim " +
                     std::to_string(params.layers.front().weight.rows()));
  }
}

}  // namespace

ProbePass::ProbePass(const ProbeParams& params, const Eigen::MatrixXd& states)
    : params_(params) {
  check_input(params, states);
  const std::size_t n_layers = params.layers.size();
  const bool relu = params.arch.activation == Activation::kRelu;
  Eigen::MatrixXd x = states;
  for (std::size_t k = 0; k + 1 < n_layers; ++k) {
    const auto& layer = params.layers[k];
    inputs_.push_back(x);
    Eigen::MatrixXd a = x * layer.weight;
    a.rowwise() += layer.bias.transpose();
    Hidden h;
    if (layer.norm_gain.size() > 0) {
      const Eigen::Index width = a.cols();
      Eigen::VectorXd mean = a.rowwise().mean();
      Eigen::MatrixXd centered = a.colwise() - mean;
      Eigen::VectorXd var = centered.rowwise().squaredNorm() / static_cast<double>(width);
      h.inv_std = (var.array() + kLayerNormEps).rsqrt().matrix();
      h.normalized = centered.array().colwise() * h.inv_std.array();
      a = h.normalized;
      a.array().rowwise() *= layer.norm_gain.transpose().array();
      a.rowwise() += layer.norm_shift.transpose();
    }
    h.pre_activation = a;
    if (relu) {
      x = a.cwiseMax(0.0);
    } else {
      x = a.unaryExpr([](double v) { return gelu(v); });
    }
    hidden_.push_back(std::move(h));
  }
  const auto& last = params.layers.back();
  inputs_.push_back(x);
  logits_ = x * last.weight.col(0);
  logits_.array() += last.bias(0);
}

void ProbePass::accumulate_gradient(const Eigen::VectorXd& upstream,
                                    ProbeParams& grad) const {
  if (upstream.size() != logits_.size()) {
    throw ShapeError("probe: upstream gradient length " +
                     std::to_string(upstream.size()) + " != token count " +
                     std::to_string(logits_.size()));
  }
  const std::size_t n_layers = params_.layers.size();
  const bool relu = params_.arch.activation == Activation::kRelu;

  auto& g_last = grad.layers.back();
  g_last.weight.col(0) += inputs_.back().transpose() * upstream;
  g_last.bias(0) += upstream.sum();
  Eigen::MatrixXd dx = upstream * params_.layers.back().weight.col(0).transpose();

  for (std::size_t k = n_layers - 1; k-- > 0;) {
    const auto& layer = params_.layers[k];
    const auto& h = hidden_[k];
    auto& g = grad.layers[k];
    Eigen::MatrixXd dy;
    if (relu) {
      dy = dx.array() * (h.pre_activation.array() > 0.0).cast<double>();
    } else {
      dy = dx.array() *
           h.pre_activation.unaryExpr([](double v) { return gelu_grad(v); }).array();
    }
    Eigen::MatrixXd da;
    if (layer.norm_gain.size() > 0) {
      g.norm_gain += (dy.array() * h.normalized.array()).colwise().sum().transpose().matrix();
      g.norm_shift += dy.colwise().sum().transpose();
      Eigen::MatrixXd dxhat = dy.array().rowwise() * layer.norm_gain.transpose().array();
      const double width = static_cast<double>(dxhat.cols());
      Eigen::VectorXd mean_d = dxhat.rowwise().sum() / width;
      Eigen::VectorXd mean_dx =
          (dxhat.array() * h.normalized.array()).rowwise().sum().matrix() / width;
      da = dxhat.colwise() - mean_d;
      da -= (h.normalized.array().colwise() * mean_dx.array()).matrix();
      da = da.array().colwise() * h.inv_std.array();
    } else {
      da = std::move(dy);
    }
    g.weight += inputs_[k].transpose() * da;
    g.bias += da.colwise().sum().transpose();
    if (k > 0) dx = da * layer.weight.transpose();
  }
}

Eigen::VectorXd forward(const ProbeParams& params, const Eigen::MatrixXd& states) {
  return ProbePass(params, states).logits();
}

Eigen::VectorXd predict_proba(const ProbeParams& params,
                              const Eigen::MatrixXd& states) {
  return forward(params, states).unaryExpr([](double z) { return clamped_sigmoid(z); });
}

ProbeParams backward(const ProbeParams& params, const Eigen::MatrixXd& states,
                     const Eigen::VectorXd& upstream) {
  ProbePass pass(params, states);
  ProbeParams grad = params.zeros_like();
  pass.accumulate_gradient(upstream, grad);
  return grad;
}

int default_probe_layer(int num_layers) {
  return std::max(1, (95 * num_layers) / 100);
}

}  // namespace hprobe
