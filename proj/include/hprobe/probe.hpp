#ifndef HPROBE_PROBE_HPP_
#define HPROBE_PROBE_HPP_

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace hprobe {

enum class ProbeKind { kLinear, kMlp };
enum class Activation { kRelu, kGelu };

std::string_view to_string(ProbeKind k);
std::string_view to_string(Activation a);
ProbeKind probe_kind_from_string(std::string_view s);
Activation activation_from_string(std::string_view s);

// layer_dims runs from the hidden-state width down to 1. Hidden layers apply
// affine -> (layer norm) -> activation; the last layer is affine only.
struct ProbeArch {
  ProbeKind kind = ProbeKind::kMlp;
  std::vector<int> layer_dims;
  Activation activation = Activation::kGelu;
  bool use_layer_norm = true;

  int input_dim() const { return layer_dims.empty() ? 0 : layer_dims.front(); }

  static ProbeArch linear(int hidden_dim);
  // hidden_dim -> hidden_dim/4 -> hidden_dim/16 -> 1, dropping widths that
  // would not be strictly decreasing or fall below 2.
  static ProbeArch default_mlp(int hidden_dim);
  static ProbeArch mlp(int hidden_dim, const std::vector<int>& hidden_widths,
                       Activation activation = Activation::kGelu,
                       bool use_layer_norm = true);

  bool operator==(const ProbeArch&) const = default;
};

// Throws ConfigError when the arch breaks its invariants.
void validate_arch(const ProbeArch& arch);

struct DenseLayer {
  Eigen::MatrixXd weight;      // [in x out]
  Eigen::VectorXd bias;        // [out]
  Eigen::VectorXd norm_gain;   // [out], empty without layer norm
  Eigen::VectorXd norm_shift;  // [out], empty without layer norm
};

// Also used as the gradient record: a gradient has the same shapes as the
// parameters it differentiates.
struct ProbeParams {
  ProbeArch arch;
  std::vector<DenseLayer> layers;

  std::size_t num_parameters() const;
  // Order: per layer, weight (row-major in x out), bias, gain, shift.
  std::vector<double> flatten() const;
  void assign(std::span<const double> values);
  ProbeParams zeros_like() const;
  bool all_finite() const;
  // Rounds every value to the nearest float so f32 checkpoints are exact.
  void round_to_float();
};

inline constexpr double kLogitClamp = 30.0;
inline constexpr double kLayerNormEps = 1e-5;

double sigmoid(double z);
// sigmoid(clamp(z, -kLogitClamp, kLogitClamp))
double clamped_sigmoid(double z);

// Weights ~ N(0, 1/fan_in), biases 0, norm gain 1 and shift 0.
ProbeParams init_probe(const ProbeArch& arch, std::uint64_t seed);

// Logits for every row of `states` [n x hidden_dim]. Masked tokens still get
// a logit; callers drop them.
Eigen::VectorXd forward(const ProbeParams& params, const Eigen::MatrixXd& states);

Eigen::VectorXd predict_proba(const ProbeParams& params,
                              const Eigen::MatrixXd& states);

// Gradient of sum_t upstream[t] * z_t with respect to every parameter.
ProbeParams backward(const ProbeParams& params, const Eigen::MatrixXd& states,
                     const Eigen::VectorXd& upstream);

// Forward pass that keeps what backward needs; lets the trainer reuse one
// pass for both.
class ProbePass {
 public:
  ProbePass(const ProbeParams& params, const Eigen::MatrixXd& states);
  const Eigen::VectorXd& logits() const { return logits_; }
  // Adds the gradient for `upstream` into `grad`.
  void accumulate_gradient(const Eigen::VectorXd& upstream,
                           ProbeParams& grad) const;

 private:
  struct Hidden {
    Eigen::MatrixXd normalized;  // pre-gain layer-norm output (or pre-act)
    Eigen::VectorXd inv_std;
    Eigen::MatrixXd pre_activation;
  };
  const ProbeParams& params_;
  std::vector<Eigen::MatrixXd> inputs_;  // input to each dense layer
  std::vector<Hidden> hidden_;
  Eigen::VectorXd logits_;
};

// floor(0.95 * num_layers), clamped to >= 1.
int default_probe_layer(int num_layers);

}  // namespace hprobe

#endif  // HPROBE_PROBE_HPP_
