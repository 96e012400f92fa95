#ifndef HPROBE_GP_HPP_
#define HPROBE_GP_HPP_

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hprobe {

struct GpHyper {
  double length_scale = 0.2;  // on layer index rescaled to [0, 1]
  double signal_variance = 1.0;
  double noise_variance = 1e-4;
};

void validate_gp_hyper(const GpHyper& h);

struct GpObservation {
  int layer = 0;
  double value = 0.0;
};

struct GpPrediction {
  double mean = 0.0;
  double sd = 0.0;
};

// Zero-mean GP regression over layers 1..num_layers with a squared-exponential
// kernel on x = (l - 1) / (L - 1).
class GaussianProcess {
 public:
  GaussianProcess(GpHyper hyper, int num_layers);

  // Refactorizes the Gram matrix; adds diagonal jitter when it is not
  // numerically PD and throws NumericError when the ladder is exhausted.
  void fit(std::vector<GpObservation> observations);

  GpPrediction predict(int layer) const;
  std::vector<GpPrediction> predict(std::span<const int> layers) const;

  // log p(y | X, hyper); 0 with no observations.
  double log_marginal_likelihood() const;

  const GpHyper& hyper() const { return hyper_; }
  void set_hyper(const GpHyper& hyper);
  const std::vector<GpObservation>& observations() const { return obs_; }
  double jitter() const { return jitter_; }
  double input(int layer) const;
  double kernel(int a, int b) const;

 private:
  GpHyper hyper_;
  int num_layers_;
  // Extended precision: closely spaced layers make the Gram matrix badly
  // conditioned and K^-1 y large, which costs digits in double.
  using Matrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

  long double kernel_ld(int a, int b) const;

  std::vector<GpObservation> obs_;
  Eigen::LLT<Matrix> chol_;
  Vector alpha_;  // K^-1 y
  double jitter_ = 0.0;
};

// Grid search over length scale and signal variance maximizing the log
// marginal likelihood; noise is kept. Returns the refitted hyperparameters.
GpHyper refresh_hyper(GaussianProcess& gp);

// (mu - best) Phi(z) + sd phi(z); sd below kEiSdFloor counts as zero.
double expected_improvement(const GpPrediction& p, double best);
inline constexpr double kEiSdFloor = 1e-6;

double ucb(const GpPrediction& p, double beta);

// 2 log(|CL| t^2 pi^2 / (6 delta))
double ucb_beta(int num_candidates, int t, double delta = 0.1);

}  // namespace hprobe

#endif  // HPROBE_GP_HPP_
