#pragma once

// Dense tanh network mapping (w [rad/s], P_load [W]) to (Re Z, Im Z) [ohm].

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ssrguard/sweep.hpp"

namespace ssrguard {

/// Per-feature affine normalization: z = (x - mean) / scale.
struct Normalizer {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> scale{1.0, 1.0};

  std::array<double, 2> normalize(std::array<double, 2> x) const;
  std::array<double, 2> denormalize(std::array<double, 2> z) const;
  void validate() const;
  /// Zero mean, unit population standard deviation (scale 1 for constant columns).
  static Normalizer fit(const std::vector<std::array<double, 2>>& rows);

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

class SurrogateModel {
 public:
  SurrogateModel() = default;
  /// Glorot-uniform weights, zero biases, identity normalization.
  SurrogateModel(std::vector<int> hidden, std::uint64_t seed);

  /// Input 2, the hidden sizes, output 2.
  const std::vector<int>& layer_sizes() const { return sizes_; }
  std::size_t layer_count() const { return weights_.size(); }
  std::size_t parameter_count() const;

  std::complex<double> predict(double w, double p_load) const;
  std::vector<std::complex<double>> predict(const std::vector<std::array<double, 2>>& inputs) const;
  /// d(Re, Im)/d(w, P_load) in physical units; row = output, column = input.
  Eigen::Matrix2d input_jacobian(double w, double p_load) const;

  /// Normalized-space forward pass; columns are samples.
  Eigen::MatrixXd forward_normalized(const Eigen::MatrixXd& x) const;

  /// Mean squared error over samples and both outputs, in normalized space,
  /// and its gradient with respect to the flat parameter vector.
  double loss_and_gradient(const Eigen::MatrixXd& x_norm, const Eigen::MatrixXd& y_norm,
                           Eigen::VectorXd* gradient) const;

  /// Layer by layer: W row-major, then b.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  Normalizer input_norm;
  Normalizer output_norm;

  void save(std::ostream& out) const;
  static SurrogateModel load(std::istream& in);
  void save_file(const std::filesystem::path& path, const std::string& comment = {}) const;
  static SurrogateModel load_file(const std::filesystem::path& path);

  void validate() const;
  friend bool operator==(const SurrogateModel&, const SurrogateModel&);

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> weights_;  // out x in
  std::vector<Eigen::VectorXd> biases_;
};

struct TrainingConfig {
  std::vector<int> hidden{16, 16, 16, 16};
  std::size_t epochs = 2000;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double max_learning_rate = 0.05;
  double momentum = 0.9;
  double growth = 1.05;          // step grows after an accepted epoch
  double rejection_tolerance = 0.2;  // relative loss rise that still counts as accepted
  std::size_t plateau_patience = 100;
  double plateau_tolerance = 1e-4;  // relative improvement counted as progress
  double min_learning_rate = 1e-7;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingResult {
  SurrogateModel model;
  std::vector<double> loss_history;  // best full-set normalized MSE after each epoch, non-increasing
  double train_time_s = 0.0;
};

/// Deterministic given config.seed. Throws Error naming the epoch on a non-finite loss.
TrainingResult train(const std::vector<ImpedancePoint>& train_set, const TrainingConfig& config);

struct RegressionMetrics {
  double mse = 0.0;             // ohm^2, raw outputs
  double mse_normalized = 0.0;  // on standardized outputs
  double smape = 0.0;           // 0..2
  double train_time_s = 0.0;
  double inference_ms = 0.0;    // mean single-point predict time
};

RegressionMetrics evaluate(const SurrogateModel& model, const std::vector<ImpedancePoint>& test_set);

/// Symmetric absolute percentage error of one pair: 2|y - p| / (|y| + |p|), 0/0 -> 0.
double smape_term(double y, double p);

/// Seeded shuffle then split; the first part holds round(fraction * n) points.
std::pair<std::vector<ImpedancePoint>, std::vector<ImpedancePoint>> split_dataset(
    const std::vector<ImpedancePoint>& points, double train_fraction = 0.8, std::uint64_t seed = 0);

/// `model,mse_ohm2,mse_normalized,smape` followed, when `include_timing` is
/// set, by `train_time_s,inference_ms`. Timings vary run to run.
void write_metrics_csv(std::ostream& out,
                       const std::vector<std::pair<std::string, RegressionMetrics>>& rows,
                       bool include_timing = true);

}  // namespace ssrguard
