#include "ssrguard/surrogate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "ssrguard/error.hpp"
#include "ssrguard/io.hpp"

namespace ssrguard {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr const char* kMagic = "ssrguard-surrogate";
constexpr int kFormatVersion = 1;

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::array<double, 2> features(const ImpedancePoint& p) { return {p.w_hm(), p.p_load}; }
std::array<double, 2> targets(const ImpedancePoint& p) { return {p.re, p.im}; }

MatrixXd to_matrix(const std::vector<std::array<double, 2>>& rows, const Normalizer& n) {
  MatrixXd m(2, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto z = n.normalize(rows[i]);
    m(0, static_cast<Eigen::Index>(i)) = z[0];
    m(1, static_cast<Eigen::Index>(i)) = z[1];
  }
  return m;
}

std::string next_token(std::istream& in, const char* what) {
  std::string tok;
  if (!(in >> tok)) throw IoError(std::string("model file truncated while reading ") + what);
  return tok;
}

double next_double(std::istream& in, const char* what) {
  try {
    return parse_double(next_token(in, what));
  } catch (const IoError& e) {
    throw IoError(std::string("model file: bad ") + what + ": " + e.what());
  }
}

void expect(std::istream& in, const std::string& keyword) {
  const std::string tok = next_token(in, keyword.c_str());
  if (tok != keyword) throw IoError("model file: expected '" + keyword + "', found '" + tok + "'");
}

}  // namespace

std::array<double, 2> Normalizer::normalize(std::array<double, 2> x) const {
  return {(x[0] - mean[0]) / scale[0], (x[1] - mean[1]) / scale[1]};
}

std::array<double, 2> Normalizer::denormalize(std::array<double, 2> z) const {
  return {z[0] * scale[0] + mean[0], z[1] * scale[1] + mean[1]};
}

void Normalizer::validate() const {
  for (int i = 0; i < 2; ++i) {
    if (!std::isfinite(mean[i]) || !std::isfinite(scale[i]) || !(scale[i] > 0.0)) {
      throw InvalidArgument("normalization constants must be finite with scale > 0");
    }
  }
}

Normalizer Normalizer::fit(const std::vector<std::array<double, 2>>& rows) {
  if (rows.empty()) throw InvalidArgument("cannot fit a normalizer to no data");
  Normalizer n;
  const double count = static_cast<double>(rows.size());
  for (int c = 0; c < 2; ++c) {
    double s = 0.0;
    for (const auto& r : rows) s += r[c];
    const double m = s / count;
    double v = 0.0;
    for (const auto& r : rows) v += (r[c] - m) * (r[c] - m);
    const double sd = std::sqrt(v / count);
    n.mean[c] = m;
    n.scale[c] = sd > 0.0 ? sd : 1.0;
  }
  return n;
}

SurrogateModel::SurrogateModel(std::vector<int> hidden, std::uint64_t seed) {
  if (hidden.empty()) throw InvalidArgument("surrogate needs at least one hidden layer");
  sizes_.push_back(2);
  for (int h : hidden) {
    if (h < 1) throw InvalidArgument("hidden layer sizes must be >= 1");
    sizes_.push_back(h);
  }
  sizes_.push_back(2);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    MatrixXd w(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = (2.0 * unit_uniform(rng) - 1.0) * limit;
    }
    weights_.push_back(std::move(w));
    biases_.push_back(VectorXd::Zero(out));
  }
}

std::size_t SurrogateModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

MatrixXd SurrogateModel::forward_normalized(const MatrixXd& x) const {
  MatrixXd a = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    MatrixXd z = (weights_[l] * a).colwise() + biases_[l];
    a = l + 1 < weights_.size() ? MatrixXd(z.array().tanh()) : std::move(z);
  }
  return a;
}

std::complex<double> SurrogateModel::predict(double w, double p_load) const {
  const auto z = input_norm.normalize({w, p_load});
  VectorXd a(2);
  a << z[0], z[1];
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    VectorXd next = weights_[l] * a + biases_[l];
    a = l + 1 < weights_.size() ? VectorXd(next.array().tanh()) : std::move(next);
  }
  const auto y = output_norm.denormalize({a(0), a(1)});
  return {y[0], y[1]};
}

std::vector<std::complex<double>> SurrogateModel::predict(
    const std::vector<std::array<double, 2>>& inputs) const {
  std::vector<std::complex<double>> out;
  out.reserve(inputs.size());
  if (inputs.empty()) return out;
  const MatrixXd y = forward_normalized(to_matrix(inputs, input_norm));
  for (Eigen::Index i = 0; i < y.cols(); ++i) {
    const auto d = output_norm.denormalize({y(0, i), y(1, i)});
    out.emplace_back(d[0], d[1]);
  }
  return out;
}

Eigen::Matrix2d SurrogateModel::input_jacobian(double w, double p_load) const {
  const auto z = input_norm.normalize({w, p_load});
  VectorXd a(2);
  a << z[0], z[1];
  // Forward-mode: carry d(activation)/d(normalized input).
  MatrixXd da = MatrixXd::Identity(2, 2);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    VectorXd pre = weights_[l] * a + biases_[l];
    MatrixXd dpre = weights_[l] * da;
    if (l + 1 < weights_.size()) {
      a = pre.array().tanh();
      da = (1.0 - a.array().square()).matrix().asDiagonal() * dpre;
    } else {
      a = pre;
      da = dpre;
    }
  }
  Eigen::Matrix2d j;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) j(r, c) = da(r, c) * output_norm.scale[r] / input_norm.scale[c];
  }
  return j;
}

double SurrogateModel::loss_and_gradient(const MatrixXd& x, const MatrixXd& y, VectorXd* gradient) const {
  const std::size_t layers = weights_.size();
  std::vector<MatrixXd> acts;
  acts.reserve(layers + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < layers; ++l) {
    MatrixXd z = (weights_[l] * acts.back()).colwise() + biases_[l];
    acts.push_back(l + 1 < layers ? MatrixXd(z.array().tanh()) : std::move(z));
  }
  const MatrixXd err = acts.back() - y;
  const double count = static_cast<double>(err.size());
  const double loss = err.squaredNorm() / count;
  if (gradient == nullptr) return loss;

  gradient->resize(static_cast<Eigen::Index>(parameter_count()));
  std::vector<Eigen::Index> offset(layers);
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offset[l] = pos;
    pos += weights_[l].size() + biases_[l].size();
  }
  MatrixXd delta = (2.0 / count) * err;
  for (std::size_t l = layers; l-- > 0;) {
    const MatrixXd gw = delta * acts[l].transpose();
    const VectorXd gb = delta.rowwise().sum();
    Eigen::Index k = offset[l];
    for (Eigen::Index r = 0; r < gw.rows(); ++r) {
      for (Eigen::Index c = 0; c < gw.cols(); ++c) (*gradient)(k++) = gw(r, c);
    }
    for (Eigen::Index r = 0; r < gb.size(); ++r) (*gradient)(k++) = gb(r);
    if (l > 0) {
      delta = (weights_[l].transpose() * delta).cwiseProduct(
          MatrixXd((1.0 - acts[l].array().square())));
    }
  }
  return loss;
}

VectorXd SurrogateModel::parameters() const {
  VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) flat(k++) = weights_[l](r, c);
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) flat(k++) = biases_[l](r);
  }
  return flat;
}

void SurrogateModel::set_parameters(const VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw InvalidArgument("parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = flat(k++);
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l](r) = flat(k++);
  }
}

void SurrogateModel::validate() const {
  if (sizes_.size() < 3 || sizes_.front() != 2 || sizes_.back() != 2) {
    throw InvalidArgument("surrogate architecture must be 2 -> hidden... -> 2");
  }
  if (weights_.size() + 1 != sizes_.size() || biases_.size() != weights_.size()) {
    throw InvalidArgument("surrogate layer count mismatch");
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l].rows() != sizes_[l + 1] || weights_[l].cols() != sizes_[l] ||
        biases_[l].size() != sizes_[l + 1]) {
      throw InvalidArgument("surrogate layer " + std::to_string(l) + " has inconsistent shapes");
    }
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) {
      throw InvalidArgument("surrogate layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
  input_norm.validate();
  output_norm.validate();
}

bool operator==(const SurrogateModel& a, const SurrogateModel& b) {
  if (a.sizes_ != b.sizes_ || !(a.input_norm == b.input_norm) || !(a.output_norm == b.output_norm)) {
    return false;
  }
  for (std::size_t l = 0; l < a.weights_.size(); ++l) {
    if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
  }
  return true;
}

void SurrogateModel::save(std::ostream& out) const {
  validate();
  out << kMagic << ' ' << kFormatVersion << '\n' << "layers";
  for (int s : sizes_) out << ' ' << s;
  out << '\n';
  const auto pair = [&](const char* key, const std::array<double, 2>& v) {
    out << key << ' ' << format_double(v[0]) << ' ' << format_double(v[1]) << '\n';
  };
  pair("input_mean", input_norm.mean);
  pair("input_scale", input_norm.scale);
  pair("output_mean", output_norm.mean);
  pair("output_scale", output_norm.scale);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out << "layer " << l << ' ' << weights_[l].rows() << ' ' << weights_[l].cols() << '\n';
    for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
        out << (c == 0 ? "" : " ") << format_double(weights_[l](r, c));
      }
      out << '\n';
    }
    for (Eigen::Index r = 0; r < biases_[l].size(); ++r) {
      out << (r == 0 ? "" : " ") << format_double(biases_[l](r));
    }
    out << '\n';
  }
}

SurrogateModel SurrogateModel::load(std::istream& in) {
  // Skip provenance comments.
  while (in >> std::ws && in.peek() == '#') {
    std::string ignored;
    std::getline(in, ignored);
  }
  expect(in, kMagic);
  if (next_token(in, "version") != std::to_string(kFormatVersion)) {
    throw IoError("model file: unsupported format version");
  }
  expect(in, "layers");
  SurrogateModel m;
  std::string line;
  std::getline(in, line);
  std::istringstream sizes(line);
  for (int s; sizes >> s;) m.sizes_.push_back(s);
  if (m.sizes_.size() < 3) throw IoError("model file: architecture line needs at least three sizes");
  const auto pair = [&](const char* key, std::array<double, 2>& v) {
    expect(in, key);
    v[0] = next_double(in, key);
    v[1] = next_double(in, key);
  };
  pair("input_mean", m.input_norm.mean);
  pair("input_scale", m.input_norm.scale);
  pair("output_mean", m.output_norm.mean);
  pair("output_scale", m.output_norm.scale);
  for (std::size_t l = 0; l + 1 < m.sizes_.size(); ++l) {
    expect(in, "layer");
    if (next_token(in, "layer index") != std::to_string(l)) throw IoError("model file: layer out of order");
    const int rows = static_cast<int>(next_double(in, "row count"));
    const int cols = static_cast<int>(next_double(in, "column count"));
    if (rows != m.sizes_[l + 1] || cols != m.sizes_[l]) {
      throw IoError("model file: layer " + std::to_string(l) + " shape disagrees with architecture");
    }
    MatrixXd w(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) w(r, c) = next_double(in, "weight");
    }
    VectorXd b(rows);
    for (int r = 0; r < rows; ++r) b(r) = next_double(in, "bias");
    m.weights_.push_back(std::move(w));
    m.biases_.push_back(std::move(b));
  }
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("model file: ") + e.what());
  }
  return m;
}

void SurrogateModel::save_file(const std::filesystem::path& path, const std::string& comment) const {
  write_file_atomic(path, [&](std::ostream& out) {
    std::istringstream lines(comment);
    for (std::string l; std::getline(lines, l);) out << "# " << l << '\n';
    save(out);
  });
}

SurrogateModel SurrogateModel::load_file(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  try {
    return load(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void TrainingConfig::validate() const {
  if (hidden.empty()) throw InvalidArgument("training.hidden must list at least one layer");
  for (int h : hidden) {
    if (h < 1) throw InvalidArgument("training.hidden sizes must be >= 1");
  }
  if (epochs < 1) throw InvalidArgument("training.epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("training.batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !(max_learning_rate >= learning_rate)) {
    throw InvalidArgument("training.learning_rate must be > 0 and <= max_learning_rate");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("training.momentum must lie in [0, 1)");
  if (!(growth >= 1.0)) throw InvalidArgument("training.growth must be >= 1");
  if (!(min_learning_rate > 0.0)) throw InvalidArgument("training.min_learning_rate must be > 0");
  if (!(rejection_tolerance >= 0.0) || !std::isfinite(rejection_tolerance)) {
    throw InvalidArgument("training.rejection_tolerance must be finite and >= 0");
  }
}

TrainingResult train(const std::vector<ImpedancePoint>& train_set, const TrainingConfig& config) {
  config.validate();
  if (train_set.size() < 10) throw InvalidArgument("training needs at least 10 points");
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::array<double, 2>> xs;
  std::vector<std::array<double, 2>> ys;
  for (const ImpedancePoint& p : train_set) {
    xs.push_back(features(p));
    ys.push_back(targets(p));
    for (double v : {xs.back()[0], xs.back()[1], ys.back()[0], ys.back()[1]}) {
      if (!std::isfinite(v)) {
        throw InvalidArgument("training point (P=" + format_double(p.p_load) + " W, f=" +
                              format_double(p.f_hz) + " Hz) is not finite");
      }
    }
  }
  TrainingResult result{SurrogateModel(config.hidden, config.seed), {}, 0.0};
  SurrogateModel& model = result.model;
  model.input_norm = Normalizer::fit(xs);
  model.output_norm = Normalizer::fit(ys);
  const MatrixXd x = to_matrix(xs, model.input_norm);
  const MatrixXd y = to_matrix(ys, model.output_norm);

  const auto n = static_cast<Eigen::Index>(train_set.size());
  const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(config.batch_size, train_set.size()));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  VectorXd params = model.parameters();
  VectorXd velocity = VectorXd::Zero(params.size());
  VectorXd grad;
  double lr = config.learning_rate;
  double accepted = model.loss_and_gradient(x, y, nullptr);
  double best = accepted;
  VectorXd best_params = params;
  double plateau_ref = accepted;
  std::size_t stale = 0;
  MatrixXd xb(2, batch);
  MatrixXd yb(2, batch);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    const VectorXd saved_params = params;
    for (Eigen::Index b0 = 0; b0 < n; b0 += batch) {
      const Eigen::Index m = std::min(batch, n - b0);
      for (Eigen::Index j = 0; j < m; ++j) {
        xb.col(j) = x.col(order[static_cast<std::size_t>(b0 + j)]);
        yb.col(j) = y.col(order[static_cast<std::size_t>(b0 + j)]);
      }
      model.loss_and_gradient(xb.leftCols(m), yb.leftCols(m), &grad);
      velocity = config.momentum * velocity - lr * grad;
      params += velocity;
      model.set_parameters(params);
    }
    const double loss = model.loss_and_gradient(x, y, nullptr);
    if (!std::isfinite(loss) && lr <= config.min_learning_rate) {
      throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
    }
    // Mini-batch noise makes small increases routine, so only a clear jump
    // counts as overshooting.
    if (std::isfinite(loss) && loss <= accepted * (1.0 + config.rejection_tolerance)) {
      accepted = loss;
      lr = std::min(lr * config.growth, config.max_learning_rate);
      if (loss < best) {
        best = loss;
        best_params = params;
      }
    } else {
      params = saved_params;
      velocity = VectorXd::Zero(params.size());
      model.set_parameters(params);
      lr = std::max(lr * 0.5, config.min_learning_rate);
    }
    result.loss_history.push_back(best);

    if (best < plateau_ref * (1.0 - config.plateau_tolerance)) {
      plateau_ref = best;
      stale = 0;
    } else if (++stale >= config.plateau_patience) {
      lr = std::max(lr * 0.5, config.min_learning_rate);
      stale = 0;
    }
  }
  model.set_parameters(best_params);
  result.train_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

double smape_term(double y, double p) {
  const double den = std::abs(y) + std::abs(p);
  return den == 0.0 ? 0.0 : 2.0 * std::abs(y - p) / den;
}

RegressionMetrics evaluate(const SurrogateModel& model, const std::vector<ImpedancePoint>& test_set) {
  if (test_set.empty()) throw InvalidArgument("evaluation needs a non-empty test set");
  RegressionMetrics m;
  double se = 0.0;
  double se_norm = 0.0;
  double sm = 0.0;
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::complex<double>> pred;
  pred.reserve(test_set.size());
  for (const ImpedancePoint& p : test_set) pred.push_back(model.predict(p.w_hm(), p.p_load));
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const std::array<double, 2> y = targets(test_set[i]);
    const std::array<double, 2> yhat{pred[i].real(), pred[i].imag()};
    const auto yn = model.output_norm.normalize(y);
    const auto pn = model.output_norm.normalize(yhat);
    for (int c = 0; c < 2; ++c) {
      se += (y[c] - yhat[c]) * (y[c] - yhat[c]);
      se_norm += (yn[c] - pn[c]) * (yn[c] - pn[c]);
      sm += smape_term(y[c], yhat[c]);
    }
  }
  const double count = 2.0 * static_cast<double>(test_set.size());
  m.mse = se / count;
  m.mse_normalized = se_norm / count;
  m.smape = sm / count;
  m.inference_ms = 1e3 * elapsed / static_cast<double>(test_set.size());
  return m;
}

std::pair<std::vector<ImpedancePoint>, std::vector<ImpedancePoint>> split_dataset(
    const std::vector<ImpedancePoint>& points, double train_fraction, std::uint64_t seed) {
  if (points.empty()) throw InvalidArgument("cannot split an empty dataset");
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw InvalidArgument("train_fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(points.size())));
  std::pair<std::vector<ImpedancePoint>, std::vector<ImpedancePoint>> out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    (i < n_train ? out.first : out.second).push_back(points[idx[i]]);
  }
  return out;
}

void write_metrics_csv(std::ostream& out,
                       const std::vector<std::pair<std::string, RegressionMetrics>>& rows,
                       bool include_timing) {
  out << "model,mse_ohm2,mse_normalized,smape" << (include_timing ? ",train_time_s,inference_ms" : "")
      << '\n';
  for (const auto& [name, m] : rows) {
    out << name << ',' << format_double(m.mse) << ',' << format_double(m.mse_normalized) << ','
        << format_double(m.smape);
    if (include_timing) out << ',' << format_double(m.train_time_s) << ',' << format_double(m.inference_ms);
    out << '\n';
  }
}

}  // namespace ssrguard
