#include "aemot/classifier.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "aemot/simd/kernels.hpp"

namespace aemot {

namespace {

constexpr char kModelMagic[5] = {'A', 'E', 'M', 'L', 'P'};
constexpr std::uint32_t kModelVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Activations of one forward pass, kept for backpropagation.
struct Activations {
  std::array<double, 784> x0{};  // input shifted to the 0.5 midpoint
  std::array<double, 128> z1{};
  std::array<double, 128> a1{};
  std::array<double, 64> z2{};
  std::array<double, 64> a2{};
  double z3 = 0.0;
};

void dense(const simd::KernelTable& k, std::span<const double> w, std::span<const double> b,
           const double* in, std::size_t n_in, double* out, std::size_t n_out) {
  for (std::size_t i = 0; i < n_out; ++i) out[i] = k.dot(w.data() + i * n_in, in, n_in) + b[i];
}

void run_forward(const Mlp& model, const double* x, Activations& act) {
  const auto& k = simd::kernels();
  // An empty patch maps to 0.5 everywhere; without the shift that common offset dominates
  // every first-layer unit and training stalls at chance.
  for (std::size_t i = 0; i < 784; ++i) act.x0[i] = x[i] - kInputMidpoint;
  dense(k, model.weights(0), model.biases(0), act.x0.data(), 784, act.z1.data(), 128);
  for (std::size_t i = 0; i < 128; ++i) act.a1[i] = std::max(0.0, act.z1[i]);
  dense(k, model.weights(1), model.biases(1), act.a1.data(), 128, act.z2.data(), 64);
  for (std::size_t i = 0; i < 64; ++i) act.a2[i] = std::max(0.0, act.z2[i]);
  double z3 = 0.0;
  dense(k, model.weights(2), model.biases(2), act.a2.data(), 64, &z3, 1);
  act.z3 = z3;
}

void check_input(std::span<const double> x) {
  if (x.size() != kLayerSizes[0]) {
    throw std::invalid_argument("classifier input must have 784 values, got " +
                                std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("classifier input is not finite");
  }
}

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T read_le(std::istream& in, const char* what) {
  std::array<char, sizeof(T)> bytes;
  in.read(bytes.data(), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error(std::string("model file truncated while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t Mlp::weight_offset(std::size_t layer) {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += kLayerSizes[l] * kLayerSizes[l + 1] + kLayerSizes[l + 1];
  return off;
}

std::size_t Mlp::bias_offset(std::size_t layer) {
  return weight_offset(layer) + kLayerSizes[layer] * kLayerSizes[layer + 1];
}

std::span<double> Mlp::weights(std::size_t layer) {
  return {params_.data() + weight_offset(layer), kLayerSizes[layer] * kLayerSizes[layer + 1]};
}
std::span<const double> Mlp::weights(std::size_t layer) const {
  return {params_.data() + weight_offset(layer), kLayerSizes[layer] * kLayerSizes[layer + 1]};
}
std::span<double> Mlp::biases(std::size_t layer) {
  return {params_.data() + bias_offset(layer), kLayerSizes[layer + 1]};
}
std::span<const double> Mlp::biases(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), kLayerSizes[layer + 1]};
}

Mlp Mlp::zeros() { return Mlp(); }

Mlp Mlp::initialize(std::uint64_t seed) {
  Mlp m;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(kLayerSizes[l] + kLayerSizes[l + 1]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : m.weights(l)) w = dist(rng);
  }
  return m;
}

double Mlp::logit(std::span<const double> x) const {
  check_input(x);
  Activations act;
  run_forward(*this, x.data(), act);
  return act.z3;
}

double Mlp::forward(std::span<const double> x) const { return sigmoid(logit(x)); }

double bce_from_logit(double logit, bool positive) {
  // max(z, 0) - z y + log(1 + exp(-|z|))
  const double y = positive ? 1.0 : 0.0;
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

double loss_and_gradient(const Mlp& model, std::span<const Sample* const> batch,
                         std::vector<double>& gradient) {
  gradient.assign(Mlp::parameter_count(), 0.0);
  if (batch.empty()) return 0.0;
  const auto& k = simd::kernels();
  // Gradient views share the parameter layout.
  Mlp view = Mlp::zeros();
  const std::size_t w0 = static_cast<std::size_t>(view.weights(0).data() - view.parameters().data());
  const std::size_t b0 = static_cast<std::size_t>(view.biases(0).data() - view.parameters().data());
  const std::size_t w1 = static_cast<std::size_t>(view.weights(1).data() - view.parameters().data());
  const std::size_t b1 = static_cast<std::size_t>(view.biases(1).data() - view.parameters().data());
  const std::size_t w2 = static_cast<std::size_t>(view.weights(2).data() - view.parameters().data());
  const std::size_t b2 = static_cast<std::size_t>(view.biases(2).data() - view.parameters().data());
  double* g = gradient.data();
  const auto W1 = model.weights(1);
  const auto W2 = model.weights(2);

  Activations act;
  std::array<double, 64> dz2{};
  std::array<double, 128> da1{};
  double loss = 0.0;
  for (const Sample* s : batch) {
    run_forward(model, s->input.data(), act);
    loss += bce_from_logit(act.z3, s->positive);
    const double dz3 = sigmoid(act.z3) - (s->positive ? 1.0 : 0.0);
    // Output layer.
    k.axpy(dz3, act.a2.data(), g + w2, 64);
    g[b2] += dz3;
    // Second hidden layer.
    for (std::size_t i = 0; i < 64; ++i) dz2[i] = act.z2[i] > 0.0 ? dz3 * W2[i] : 0.0;
    da1.fill(0.0);
    for (std::size_t i = 0; i < 64; ++i) {
      if (dz2[i] == 0.0) continue;
      k.axpy(dz2[i], act.a1.data(), g + w1 + i * 128, 128);
      g[b1 + i] += dz2[i];
      k.axpy(dz2[i], W1.data() + i * 128, da1.data(), 128);
    }
    // First hidden layer.
    for (std::size_t i = 0; i < 128; ++i) {
      if (!(act.z1[i] > 0.0) || da1[i] == 0.0) continue;
      k.axpy(da1[i], act.x0.data(), g + w0 + i * 784, 784);
      g[b0 + i] += da1[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  k.scale(inv, gradient.data(), gradient.size());
  return loss * inv;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("classifier.learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("classifier.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("classifier.beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("classifier.epsilon must be > 0");
  if (batch_size == 0) throw std::invalid_argument("classifier.batch_size must be > 0");
  if (epochs == 0) throw std::invalid_argument("classifier.epochs must be > 0");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw std::invalid_argument("classifier.train_fraction must lie in (0, 1]");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("classifier.threshold must lie in (0, 1)");
  }
}

std::pair<double, double> evaluate_model(const Mlp& model, std::span<const Sample> samples,
                                         double threshold) {
  if (samples.empty()) return {0.0, 0.0};
  double loss = 0.0;
  std::size_t correct = 0;
  Activations act;
  for (const auto& s : samples) {
    run_forward(model, s.input.data(), act);
    loss += bce_from_logit(act.z3, s.positive);
    if ((sigmoid(act.z3) >= threshold) == s.positive) ++correct;
  }
  const double n = static_cast<double>(samples.size());
  return {loss / n, static_cast<double>(correct) / n};
}

std::pair<Mlp, TrainingReport> train(const std::vector<Sample>& dataset, const TrainConfig& config) {
  config.validate();
  const auto positives = std::count_if(dataset.begin(), dataset.end(),
                                       [](const Sample& s) { return s.positive; });
  if (positives == 0) throw std::invalid_argument("training set has no positive samples");
  if (positives == static_cast<long>(dataset.size())) {
    throw std::invalid_argument("training set has no negative samples");
  }
  const auto start = std::chrono::steady_clock::now();

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * dataset.size()));
  n_train = std::clamp<std::size_t>(n_train, 1, dataset.size());
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
  std::vector<Sample> validation;
  for (std::size_t i = n_train; i < order.size(); ++i) validation.push_back(dataset[order[i]]);

  Mlp model = Mlp::initialize(config.seed);
  const std::size_t n_params = Mlp::parameter_count();
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0), grad;
  std::vector<const Sample*> batch;
  batch.reserve(config.batch_size);
  const auto& k = simd::kernels();
  std::size_t step = 0;

  TrainingReport report;
  report.train_size = train_idx.size();
  report.validation_size = validation.size();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    for (std::size_t offset = 0; offset < train_idx.size(); offset += config.batch_size) {
      batch.clear();
      const std::size_t end = std::min(train_idx.size(), offset + config.batch_size);
      for (std::size_t i = offset; i < end; ++i) batch.push_back(&dataset[train_idx[i]]);
      loss_and_gradient(model, batch, grad);
      ++step;
      const simd::AdamCoefficients c{config.learning_rate,
                                     config.beta1,
                                     config.beta2,
                                     config.epsilon,
                                     1.0 - std::pow(config.beta1, static_cast<double>(step)),
                                     1.0 - std::pow(config.beta2, static_cast<double>(step))};
      k.adam_step(model.parameters().data(), grad.data(), m.data(), v.data(), n_params, c);
    }
    EpochReport er;
    er.epoch = epoch;
    std::vector<Sample> train_view;
    train_view.reserve(train_idx.size());
    for (std::size_t i : train_idx) train_view.push_back(dataset[i]);
    std::tie(er.train_loss, er.train_accuracy) = evaluate_model(model, train_view, config.threshold);
    if (!validation.empty()) {
      std::tie(er.validation_loss, er.validation_accuracy) =
          evaluate_model(model, validation, config.threshold);
    }
    report.epochs.push_back(er);
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

void write_training_report_csv(const TrainingReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,train_accuracy,validation_loss,validation_accuracy\n";
  out.precision(8);
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.train_accuracy << ',' << e.validation_loss
        << ',' << e.validation_accuracy << '\n';
  }
}

// ---------------------------------------------------------------------------

void save_model(const Mlp& model, std::ostream& out) {
  out.write(kModelMagic, sizeof(kModelMagic));
  write_le<std::uint32_t>(out, kModelVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(kLayerCount));
  for (std::size_t s : kLayerSizes) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    for (double w : model.weights(l)) write_le<double>(out, w);
    for (double b : model.biases(l)) write_le<double>(out, b);
  }
}

void save_model(const Mlp& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model: " + path.string());
  save_model(model, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Mlp load_model(std::istream& in) {
  char magic[sizeof(kModelMagic)];
  in.read(magic, sizeof(magic));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(magic)) ||
      std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not an AEMLP model file (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(in, "version");
  if (version != kModelVersion) {
    throw std::runtime_error("unsupported model version " + std::to_string(version));
  }
  const auto layers = read_le<std::uint32_t>(in, "layer count");
  if (layers != kLayerCount) {
    throw std::runtime_error("model has " + std::to_string(layers) + " layers, expected 3");
  }
  for (std::size_t s : kLayerSizes) {
    const auto got = read_le<std::uint32_t>(in, "layer size");
    if (got != s) {
      throw std::runtime_error("model layer size " + std::to_string(got) + " does not match " +
                               std::to_string(s));
    }
  }
  Mlp model = Mlp::zeros();
  for (std::size_t l = 0; l < kLayerCount; ++l) {
    for (double& w : model.weights(l)) w = read_le<double>(in, "weights");
    for (double& b : model.biases(l)) b = read_le<double>(in, "biases");
  }
  for (double p : model.parameters()) {
    if (!std::isfinite(p)) throw std::runtime_error("model contains non-finite parameters");
  }
  return model;
}

Mlp load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model: " + path.string());
  return load_model(in);
}

std::vector<Sample> load_patch_dataset(const std::filesystem::path& dir) {
  std::vector<Sample> out;
  for (const auto& [sub, positive] : {std::pair{"pos", true}, std::pair{"neg", false}}) {
    const auto folder = dir / sub;
    if (!std::filesystem::is_directory(folder)) {
      throw std::runtime_error("dataset directory missing: " + folder.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(folder)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      out.push_back({patch_to_classifier_input(read_patch_csv(f)), positive});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

EvaluationBuffer::EvaluationBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("evaluation buffer capacity must be > 0");
}

void EvaluationBuffer::push(bool classified_positive) {
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(classified_positive);
}

bool EvaluationBuffer::all(bool value) const {
  return std::all_of(entries_.begin(), entries_.end(), [&](bool e) { return e == value; });
}

Verdict verdict(const EvaluationBuffer& buffer) {
  if (!buffer.full()) return Verdict::undecided;
  if (buffer.all(true)) return Verdict::promote;
  if (buffer.all(false)) return Verdict::terminate;
  return Verdict::undecided;
}

}  // namespace aemot
