#pragma once

// Patch validation network: 784 -> 128 (ReLU) -> 64 (ReLU) -> 1 (sigmoid), trained with
// binary cross-entropy and Adam, plus the unanimity verdict over the last N outputs.
// The first layer sees x - 0.5, so its bias is the response to an empty patch.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "aemot/patch.hpp"

namespace aemot {

inline constexpr std::array<std::size_t, 4> kLayerSizes{784, 128, 64, 1};
inline constexpr std::size_t kLayerCount = kLayerSizes.size() - 1;
inline constexpr double kInputMidpoint = 0.5;

class Mlp {
 public:
  /// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
  static Mlp initialize(std::uint64_t seed);
  /// All parameters zero.
  static Mlp zeros();

  static constexpr std::size_t parameter_count() {
    std::size_t n = 0;
    for (std::size_t l = 0; l < kLayerCount; ++l) {
      n += kLayerSizes[l] * kLayerSizes[l + 1] + kLayerSizes[l + 1];
    }
    return n;
  }

  /// Probability in (0, 1). Throws std::invalid_argument for wrong size or non-finite input.
  double forward(std::span<const double> x) const;
  /// Pre-sigmoid output.
  double logit(std::span<const double> x) const;

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  /// Row-major (out x in) weights and biases of layer l.
  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  Mlp() : params_(parameter_count(), 0.0) {}
  static std::size_t weight_offset(std::size_t layer);
  static std::size_t bias_offset(std::size_t layer);

  std::vector<double> params_;
};

struct Sample {
  PatchVector input{};  // classifier input, values in [0, 1]
  bool positive = false;
};

/// Numerically stable binary cross-entropy from a logit.
double bce_from_logit(double logit, bool positive);

/// Mean BCE over `batch` and its gradient with respect to every parameter (same layout as
/// Mlp::parameters). `gradient` is resized and overwritten.
double loss_and_gradient(const Mlp& model, std::span<const Sample* const> batch,
                         std::vector<double>& gradient);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  double train_fraction = 0.9;
  double threshold = 0.5;

  void validate() const;
};

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainingReport {
  std::vector<EpochReport> epochs;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  double seconds = 0.0;
};

/// Deterministic per (dataset, config.seed). Throws std::invalid_argument if a class is empty.
std::pair<Mlp, TrainingReport> train(const std::vector<Sample>& dataset, const TrainConfig& config);

/// Mean loss and accuracy of `model` on `samples` at `threshold`.
std::pair<double, double> evaluate_model(const Mlp& model, std::span<const Sample> samples,
                                         double threshold = 0.5);

void write_training_report_csv(const TrainingReport& report, const std::filesystem::path& path);

/// "AEMLP", u32 version, u32 layer count, u32 sizes, then per layer f64 weights (row-major)
/// and biases, little-endian.
void save_model(const Mlp& model, std::ostream& out);
void save_model(const Mlp& model, const std::filesystem::path& path);
Mlp load_model(std::istream& in);
Mlp load_model(const std::filesystem::path& path);

/// Dataset layout: <dir>/pos/*.csv and <dir>/neg/*.csv, each a 28x28 grid of raw patch values.
std::vector<Sample> load_patch_dataset(const std::filesystem::path& dir);

/// FIFO of the most recent classifications, oldest evicted first.
class EvaluationBuffer {
 public:
  explicit EvaluationBuffer(std::size_t capacity = 15);

  void push(bool classified_positive);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return entries_.size() == capacity_; }
  bool all(bool value) const;
  const std::deque<bool>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<bool> entries_;
};

enum class Verdict { promote, terminate, undecided };

/// promote iff full and unanimous true; terminate iff full and unanimous false.
Verdict verdict(const EvaluationBuffer& buffer);

}  // namespace aemot
