#include "aemot/patch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "aemot/simd/kernels.hpp"

namespace aemot {
namespace {
// Below this the lazy scale is folded into the cells to stay clear of underflow.
constexpr double kMinScale = 1e-150;
}  // namespace

IntensityPatch::IntensityPatch(double decay_rate) : decay_rate_(decay_rate) {
  if (!(decay_rate >= 0.0)) throw std::invalid_argument("patch.decay_rate must be >= 0");
}

void IntensityPatch::renormalize() {
  simd::kernels().scale(scale_, cells_.data(), cells_.size());
  scale_ = 1.0;
}

void IntensityPatch::add_event(const Event& e, const Eigen::Vector2d& blob_position) {
  if (started_ && e.t < last_) throw std::invalid_argument("patch update into the past");
  if (started_ && e.t > last_) {
    scale_ *= std::exp(-decay_rate_ * to_seconds(e.t - last_));
    if (scale_ < kMinScale) renormalize();
  }
  started_ = true;
  last_ = e.t;
  const double fx = static_cast<double>(e.x) - blob_position.x() + kPatchCentre;
  const double fy = static_cast<double>(e.y) - blob_position.y() + kPatchCentre;
  if (!std::isfinite(fx) || !std::isfinite(fy)) return;
  const double col = std::floor(fx + 0.5);
  const double row = std::floor(fy + 0.5);
  if (col < 0 || row < 0 || col >= kPatchSize || row >= kPatchSize) return;
  cells_[static_cast<int>(row) * kPatchSize + static_cast<int>(col)] +=
      static_cast<double>(e.polarity) / scale_;
  ++count_;
}

PatchVector IntensityPatch::values() const {
  PatchVector out = cells_;
  simd::kernels().scale(scale_, out.data(), out.size());
  return out;
}

PatchVector patch_to_classifier_input(const PatchVector& cells) {
  const auto& k = simd::kernels();
  const double m = std::max(k.max_abs(cells.data(), cells.size()), 1e-6);
  PatchVector out;
  k.normalize_signed(cells.data(), 1.0 / m, out.data(), out.size());
  return out;
}

PatchVector patch_to_classifier_input(const IntensityPatch& patch) {
  return patch_to_classifier_input(patch.values());
}

void write_patch_pgm(const PatchVector& classifier_input, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << kPatchSize << ' ' << kPatchSize << "\n255\n";
  for (double v : classifier_input) {
    const long level = std::lround(255.0 * std::clamp(v, 0.0, 1.0));
    out.put(static_cast<char>(static_cast<unsigned char>(level)));
  }
}

void write_patch_csv(const PatchVector& values, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  for (int r = 0; r < kPatchSize; ++r) {
    for (int c = 0; c < kPatchSize; ++c) {
      if (c) out << ',';
      out << values[r * kPatchSize + c];
    }
    out << '\n';
  }
}

PatchVector read_patch_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open patch " + path.string());
  PatchVector out{};
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= kPatchSize) throw std::runtime_error(path.string() + ": more than 28 rows");
    std::istringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= kPatchSize) throw std::runtime_error(path.string() + ": more than 28 columns");
      try {
        out[row * kPatchSize + col] = std::stod(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ": malformed value '" + cell + "'");
      }
      ++col;
    }
    if (col != kPatchSize) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row + 1) +
                               " has " + std::to_string(col) + " columns");
    }
    ++row;
  }
  if (row != kPatchSize) throw std::runtime_error(path.string() + ": expected 28 rows");
  return out;
}

}  // namespace aemot
