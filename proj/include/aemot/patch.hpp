#pragma once

// 28x28 signed intensity patch of a track's associated events, centred on the track and
// forgotten exponentially in time. Decay is applied lazily through a global scale factor.

#include <array>
#include <filesystem>

#include <Eigen/Core>

#include "aemot/events.hpp"

namespace aemot {

inline constexpr int kPatchSize = 28;
inline constexpr int kPatchCells = kPatchSize * kPatchSize;
/// Offset added to (xi - p) before rounding: a centred event lands in cell (14, 14).
inline constexpr double kPatchCentre = 13.5;

using PatchVector = std::array<double, kPatchCells>;

class IntensityPatch {
 public:
  explicit IntensityPatch(double decay_rate = 100.0);

  /// Decays all cells to e.t, then adds the polarity at round-half-up(xi - p + 13.5).
  /// Offsets falling outside the grid are dropped. Throws std::invalid_argument on time
  /// regression.
  void add_event(const Event& e, const Eigen::Vector2d& blob_position);

  /// Cell value (row = y, col = x) at the last update time.
  double at(int row, int col) const { return cells_[row * kPatchSize + col] * scale_; }

  /// All cells, row-major, at the last update time.
  PatchVector values() const;

  double decay_rate() const { return decay_rate_; }
  TimeUs last_update() const { return last_; }
  std::size_t event_count() const { return count_; }

 private:
  void renormalize();

  PatchVector cells_{};
  double scale_ = 1.0;
  double decay_rate_;
  TimeUs last_ = 0;
  bool started_ = false;
  std::size_t count_ = 0;
};

/// Maps cells to [0, 1]: 0.5 + 0.5 * clamp(c / m, -1, 1), m = max(max |c|, 1e-6).
PatchVector patch_to_classifier_input(const PatchVector& cells);
PatchVector patch_to_classifier_input(const IntensityPatch& patch);

/// Normalised patch as an 8-bit binary PGM.
void write_patch_pgm(const PatchVector& classifier_input, const std::filesystem::path& path);
/// 28 lines of 28 comma-separated values.
void write_patch_csv(const PatchVector& values, const std::filesystem::path& path);
PatchVector read_patch_csv(const std::filesystem::path& path);

}  // namespace aemot
