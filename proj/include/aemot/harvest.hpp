#pragma once

// Labelled patch harvesting. The pipeline runs in threshold mode over a labelled stream and
// every 50-event batch boundary yields one patch, labelled by the events that built it.

#include <filesystem>
#include <vector>

#include "aemot/config.hpp"
#include "aemot/events.hpp"
#include "aemot/patch.hpp"
#include "aemot/scene.hpp"

namespace aemot {

struct HarvestSet {
  std::vector<PatchVector> positives;  // raw patch values
  std::vector<PatchVector> negatives;
  std::size_t impure = 0;              // batches dropped for mixed labels
  std::size_t misplaced = 0;           // object batches dropped for position error
  std::size_t immature = 0;            // batches from tracks younger than min_track_events
};

/// Positive: at least `min_purity` of the batch's events carry one object label and the
/// track lies within `max_position_error` of that object. Negative: the same share carries
/// the background label. `ground_truth` (optional) supplies object positions; otherwise the
/// mean of the batch's events of that label is used.
HarvestSet harvest_patches(const EventStream& stream, const RunConfig& config,
                           const std::vector<GroundTruthRow>* ground_truth = nullptr);

void append(HarvestSet& into, HarvestSet&& from);

/// Writes <dir>/pos/NNNNNN.csv and <dir>/neg/NNNNNN.csv, subsampled to `per_class` each
/// (0 keeps everything) with a seeded shuffle. Returns (positives, negatives) written.
std::pair<std::size_t, std::size_t> write_patch_dataset(const HarvestSet& set,
                                                        const std::filesystem::path& dir,
                                                        std::size_t per_class,
                                                        std::uint64_t seed);

/// The same selection as write_patch_dataset, converted to classifier samples in memory.
std::vector<Sample> to_samples(const HarvestSet& set, std::size_t per_class, std::uint64_t seed);

}  // namespace aemot
