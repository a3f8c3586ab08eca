#include "aemot/harvest.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

#include "aemot/classifier.hpp"
#include "aemot/manager.hpp"

namespace aemot {

namespace {

struct BatchTally {
  std::map<std::uint32_t, std::pair<Eigen::Vector2d, std::size_t>> by_label;
  std::size_t total = 0;
};

/// Ground-truth rows indexed by label, time-sorted.
class GroundTruthIndex {
 public:
  explicit GroundTruthIndex(const std::vector<GroundTruthRow>& rows) {
    for (const auto& r : rows) by_label_[r.label].push_back(&r);
    for (auto& [label, v] : by_label_) {
      std::stable_sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->t < b->t; });
    }
  }

  std::optional<Eigen::Vector2d> position(std::uint32_t label, TimeUs t) const {
    const auto it = by_label_.find(label);
    if (it == by_label_.end() || it->second.empty()) return std::nullopt;
    const auto& v = it->second;
    auto hi = std::lower_bound(v.begin(), v.end(), t, [](auto* r, TimeUs x) { return r->t < x; });
    if (hi == v.end()) return v.back()->state.p;
    if (hi == v.begin()) return (*hi)->state.p;
    const auto* b = *hi;
    const auto* a = *(hi - 1);
    const double w = static_cast<double>(t - a->t) / static_cast<double>(b->t - a->t);
    return ((1.0 - w) * a->state.p + w * b->state.p).eval();
  }

 private:
  std::unordered_map<std::uint32_t, std::vector<const GroundTruthRow*>> by_label_;
};

std::vector<std::size_t> pick(std::size_t available, std::size_t per_class, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(available);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  if (per_class != 0 && idx.size() > per_class) idx.resize(per_class);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

HarvestSet harvest_patches(const EventStream& stream, const RunConfig& config,
                           const std::vector<GroundTruthRow>* ground_truth) {
  if (!stream.labelled) throw std::invalid_argument("harvesting needs a labelled event stream");
  std::optional<GroundTruthIndex> gt_index;
  if (ground_truth) gt_index.emplace(*ground_truth);

  PipelineConfig pc = config.pipeline;
  pc.mode = ValidationMode::thresholds;

  HarvestSet set;
  std::unordered_map<std::uint32_t, BatchTally> tallies;
  std::uint32_t current_label = 0;
  TimeUs current_t = 0;

  PipelineHooks hooks;
  hooks.on_associated = [&](const Track& track, const Event& e) {
    auto& tally = tallies[track.id];
    auto& slot = tally.by_label.try_emplace(current_label, Eigen::Vector2d::Zero(), 0).first->second;
    slot.first += Eigen::Vector2d(e.x, e.y);
    ++slot.second;
    ++tally.total;
  };
  hooks.on_batch = [&](const Track& track, const PatchVector& raw, bool) {
    BatchTally tally = std::move(tallies[track.id]);
    tallies.erase(track.id);
    if (tally.total == 0) return;
    if (track.event_count < config.harvest.min_track_events) {
      ++set.immature;
      return;
    }
    const auto best = std::max_element(
        tally.by_label.begin(), tally.by_label.end(),
        [](const auto& a, const auto& b) { return a.second.second < b.second.second; });
    const double share =
        static_cast<double>(best->second.second) / static_cast<double>(tally.total);
    if (share < config.harvest.min_purity) {
      ++set.impure;
      return;
    }
    if (best->first == 0) {
      set.negatives.push_back(raw);
      return;
    }
    Eigen::Vector2d truth = best->second.first / static_cast<double>(best->second.second);
    if (gt_index) {
      if (auto p = gt_index->position(best->first, current_t)) truth = *p;
    }
    if ((track.filter.state().p - truth).norm() > config.harvest.max_position_error) {
      ++set.misplaced;
      return;
    }
    set.positives.push_back(raw);
  };
  hooks.on_terminated = [&](const Track& track) { tallies.erase(track.id); };

  Pipeline pipeline(stream.geometry, pc, nullptr, std::move(hooks));
  pipeline.set_record_sink([](const TrackRecord&) {});
  for (const auto& le : stream.events) {
    current_label = le.label;
    current_t = le.event.t;
    pipeline.process_event(le.event);
  }
  return set;
}

void append(HarvestSet& into, HarvestSet&& from) {
  into.positives.insert(into.positives.end(), from.positives.begin(), from.positives.end());
  into.negatives.insert(into.negatives.end(), from.negatives.begin(), from.negatives.end());
  into.impure += from.impure;
  into.misplaced += from.misplaced;
  into.immature += from.immature;
}

std::pair<std::size_t, std::size_t> write_patch_dataset(const HarvestSet& set,
                                                        const std::filesystem::path& dir,
                                                        std::size_t per_class,
                                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto pos = pick(set.positives.size(), per_class, rng);
  const auto neg = pick(set.negatives.size(), per_class, rng);
  std::filesystem::create_directories(dir / "pos");
  std::filesystem::create_directories(dir / "neg");
  char name[32];
  for (std::size_t i = 0; i < pos.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu.csv", i);
    write_patch_csv(set.positives[pos[i]], dir / "pos" / name);
  }
  for (std::size_t i = 0; i < neg.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu.csv", i);
    write_patch_csv(set.negatives[neg[i]], dir / "neg" / name);
  }
  return {pos.size(), neg.size()};
}

std::vector<Sample> to_samples(const HarvestSet& set, std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto pos = pick(set.positives.size(), per_class, rng);
  const auto neg = pick(set.negatives.size(), per_class, rng);
  std::vector<Sample> out;
  out.reserve(pos.size() + neg.size());
  for (std::size_t i : pos) out.push_back({patch_to_classifier_input(set.positives[i]), true});
  for (std::size_t i : neg) out.push_back({patch_to_classifier_input(set.negatives[i]), false});
  return out;
}

}  // namespace aemot
