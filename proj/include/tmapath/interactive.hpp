#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tmapath/forest.hpp"
#include "tmapath/image.hpp"

namespace tmapath {

/// An expert's assertion about the pixel (x, y) of a spot.
struct Correction {
  std::string spot_id;
  int x = 0;
  int y = 0;
  int asserted_label = kNucleus;
  std::string expert_id;
  std::string timestamp;
  /// Forest vote at the time the correction was applied (filled by the session).
  std::optional<int> predicted_label;

  bool operator==(const Correction&) const = default;
};

std::string correction_to_json_line(const Correction& c);
Correction correction_from_json_line(const std::string& line);

/// Reads a JSON-lines correction log; blank lines are skipped.
std::vector<Correction> read_correction_log(const std::filesystem::path& path);
/// Appends one line and flushes before returning.
void append_correction_log(const std::filesystem::path& path, const Correction& c);

struct OnlineParams {
  double beta = 0.5;        // multiplicative weight decay for wrong trees
  int k_new = 2;            // trees grown per batch
  int buffer_batch = 10;    // corrections per growth step
  double w_min = 1e-3;      // weight floor
  int max_grow_attempts = 8;
};

void validate(const OnlineParams& p);

/// Padded gray sources addressable by spot id.
using SpotLibrary = std::map<std::string, PaddedSource>;

struct OnlineSessionState {
  DetectionForest forest;
  std::vector<Correction> buffer;  // arrival order, never truncated
  OnlineParams params;
  TrainingSet original_data;
  std::shared_ptr<const SpotLibrary> spots;
  std::uint64_t seed = 0;
};

OnlineSessionState make_session(DetectionForest forest, TrainingSet original_data,
                                std::shared_ptr<const SpotLibrary> spots, OnlineParams params = {});

/// Patch addressed by a correction; throws std::out_of_range for unknown spots
/// and std::invalid_argument for pixels outside the spot.
Patch resolve_sample(const OnlineSessionState& state, const Correction& c);

struct CorrectionOutcome {
  double margin_before = 0.0;
  double margin_after = 0.0;
  int trees_penalized = 0;
  int trees_added = 0;
};

/// Weighted-majority update: trees voting against the asserted label are
/// multiplied by beta (floored at w_min). Every buffer_batch-th correction
/// grows k_new trees on the buffer plus a bootstrap of the original data;
/// a grown tree joins with the median current weight only if it votes for the
/// triggering correction's label (regrown with a fresh seed otherwise).
CorrectionOutcome apply_correction(OnlineSessionState& state, const Correction& c);

struct SessionEvent {
  enum class Kind { classify_all, correction, stop };
  Kind kind = Kind::stop;
  Correction correction;
};

/// Replays events until `stop` (or the end of the stream). classify_all calls
/// `on_classify` with the current forest when provided.
DetectionForest session_loop(OnlineSessionState& state, const std::vector<SessionEvent>& events,
                             const std::function<void(const DetectionForest&)>& on_classify = {});

/// Forest snapshot plus correction buffer.
std::string session_snapshot_json(const OnlineSessionState& state);

}  // namespace tmapath
