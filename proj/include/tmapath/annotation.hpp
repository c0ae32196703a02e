#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tmapath/image.hpp"

namespace tmapath {

enum class NucleusClass { cancerous, benign };
enum class StainState { stained, unstained };
enum class Confidence { certainly, probably, maybe };

/// One expert mark on a spot.
struct NucleusAnnotation {
  Point2d center{0.0, 0.0};
  double radius = 1.0;
  NucleusClass cls = NucleusClass::cancerous;
  std::optional<StainState> stained;
  Confidence confidence = Confidence::certainly;
  std::string expert_id;
  std::string session;
  std::string timestamp;  // ISO-8601, free-form

  bool operator==(const NucleusAnnotation&) const = default;
};

/// A TMA spot: one patient, one image, any number of annotations.
struct SpotRecord {
  std::string spot_id;
  std::string patient_id;
  std::filesystem::path image;
  double pixel_resolution_um = 0.23;
  std::vector<NucleusAnnotation> annotations;

  bool operator==(const SpotRecord&) const = default;
};

std::string to_string(NucleusClass c);
std::string to_string(StainState s);
std::string to_string(Confidence c);
NucleusClass parse_nucleus_class(const std::string& s);
StainState parse_stain_state(const std::string& s);
Confidence parse_confidence(const std::string& s);

/// JSON document {spot_id, patient_id, pixel_resolution_um, annotations:[...]}.
/// The image path is not part of the document.
std::string annotations_to_json(const SpotRecord& spot);
SpotRecord annotations_from_json(const std::string& text);

SpotRecord load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const SpotRecord& spot);

/// SVG overlay: one circle per annotation; class as stroke color
/// (cancerous red, benign green), dashed stroke for unstained nuclei.
std::string annotations_to_svg(const SpotRecord& spot, int width, int height);

}  // namespace tmapath
