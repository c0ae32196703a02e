#include "tmapath/annotation.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "tmapath/error.hpp"

namespace tmapath {

using nlohmann::json;

std::string to_string(NucleusClass c) { return c == NucleusClass::cancerous ? "cancerous" : "benign"; }
std::string to_string(StainState s) { return s == StainState::stained ? "stained" : "unstained"; }

std::string to_string(Confidence c) {
  switch (c) {
    case Confidence::certainly: return "certainly";
    case Confidence::probably: return "probably";
    case Confidence::maybe: return "maybe";
  }
  return "maybe";
}

NucleusClass parse_nucleus_class(const std::string& s) {
  if (s == "cancerous") return NucleusClass::cancerous;
  if (s == "benign") return NucleusClass::benign;
  throw DataError("unknown nucleus class '" + s + "'");
}

StainState parse_stain_state(const std::string& s) {
  if (s == "stained") return StainState::stained;
  if (s == "unstained") return StainState::unstained;
  throw DataError("unknown staining state '" + s + "'");
}

Confidence parse_confidence(const std::string& s) {
  if (s == "certainly") return Confidence::certainly;
  if (s == "probably") return Confidence::probably;
  if (s == "maybe") return Confidence::maybe;
  throw DataError("unknown confidence '" + s + "'");
}

std::string annotations_to_json(const SpotRecord& spot) {
  json doc;
  doc["spot_id"] = spot.spot_id;
  doc["patient_id"] = spot.patient_id;
  doc["pixel_resolution_um"] = spot.pixel_resolution_um;
  doc["annotations"] = json::array();
  for (const auto& a : spot.annotations) {
    doc["annotations"].push_back({{"x", a.center.x()},
                                  {"y", a.center.y()},
                                  {"radius", a.radius},
                                  {"class", to_string(a.cls)},
                                  {"stained", a.stained ? json(to_string(*a.stained)) : json(nullptr)},
                                  {"confidence", to_string(a.confidence)},
                                  {"expert_id", a.expert_id},
                                  {"session", a.session},
                                  {"timestamp_iso8601", a.timestamp}});
  }
  return doc.dump(2);
}

SpotRecord annotations_from_json(const std::string& text) {
  SpotRecord spot;
  try {
    const json doc = json::parse(text);
    spot.spot_id = doc.at("spot_id").get<std::string>();
    spot.patient_id = doc.at("patient_id").get<std::string>();
    spot.pixel_resolution_um = doc.value("pixel_resolution_um", 0.23);
    for (const auto& item : doc.at("annotations")) {
      NucleusAnnotation a;
      a.center = {item.at("x").get<double>(), item.at("y").get<double>()};
      a.radius = item.at("radius").get<double>();
      if (!(a.radius > 0.0)) throw DataError("annotation radius must be positive");
      a.cls = parse_nucleus_class(item.at("class").get<std::string>());
      if (item.contains("stained") && !item["stained"].is_null())
        a.stained = parse_stain_state(item["stained"].get<std::string>());
      a.confidence = parse_confidence(item.at("confidence").get<std::string>());
      a.expert_id = item.value("expert_id", "");
      a.session = item.value("session", "");
      a.timestamp = item.value("timestamp_iso8601", "");
      spot.annotations.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed annotation document: ") + e.what());
  }
  return spot;
}

SpotRecord load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("unreadable file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return annotations_from_json(ss.str());
}

void save_annotations(const std::filesystem::path& path, const SpotRecord& spot) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << annotations_to_json(spot) << '\n';
}

std::string annotations_to_svg(const SpotRecord& spot, int width, int height) {
  std::ostringstream svg;
  svg << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << width << R"(" height=")" << height
      << R"(" viewBox="0 0 )" << width << ' ' << height << "\">\n";
  for (const auto& a : spot.annotations) {
    svg << "  <circle cx=\"" << a.center.x() << "\" cy=\"" << a.center.y() << "\" r=\"" << a.radius
        << "\" fill=\"none\" stroke=\"" << (a.cls == NucleusClass::cancerous ? "#ff0000" : "#00c000")
        << '"';
    if (a.stained == StainState::unstained) svg << " stroke-dasharray=\"3,2\"";
    svg << " data-confidence=\"" << to_string(a.confidence) << "\" data-expert=\"" << a.expert_id
        << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tmapath
