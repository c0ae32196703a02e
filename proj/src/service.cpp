#include "tmapath/service.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "tmapath/annotation.hpp"
#include "tmapath/error.hpp"
#include "tmapath/image_io.hpp"

namespace tmapath {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

HttpResponse error(int status, const std::string& message) {
  return {status, "application/json", json{{"error", message}}.dump()};
}

HttpResponse ok_json(std::string body) { return {200, "application/json", std::move(body)}; }

std::string bytes(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(path);
  while (std::getline(in, part, '/'))
    if (!part.empty()) out.push_back(part);
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

StudyService::StudyService(ServiceOptions options) : options_(std::move(options)) {
  auto& cfg = options_.study;
  if (cfg.spots_dir.empty() || !fs::is_directory(cfg.spots_dir))
    throw ConfigError("spots directory not found: " + cfg.spots_dir.string());
  if (cfg.annotations_dir.empty()) throw ConfigError("annotations directory not set");
  fs::create_directories(cfg.annotations_dir);
  validate(options_.online);

  auto library = std::make_shared<SpotLibrary>();
  for (const auto& [id, path] : list_spots(cfg.spots_dir)) {
    Spot s;
    s.image_path = path;
    s.patient_id = id;
    const auto ann = cfg.annotations_dir / (id + ".json");
    if (fs::exists(ann)) s.patient_id = load_annotations(ann).patient_id;
    const RgbImage rgb = load_image(path);
    s.width = rgb.width();
    s.height = rgb.height();
    s.gray = to_gray(rgb);
    for (int f : kPyramidFactors) s.pyramid_png.push_back(bytes(encode_png(f == 1 ? rgb : downsample(rgb, f))));
    library->emplace(id, make_padded_source(s.gray, cfg.forest.window));
    spots_.emplace(id, std::move(s));
  }

  TrainingSet data = build_training_set(cfg);
  DetectionForest forest;
  if (cfg.forest_path) {
    forest = load_forest(cfg.forest_path->string());
  } else {
    if (num_classes(data) < 2) throw DataError("annotations yield no usable training samples");
    ForestConfig fc = cfg.forest;
    fc.rng_seed = cfg.seed;
    forest = train_forest(data, fc);
  }
  session_ = make_session(std::move(forest), std::move(data), library, options_.online);

  if (!options_.correction_log.empty() && fs::exists(options_.correction_log)) {
    for (const auto& c : read_correction_log(options_.correction_log)) {
      apply_correction(session_, c);
      ++version_;
    }
  }
  snapshot_ = std::make_shared<const DetectionForest>(session_.forest);
}

std::shared_ptr<const DetectionForest> StudyService::snapshot() const {
  std::shared_lock lock(snapshot_mutex_);
  return snapshot_;
}

std::uint64_t StudyService::forest_version() const {
  std::shared_lock lock(snapshot_mutex_);
  return version_;
}

const StudyService::Spot& StudyService::spot(const std::string& id) const {
  const auto it = spots_.find(id);
  if (it == spots_.end()) throw std::out_of_range("unknown spot '" + id + "'");
  return it->second;
}

HttpResponse StudyService::handle(const std::string& method, const std::string& path,
                                  const std::map<std::string, std::string>& query, const std::string& body) {
  try {
    const auto parts = split_path(path);
    if (parts.size() == 1 && parts[0] == "spots" && method == "GET") return get_spots();
    if (parts.size() == 3 && parts[0] == "spots") {
      const auto& id = parts[1];
      const auto& what = parts[2];
      if (!spots_.count(id)) return error(404, "unknown spot '" + id + "'");
      if (what == "image" && method == "GET") return get_image(id, query);
      if (what == "probability-map" && method == "GET") return get_probability_map(id);
      if (what == "detections" && method == "GET") return get_detections(id);
      if (what == "corrections" && method == "POST") return post_correction(id, body);
      if (what == "annotations" && method == "GET") return get_annotations(id);
      if (what == "annotations" && method == "PUT") return put_annotations(id, body);
    }
    if (parts.size() == 2 && parts[0] == "study") {
      if (parts[1] == "result" && method == "GET") return get_study_result();
      if (parts[1] == "run" && method == "POST") return post_study_run();
    }
    if (parts.size() == 2 && parts[0] == "session" && parts[1] == "forest" && method == "GET")
      return ok_json(forest_to_json(*snapshot()));
    return error(404, "no route for " + method + " " + path);
  } catch (const std::out_of_range& e) {
    return error(404, e.what());
  } catch (const ConfigError& e) {
    return error(400, e.what());
  } catch (const DataError& e) {
    return error(422, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

HttpResponse StudyService::get_spots() const {
  json out = json::array();
  for (const auto& [id, s] : spots_)
    out.push_back({{"spot_id", id},
                   {"patient_id", s.patient_id},
                   {"width", s.width},
                   {"height", s.height},
                   {"levels", {1, 4, 16}}});
  return ok_json(out.dump());
}

HttpResponse StudyService::get_image(const std::string& id, const std::map<std::string, std::string>& query) const {
  int level = 0;
  if (const auto it = query.find("level"); it != query.end()) {
    if (it->second == "0" || it->second == "1" || it->second == "2")
      level = it->second[0] - '0';
    else
      return error(400, "level must be 0, 1 or 2");
  }
  return {200, "image/png", spot(id).pyramid_png[static_cast<std::size_t>(level)]};
}

HttpResponse StudyService::get_probability_map(const std::string& id) {
  std::shared_ptr<const DetectionForest> forest;
  std::uint64_t version;
  {
    std::shared_lock lock(snapshot_mutex_);
    forest = snapshot_;
    version = version_;
  }
  std::shared_ptr<const ProbabilityMap> map;
  {
    std::lock_guard lock(cache_mutex_);
    const auto it = map_cache_.find(id);
    if (it != map_cache_.end() && it->second.first == version) map = it->second.second;
  }
  if (!map) {
    map = std::make_shared<const ProbabilityMap>(probability_map(*forest, spot(id).gray, options_.study.detect.stride));
    std::lock_guard lock(cache_mutex_);
    map_cache_[id] = {version, map};
  }
  return {200, "image/png", bytes(encode_png16(map->values))};
}

HttpResponse StudyService::get_detections(const std::string& id) {
  const auto forest = snapshot();
  const auto dets = detect_nuclei(*forest, spot(id).gray, options_.study.detect);
  return ok_json(detections_json(id, dets));
}

HttpResponse StudyService::post_correction(const std::string& id, const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return error(400, "malformed JSON");
  }
  if (!j.is_object() || !j.contains("x") || !j.contains("y") || !j.contains("label") || !j["x"].is_number_integer() ||
      !j["y"].is_number_integer() || !j["label"].is_string())
    return error(400, "correction needs integer x, y and a string label");
  Correction c;
  c.spot_id = id;
  c.x = j["x"].get<int>();
  c.y = j["y"].get<int>();
  const auto label = j["label"].get<std::string>();
  if (label == "nucleus" || label == "cancerous-nucleus")
    c.asserted_label = kNucleus;
  else if (label == "background")
    c.asserted_label = kBackground;
  else
    return error(422, "label must be nucleus or background");
  c.expert_id = j.value("expert_id", "");
  c.timestamp = j.value("timestamp", "");
  const auto& s = spot(id);
  if (c.x < 0 || c.y < 0 || c.x >= s.width || c.y >= s.height) return error(422, "pixel outside the spot");

  std::lock_guard lock(writer_);
  if (j.contains("session_id") && j["session_id"].is_string()) {
    const auto session = j["session_id"].get<std::string>();
    const auto [it, inserted] = session_owner_.emplace(id, session);
    if (!inserted && it->second != session) return error(409, "spot is being edited in another session");
  }
  if (!options_.correction_log.empty()) append_correction_log(options_.correction_log, c);
  const auto outcome = apply_correction(session_, c);
  auto next = std::make_shared<const DetectionForest>(session_.forest);
  std::uint64_t version;
  {
    std::unique_lock slock(snapshot_mutex_);
    snapshot_ = std::move(next);
    version = ++version_;
  }
  return ok_json(json{{"margin_before", outcome.margin_before},
                      {"margin_after", outcome.margin_after},
                      {"trees_penalized", outcome.trees_penalized},
                      {"trees_added", outcome.trees_added},
                      {"n_trees", session_.forest.trees.size()},
                      {"forest_version", version}}
                     .dump());
}

HttpResponse StudyService::get_annotations(const std::string& id) const {
  const auto path = options_.study.annotations_dir / (id + ".json");
  if (fs::exists(path)) return ok_json(read_text(path));
  SpotRecord empty;
  empty.spot_id = id;
  empty.patient_id = spot(id).patient_id;
  return ok_json(annotations_to_json(empty));
}

HttpResponse StudyService::put_annotations(const std::string& id, const std::string& body) {
  if (!json::accept(body)) return error(400, "malformed JSON");
  SpotRecord rec;
  try {
    rec = annotations_from_json(body);
  } catch (const DataError& e) {
    return error(400, e.what());
  } catch (const std::invalid_argument& e) {
    return error(422, e.what());
  }
  if (rec.spot_id != id) return error(422, "spot_id in body does not match the URL");
  const auto& s = spot(id);
  for (const auto& a : rec.annotations)
    if (a.center.x() < 0 || a.center.y() < 0 || a.center.x() > s.width - 1 || a.center.y() > s.height - 1)
      return error(422, "annotation outside the spot");
  std::lock_guard lock(annotation_mutex_);
  save_annotations(options_.study.annotations_dir / (id + ".json"), rec);
  return ok_json(annotations_to_json(rec));
}

HttpResponse StudyService::get_study_result() const {
  const auto path = options_.study.output_dir / "study_result.json";
  if (options_.study.output_dir.empty() || !fs::exists(path)) return error(404, "no study result yet");
  return ok_json(read_text(path));
}

HttpResponse StudyService::post_study_run() {
  std::unique_lock lock(study_mutex_, std::try_to_lock);
  if (!lock.owns_lock()) return error(409, "a study run is already in progress");
  const auto result = run_study(options_.study);
  return ok_json(study_result_json(result));
}

void StudyService::serve(const std::string& host, int port, const std::function<bool()>& should_stop,
                         const std::function<void(int)>& on_ready) {
  httplib::Server server;
  auto adapt = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto r = handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, r.content_type);
  };
  server.Get(".*", adapt);
  server.Post(".*", adapt);
  server.Put(".*", adapt);
  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  std::thread watcher;
  if (should_stop)
    watcher = std::thread([&] {
      while (!should_stop()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
      server.stop();
    });
  if (on_ready) on_ready(bound);
  server.listen_after_bind();
  if (watcher.joinable()) watcher.join();
}

}  // namespace tmapath
