#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "tmapath/interactive.hpp"
#include "tmapath/study.hpp"

namespace tmapath {

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

struct ServiceOptions {
  StudyConfig study;
  /// Append-only correction log; replayed at startup when it exists.
  std::filesystem::path correction_log;
  OnlineParams online;
};

/// Pyramid downsample factors served as image levels 0, 1, 2.
inline constexpr int kPyramidFactors[3] = {1, 4, 16};

/// Request handling for the annotation/correction API. Reads run against
/// immutable forest snapshots; corrections are serialized through a single
/// writer and logged before they are applied.
class StudyService {
 public:
  explicit StudyService(ServiceOptions options);

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::map<std::string, std::string>& query, const std::string& body);

  std::shared_ptr<const DetectionForest> snapshot() const;
  std::uint64_t forest_version() const;

  /// Serves HTTP until `should_stop` returns true (polled every 50 ms) or,
  /// without a predicate, until the process ends. Port 0 picks a free port.
  /// `on_ready` receives the bound port once the socket is listening.
  void serve(const std::string& host, int port, const std::function<bool()>& should_stop = {},
             const std::function<void(int)>& on_ready = {});

 private:
  struct Spot {
    std::string patient_id;
    std::filesystem::path image_path;
    int width = 0;
    int height = 0;
    GrayImage gray;
    std::vector<std::string> pyramid_png;  // one per kPyramidFactors entry
  };

  const Spot& spot(const std::string& id) const;
  HttpResponse get_spots() const;
  HttpResponse get_image(const std::string& id, const std::map<std::string, std::string>& query) const;
  HttpResponse get_probability_map(const std::string& id);
  HttpResponse get_detections(const std::string& id);
  HttpResponse post_correction(const std::string& id, const std::string& body);
  HttpResponse get_annotations(const std::string& id) const;
  HttpResponse put_annotations(const std::string& id, const std::string& body);
  HttpResponse get_study_result() const;
  HttpResponse post_study_run();

  ServiceOptions options_;
  std::map<std::string, Spot> spots_;

  std::mutex writer_;  // single writer for session state and the correction log
  OnlineSessionState session_;
  std::map<std::string, std::string> session_owner_;  // spot -> session id

  mutable std::shared_mutex snapshot_mutex_;
  std::shared_ptr<const DetectionForest> snapshot_;
  std::uint64_t version_ = 0;

  std::mutex cache_mutex_;
  std::map<std::string, std::pair<std::uint64_t, std::shared_ptr<const ProbabilityMap>>> map_cache_;

  std::mutex study_mutex_;
  std::mutex annotation_mutex_;
};

}  // namespace tmapath
