#include "tmapath/study.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "tmapath/annotation.hpp"
#include "tmapath/error.hpp"
#include "tmapath/image_io.hpp"
#include "tmapath/synthetic.hpp"

namespace tmapath {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

bool is_image(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

json forest_config_json(const ForestConfig& c) {
  return {{"n_trees", c.n_trees},
          {"max_depth", c.max_depth},
          {"n_features_per_node", c.n_features_per_node},
          {"window", c.window},
          {"rng_seed", c.rng_seed},
          {"background_subsample_ratio", c.background_subsample_ratio},
          {"min_samples_split", c.min_samples_split}};
}

json curve_json(const KaplanMeierCurve& c) {
  return {{"times", c.times}, {"survival", c.survival}, {"at_risk", c.at_risk}, {"deaths", c.deaths}};
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<SpotRecord> annotation_for(const StudyConfig& cfg, const std::string& spot_id) {
  if (cfg.annotations_dir.empty()) return std::nullopt;
  const auto path = cfg.annotations_dir / (spot_id + ".json");
  if (!fs::exists(path)) return std::nullopt;
  return load_annotations(path);
}

struct SpotOutcome {
  std::string spot_id;
  std::vector<Detection> detections;
  PatientStaining staining;
};

}  // namespace

void validate(const StudyConfig& cfg) {
  if (cfg.survival_csv.empty() || !fs::is_regular_file(cfg.survival_csv))
    throw ConfigError("survival CSV not found: " + cfg.survival_csv.string());
  if (cfg.spots_dir.empty() || !fs::is_directory(cfg.spots_dir))
    throw ConfigError("spots directory not found: " + cfg.spots_dir.string());
  if (cfg.annotations_dir.empty() || !fs::is_directory(cfg.annotations_dir))
    throw ConfigError("annotations directory not found: " + cfg.annotations_dir.string());
  if (cfg.forest_path && !fs::is_regular_file(*cfg.forest_path))
    throw ConfigError("forest file not found: " + cfg.forest_path->string());
  if (cfg.output_dir.empty()) throw ConfigError("output directory not set");
  try {
    validate(cfg.forest);
    for (const auto& g : cfg.forest_grid) validate(g);
    validate(cfg.detect.mean_shift);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.detect.stride < 1) throw ConfigError("stride must be >= 1");
  if (!(cfg.staining_radius > 0.0) || cfg.staining_bins < 1) throw ConfigError("invalid staining parameters");
  if (cfg.negative_min_distance < 0.0) throw ConfigError("negative_min_distance must be >= 0");
}

std::vector<std::pair<std::string, fs::path>> list_spots(const fs::path& dir) {
  std::vector<std::pair<std::string, fs::path>> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image(entry.path())) out.emplace_back(entry.path().stem().string(), entry.path());
  std::sort(out.begin(), out.end());
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].first == out[i - 1].first) throw ConfigError("duplicate spot id '" + out[i].first + "'");
  return out;
}

TrainingSet build_training_set(const StudyConfig& cfg) {
  TrainingSet data;
  for (const auto& [spot_id, path] : list_spots(cfg.spots_dir)) {
    const auto record = annotation_for(cfg, spot_id);
    if (!record || record->annotations.empty()) continue;
    std::vector<Point2d> nuclei;
    for (const auto& a : record->annotations) nuclei.push_back(a.center);
    const GrayImage gray = to_gray(load_image(path));
    try {
      append_training_samples(data, gray, nuclei, cfg.forest.window, cfg.negative_min_distance);
    } catch (const DataError&) {
      // too few nuclei for a tessellation; the spot contributes nothing
    }
  }
  return data;
}

StainingModel build_staining_model(const StudyConfig& cfg) {
  std::vector<RgbImage> images;
  std::vector<std::pair<std::size_t, NucleusAnnotation>> marks;
  for (const auto& [spot_id, path] : list_spots(cfg.spots_dir)) {
    const auto record = annotation_for(cfg, spot_id);
    if (!record) continue;
    bool any = false;
    for (const auto& a : record->annotations)
      if (a.stained) {
        marks.emplace_back(images.size(), a);
        any = true;
      }
    if (any) images.push_back(load_image(path));
  }
  std::vector<StainingSample> samples;
  for (const auto& [idx, a] : marks) samples.push_back({&images[idx], a.center, *a.stained});
  return fit_staining_model(samples, cfg.staining_radius, cfg.staining_bins);
}

std::string study_config_json(const StudyConfig& cfg) {
  json j;
  j["spots_dir"] = cfg.spots_dir.string();
  j["annotations_dir"] = cfg.annotations_dir.string();
  j["survival_csv"] = cfg.survival_csv.string();
  j["output_dir"] = cfg.output_dir.string();
  j["forest_path"] = cfg.forest_path ? json(cfg.forest_path->string()) : json(nullptr);
  j["forest"] = forest_config_json(cfg.forest);
  j["forest_grid"] = json::array();
  for (const auto& g : cfg.forest_grid) j["forest_grid"].push_back(forest_config_json(g));
  const auto& ms = cfg.detect.mean_shift;
  j["detect"] = {{"stride", cfg.detect.stride},
                 {"radius", ms.radius},
                 {"convergence_eps", ms.convergence_eps},
                 {"max_iters", ms.max_iters},
                 {"merge_dist", ms.merge_dist},
                 {"min_mass", ms.min_mass},
                 {"seed_threshold", ms.seed_threshold}};
  j["negative_min_distance"] = cfg.negative_min_distance;
  j["staining"] = {{"radius", cfg.staining_radius}, {"bins", cfg.staining_bins}};
  j["split"] = {{"rule", cfg.split.rule == SplitRule::median ? "median" : "threshold"},
                {"threshold", cfg.split.threshold}};
  j["seed"] = cfg.seed;
  return j.dump();
}

StudyResult run_study(const StudyConfig& cfg) {
  validate(cfg);
  const auto started = std::chrono::steady_clock::now();
  const std::string started_iso = iso_now();
  const auto survival = read_survival_csv(cfg.survival_csv);
  const auto spots = list_spots(cfg.spots_dir);
  fs::create_directories(cfg.output_dir / "detections");

  ForestConfig used = cfg.forest;
  used.rng_seed = cfg.seed;
  std::vector<double> grid_oob;
  DetectionForest forest;
  if (cfg.forest_path) {
    forest = load_forest(cfg.forest_path->string());
    used = forest.config;
  } else {
    const TrainingSet data = build_training_set(cfg);
    if (num_classes(data) < 2) throw DataError("annotations yield no usable training samples");
    if (!cfg.forest_grid.empty()) {
      auto grid = cfg.forest_grid;
      for (auto& g : grid) g.rng_seed = cfg.seed;
      const auto g = grid_search_oob(data, grid);
      used = g.best;
      grid_oob = g.oob_errors;
    }
    forest = train_forest(data, used);
  }
  save_forest((cfg.output_dir / "forest.json").string(), forest);
  const StainingModel model = build_staining_model(cfg);

  StudyResult result;
  result.n_spots = static_cast<int>(spots.size());
  std::vector<std::optional<SpotOutcome>> outcomes(spots.size());
  std::vector<std::optional<QuarantinedSpot>> failures(spots.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < spots.size(); i = next++) {
      const auto& [spot_id, path] = spots[i];
      std::string stage = "load";
      try {
        const RgbImage img = load_image(path);
        stage = "annotation";
        SpotRecord record;
        if (auto a = annotation_for(cfg, spot_id)) record = *a;
        record.spot_id = spot_id;
        if (record.patient_id.empty()) record.patient_id = spot_id;
        stage = "detect";
        SpotOutcome o{spot_id, detect_nuclei(forest, to_gray(img), cfg.detect), {}};
        stage = "staining";
        o.staining = patient_staining(record, o.detections, model, img);
        outcomes[i] = std::move(o);
      } catch (const std::exception& e) {
        failures[i] = QuarantinedSpot{spot_id, stage, e.what()};
      }
    }
  };
  const auto n_workers = std::max<std::size_t>(
      1, std::min<std::size_t>(spots.size(), std::max(1u, std::thread::hardware_concurrency())));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::map<std::string, PatientStaining> per_patient;
  for (std::size_t i = 0; i < spots.size(); ++i) {
    if (failures[i]) {
      result.quarantined.push_back(*failures[i]);
      continue;
    }
    const auto& o = *outcomes[i];
    ++result.n_processed;
    write_text(cfg.output_dir / "detections" / (o.spot_id + ".csv"), detections_csv(o.spot_id, o.detections));
    auto& agg = per_patient[o.staining.patient_id];
    agg.patient_id = o.staining.patient_id;
    agg.n_detected += o.staining.n_detected;
    agg.n_stained += o.staining.n_stained;
  }
  for (auto& [id, p] : per_patient) {
    if (p.n_detected == 0)
      p.flags.emplace_back("no nuclei detected");
    else
      p.percentage = 100.0 * p.n_stained / p.n_detected;
    result.staining.push_back(p);
  }

  std::map<std::string, const SurvivalRecord*> by_patient;
  for (const auto& r : survival.records) by_patient[r.patient_id] = &r;
  std::vector<const SurvivalRecord*> joined;
  std::vector<double> values;
  for (const auto& p : result.staining) {
    const auto it = by_patient.find(p.patient_id);
    if (it == by_patient.end())
      result.excluded.push_back(p.patient_id + ": no survival record");
    else if (p.n_detected == 0)
      result.excluded.push_back(p.patient_id + ": no nuclei detected");
    else {
      joined.push_back(it->second);
      values.push_back(p.percentage);
      result.split_patients.push_back(p.patient_id);
    }
  }
  for (const auto& [id, rec] : by_patient)
    if (!per_patient.count(id)) result.excluded.push_back(id + ": no processed spot");
  if (joined.size() < 2) throw DataError("fewer than two patients with staining and survival data");

  const SplitResult split = split_by_threshold(values, cfg.split);
  std::vector<SurvivalRecord> low, high;
  for (auto i : split.low) {
    low.push_back(*joined[i]);
    result.low_group.push_back(result.split_patients[i]);
  }
  for (auto i : split.high) {
    high.push_back(*joined[i]);
    result.high_group.push_back(result.split_patients[i]);
  }
  result.km_low = kaplan_meier(low);
  result.km_high = kaplan_meier(high);
  result.log_rank = log_rank(low, high);

  json prov;
  prov["code_version"] = kCodeVersion;
  prov["config"] = json::parse(study_config_json(cfg));
  prov["forest_config_used"] = forest_config_json(used);
  prov["forest_loaded"] = cfg.forest_path.has_value();
  prov["grid_oob_errors"] = grid_oob;
  prov["seed"] = cfg.seed;
  result.provenance_json = prov.dump();
  result.forest = std::make_shared<const DetectionForest>(std::move(forest));

  write_text(cfg.output_dir / "staining.csv", staining_csv(result.staining));
  write_text(cfg.output_dir / "km_low.csv", kaplan_meier_csv(result.km_low));
  write_text(cfg.output_dir / "km_high.csv", kaplan_meier_csv(result.km_high));
  write_text(cfg.output_dir / "study_result.json", study_result_json(result));
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_text(cfg.output_dir / "run_log.json",
             json{{"started", started_iso}, {"finished", iso_now()}, {"seconds", seconds}}.dump(2) + "\n");
  return result;
}

std::string study_result_json(const StudyResult& r) {
  json j;
  j["staining"] = json::array();
  for (const auto& p : r.staining)
    j["staining"].push_back({{"patient_id", p.patient_id},
                             {"n_detected", p.n_detected},
                             {"n_stained", p.n_stained},
                             {"percentage", p.percentage},
                             {"flags", p.flags}});
  j["groups"] = {{"low", r.low_group}, {"high", r.high_group}};
  j["km_low"] = curve_json(r.km_low);
  j["km_high"] = curve_json(r.km_high);
  j["log_rank"] = {{"chi_square", r.log_rank.chi_square}, {"p_value", r.log_rank.p_value}};
  j["quarantined"] = json::array();
  for (const auto& q : r.quarantined)
    j["quarantined"].push_back({{"spot_id", q.spot_id}, {"stage", q.stage}, {"message", q.message}});
  j["n_spots"] = r.n_spots;
  j["n_processed"] = r.n_processed;
  j["excluded"] = r.excluded;
  j["provenance"] = r.provenance_json.empty() ? json::object() : json::parse(r.provenance_json);
  return j.dump(2) + "\n";
}

StudyConfig generate_synthetic_study(const fs::path& root, const SyntheticStudyParams& params, std::uint64_t seed) {
  if (params.n_patients < 2 || params.n_annotated < 1 || params.n_annotated > params.n_patients)
    throw std::invalid_argument("synthetic study needs >= 2 patients and 1..n annotated spots");
  fs::create_directories(root / "spots");
  fs::create_directories(root / "annotations");
  Rng rng(derive_seed(seed, 0));

  const int n = params.n_patients;
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)], order[uniform_index(rng, static_cast<std::uint64_t>(i) + 1)]);
  std::vector<bool> high(static_cast<std::size_t>(n), false);
  for (int k = n / 2; k < n; ++k) high[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;

  auto patient_id = [](int i) {
    std::ostringstream s;
    s << 'P';
    s.width(4);
    s.fill('0');
    s << i + 1;
    return s.str();
  };

  for (int i = 0; i < n; ++i) {
    Rng spot_rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    SyntheticSpotParams sp;
    sp.width = sp.height = params.spot_size;
    sp.n_discs = params.discs_per_spot;
    const double lo = high[static_cast<std::size_t>(i)] ? 0.6 : 0.1;
    sp.stained_fraction = lo + 0.3 * uniform_unit(spot_rng);
    const auto spot = generate_synthetic_spot(sp, spot_rng);
    const auto id = patient_id(i);
    save_png(root / "spots" / (id + ".png"), spot.image);
    if (i < params.n_annotated) {
      SpotRecord rec;
      rec.spot_id = id;
      rec.patient_id = id;
      for (const auto& d : spot.discs) {
        NucleusAnnotation a;
        a.center = d.center;
        a.radius = d.radius;
        a.cls = NucleusClass::cancerous;
        a.stained = d.stained ? StainState::stained : StainState::unstained;
        a.confidence = Confidence::certainly;
        a.expert_id = "synthetic";
        rec.annotations.push_back(a);
      }
      save_annotations(root / "annotations" / (id + ".json"), rec);
    }
  }

  // Weibull PH: S(t) = exp(-t^alpha / lambda * exp(eta)).
  auto draw_time = [&](double eta) {
    const double e = -std::log(1.0 - uniform_unit(rng));
    return std::pow(params.lambda * e * std::exp(-eta), 1.0 / params.alpha);
  };
  auto draw_outcome = [&](double eta) {
    double t = draw_time(eta);
    int event = 1;
    if (uniform_unit(rng) < params.censoring_fraction) {
      t *= uniform_unit(rng);
      event = 0;
    }
    return std::make_pair(std::max(t * 12.0, 1e-3), event);
  };

  SurvivalTable table;
  table.records.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) table.records[static_cast<std::size_t>(i)].patient_id = patient_id(i);
  if (params.planted_effect) {
    for (int i = 0; i < n; ++i) {
      const double eta = high[static_cast<std::size_t>(i)] ? std::log(params.hazard_ratio) : 0.0;
      auto& r = table.records[static_cast<std::size_t>(i)];
      std::tie(r.time, r.event) = draw_outcome(eta);
    }
  } else {
    // Deal each drawn outcome to one low and one high patient.
    std::vector<int> lows, highs;
    for (int i = 0; i < n; ++i) (high[static_cast<std::size_t>(i)] ? highs : lows).push_back(i);
    for (std::size_t k = 0; k < std::max(lows.size(), highs.size()); ++k) {
      const auto [t, event] = draw_outcome(0.0);
      for (const auto* group : {&lows, &highs})
        if (k < group->size()) {
          auto& r = table.records[static_cast<std::size_t>((*group)[k])];
          r.time = t;
          r.event = event;
        }
    }
  }
  write_text(root / "survival.csv", survival_csv(table));

  StudyConfig cfg;
  cfg.spots_dir = root / "spots";
  cfg.annotations_dir = root / "annotations";
  cfg.survival_csv = root / "survival.csv";
  cfg.output_dir = root / "out";
  cfg.seed = seed;
  cfg.forest.n_trees = 12;
  cfg.forest.max_depth = 10;
  cfg.forest.n_features_per_node = 48;
  cfg.forest.window = 41;
  cfg.detect.stride = 2;
  cfg.detect.mean_shift = MeanShiftConfig::for_radius(8.0);
  cfg.negative_min_distance = 8.0;
  cfg.staining_radius = 6.0;
  return cfg;
}

}  // namespace tmapath
