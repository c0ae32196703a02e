// Command-line front end. Every flag can also come from a TOML file given
// with --config; flags on the command line win.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"

#include "tmapath/error.hpp"
#include "tmapath/image_io.hpp"
#include "tmapath/interactive.hpp"
#include "tmapath/service.hpp"
#include "tmapath/study.hpp"
#include "tmapath/survival.hpp"
#include "tmapath/weibull.hpp"

namespace fs = std::filesystem;
using namespace tmapath;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNonConvergence = 3;

struct Args {
  std::string spots, annotations, survival, out, forest, log, staining, host = "127.0.0.1", split = "median";
  double threshold = 0.0;
  double radius = 10.0;
  bool weibull = false;
  int port = 8080;
  SyntheticStudyParams synthetic;
  bool no_effect = false;
  StudyConfig study;
};

void add_data_options(CLI::App* cmd, Args& a) {
  cmd->add_option("--spots", a.spots, "directory of spot images");
  cmd->add_option("--annotations", a.annotations, "directory of annotation JSON files");
  cmd->add_option("--out", a.out, "output path");
  cmd->add_option("--seed", a.study.seed, "random seed");
}

void add_model_options(CLI::App* cmd, Args& a) {
  auto& f = a.study.forest;
  cmd->add_option("--trees", f.n_trees, "trees in the forest")->capture_default_str();
  cmd->add_option("--depth", f.max_depth, "maximum tree depth")->capture_default_str();
  cmd->add_option("--features", f.n_features_per_node, "candidate features per node")->capture_default_str();
  cmd->add_option("--window", f.window, "patch window (odd)")->capture_default_str();
  cmd->add_option("--radius", a.radius, "mean-shift kernel radius")->capture_default_str();
  cmd->add_option("--stride", a.study.detect.stride, "probability map stride")->capture_default_str();
  cmd->add_option("--min-distance", a.study.negative_min_distance, "background sample exclusion radius");
  cmd->add_option("--stain-radius", a.study.staining_radius, "staining histogram radius");
  cmd->add_option("--forest", a.forest, "trained forest JSON");
}

StudyConfig resolve(Args& a) {
  StudyConfig cfg = a.study;
  cfg.spots_dir = a.spots;
  cfg.annotations_dir = a.annotations;
  cfg.survival_csv = a.survival;
  cfg.output_dir = a.out;
  if (!a.forest.empty()) cfg.forest_path = fs::path(a.forest);
  cfg.detect.mean_shift = MeanShiftConfig::for_radius(a.radius);
  cfg.forest.rng_seed = cfg.seed;
  if (a.split == "threshold") {
    cfg.split = {SplitRule::threshold, a.threshold};
  } else if (a.split != "median") {
    throw ConfigError("split must be median or threshold");
  }
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

DetectionForest obtain_forest(const StudyConfig& cfg) {
  if (cfg.forest_path) return load_forest(cfg.forest_path->string());
  const auto data = build_training_set(cfg);
  if (num_classes(data) < 2) throw DataError("annotations yield no usable training samples");
  return train_forest(data, cfg.forest);
}

int cmd_train(Args& a) {
  auto cfg = resolve(a);
  if (a.spots.empty() || a.annotations.empty() || a.out.empty())
    throw ConfigError("train needs --spots, --annotations and --out");
  const auto data = build_training_set(cfg);
  if (num_classes(data) < 2) throw DataError("annotations yield no usable training samples");
  const auto forest = train_forest(data, cfg.forest);
  save_forest(a.out, forest);
  std::cout << "trained " << forest.trees.size() << " trees on " << data.size()
            << " samples, oob error " << oob_error(forest, data) << "\n";
  return 0;
}

int cmd_detect(Args& a) {
  auto cfg = resolve(a);
  if (a.spots.empty() || a.out.empty()) throw ConfigError("detect needs --spots and --out");
  if (!cfg.forest_path && a.annotations.empty()) throw ConfigError("detect needs --forest or --annotations");
  const auto forest = obtain_forest(cfg);
  fs::create_directories(a.out);
  int n = 0;
  for (const auto& [id, path] : list_spots(cfg.spots_dir)) {
    const auto dets = detect_nuclei(forest, to_gray(load_image(path)), cfg.detect);
    write_file(fs::path(a.out) / (id + ".csv"), detections_csv(id, dets));
    ++n;
  }
  std::cout << "processed " << n << " spots\n";
  return 0;
}

int cmd_stain(Args& a) {
  auto cfg = resolve(a);
  if (a.spots.empty() || a.annotations.empty() || a.out.empty())
    throw ConfigError("stain needs --spots, --annotations and --out");
  const auto forest = obtain_forest(cfg);
  const auto model = build_staining_model(cfg);
  std::vector<PatientStaining> rows;
  for (const auto& [id, path] : list_spots(cfg.spots_dir)) {
    const auto img = load_image(path);
    SpotRecord rec;
    rec.spot_id = rec.patient_id = id;
    if (const auto ann = cfg.annotations_dir / (id + ".json"); fs::exists(ann))
      rec.patient_id = load_annotations(ann).patient_id;
    rows.push_back(patient_staining(rec, detect_nuclei(forest, to_gray(img), cfg.detect), model, img));
  }
  write_file(a.out, staining_csv(rows));
  return 0;
}

std::map<std::string, double> read_staining_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("staining CSV not found: " + p.string());
  std::map<std::string, double> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string id, det, st, pct;
    std::getline(ls, id, ',');
    std::getline(ls, det, ',');
    std::getline(ls, st, ',');
    std::getline(ls, pct, ',');
    if (id.empty()) continue;
    if (std::stoi(det) > 0) out[id] = std::stod(pct);
  }
  return out;
}

int cmd_survival(Args& a) {
  auto cfg = resolve(a);
  if (a.survival.empty() || a.out.empty()) throw ConfigError("survival needs --survival and --out");
  if (!fs::is_regular_file(a.survival)) throw ConfigError("survival CSV not found: " + a.survival);
  const auto table = read_survival_csv(a.survival);
  fs::create_directories(a.out);
  int code = 0;
  if (!a.staining.empty()) {
    const auto staining = read_staining_csv(a.staining);
    std::vector<SurvivalRecord> joined;
    std::vector<double> values;
    for (const auto& r : table.records)
      if (const auto it = staining.find(r.patient_id); it != staining.end()) {
        joined.push_back(r);
        values.push_back(it->second);
      }
    const auto split = split_by_threshold(values, cfg.split);
    std::vector<SurvivalRecord> low, high;
    for (auto i : split.low) low.push_back(joined[i]);
    for (auto i : split.high) high.push_back(joined[i]);
    const auto lr = log_rank(low, high);
    write_file(fs::path(a.out) / "km_low.csv", kaplan_meier_csv(kaplan_meier(low)));
    write_file(fs::path(a.out) / "km_high.csv", kaplan_meier_csv(kaplan_meier(high)));
    std::printf("log-rank chi2 = %.6g, p = %.6g (low n=%zu, high n=%zu)\n", lr.chi_square, lr.p_value, low.size(),
                high.size());
  }
  if (a.weibull) {
    const auto fit = fit_weibull_ph(table.records, {});
    write_file(fs::path(a.out) / "weibull.json", weibull_fit_json(fit, table.covariate_names));
    std::cout << "weibull fit: " << to_string(fit.status) << "\n";
    if (!fit.converged()) code = kExitNonConvergence;
  }
  return code;
}

int cmd_study(Args& a) {
  const auto cfg = resolve(a);
  const auto r = run_study(cfg);
  std::printf("%d/%d spots processed, %zu quarantined; log-rank chi2 = %.6g, p = %.6g\n", r.n_processed, r.n_spots,
              r.quarantined.size(), r.log_rank.chi_square, r.log_rank.p_value);
  return 0;
}

int cmd_serve(Args& a) {
  ServiceOptions opt;
  opt.study = resolve(a);
  opt.correction_log = a.log;
  StudyService service(std::move(opt));
  service.serve(a.host, a.port, {},
                [&](int port) { std::cout << "listening on " << a.host << ":" << port << std::endl; });
  return 0;
}

int cmd_replay(Args& a) {
  auto cfg = resolve(a);
  if (a.log.empty() || a.out.empty()) throw ConfigError("replay needs --log and --out");
  if (!fs::is_regular_file(a.log)) throw ConfigError("correction log not found: " + a.log);
  auto library = std::make_shared<SpotLibrary>();
  for (const auto& [id, path] : list_spots(cfg.spots_dir))
    library->emplace(id, make_padded_source(to_gray(load_image(path)), cfg.forest.window));
  auto data = build_training_set(cfg);
  auto forest = obtain_forest(cfg);
  auto state = make_session(std::move(forest), std::move(data), library);
  std::vector<SessionEvent> events;
  for (auto& c : read_correction_log(a.log)) events.push_back({SessionEvent::Kind::correction, std::move(c)});
  events.push_back({SessionEvent::Kind::stop, {}});
  const auto final_forest = session_loop(state, events);
  save_forest(a.out, final_forest);
  std::cout << "replayed " << state.buffer.size() << " corrections; forest has " << final_forest.trees.size()
            << " trees\n";
  return 0;
}

int cmd_synthetic(Args& a) {
  if (a.out.empty()) throw ConfigError("synthetic needs --out");
  a.synthetic.planted_effect = !a.no_effect;
  const auto cfg = generate_synthetic_study(a.out, a.synthetic, a.study.seed);
  std::cout << "wrote " << a.synthetic.n_patients << " patients to " << a.out << "\n"
            << "suggested model flags: --window " << cfg.forest.window << " --trees " << cfg.forest.n_trees
            << " --depth " << cfg.forest.max_depth << " --features " << cfg.forest.n_features_per_node
            << " --radius " << cfg.detect.mean_shift.radius << " --min-distance " << cfg.negative_min_distance
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tissue microarray nucleus detection, staining quantification and survival analysis"};
  app.set_config("--config", "", "TOML file with default flag values");
  app.require_subcommand(1);
  Args a;

  auto* train = app.add_subcommand("train", "train a detection forest from annotated spots");
  add_data_options(train, a);
  add_model_options(train, a);

  auto* detect = app.add_subcommand("detect", "detect nuclei in every spot");
  add_data_options(detect, a);
  add_model_options(detect, a);

  auto* stain = app.add_subcommand("stain", "per-patient staining percentages");
  add_data_options(stain, a);
  add_model_options(stain, a);

  auto* survival = app.add_subcommand("survival", "Kaplan-Meier, log-rank and Weibull regression");
  survival->add_option("--survival", a.survival, "survival CSV");
  survival->add_option("--staining", a.staining, "staining CSV used for the group split");
  survival->add_option("--split", a.split, "median or threshold")->capture_default_str();
  survival->add_option("--threshold", a.threshold, "threshold for --split threshold");
  survival->add_flag("--weibull", a.weibull, "fit a Weibull proportional hazards model");
  survival->add_option("--out", a.out, "output directory");

  auto* study = app.add_subcommand("study", "full pipeline");
  add_data_options(study, a);
  add_model_options(study, a);
  study->add_option("--survival", a.survival, "survival CSV");
  study->add_option("--split", a.split, "median or threshold")->capture_default_str();
  study->add_option("--threshold", a.threshold, "threshold for --split threshold");

  auto* serve = app.add_subcommand("serve", "HTTP API for annotation and corrections");
  add_data_options(serve, a);
  add_model_options(serve, a);
  serve->add_option("--survival", a.survival, "survival CSV for POST /study/run");
  serve->add_option("--host", a.host)->capture_default_str();
  serve->add_option("--port", a.port)->capture_default_str();
  serve->add_option("--log", a.log, "append-only correction log");

  auto* replay = app.add_subcommand("replay", "replay a correction log into a forest");
  add_data_options(replay, a);
  add_model_options(replay, a);
  replay->add_option("--log", a.log, "correction log (JSON lines)");

  auto* synthetic = app.add_subcommand("synthetic", "write a synthetic study (spots, annotations, survival)");
  synthetic->add_option("--out", a.out, "output directory");
  synthetic->add_option("--seed", a.study.seed, "random seed")->capture_default_str();
  synthetic->add_option("--patients", a.synthetic.n_patients, "patients, one spot each")->capture_default_str();
  synthetic->add_option("--annotated", a.synthetic.n_annotated, "spots with annotations")->capture_default_str();
  synthetic->add_option("--spot-size", a.synthetic.spot_size, "spot width and height")->capture_default_str();
  synthetic->add_flag("--no-effect", a.no_effect, "give both staining groups the same survival distribution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(a);
    if (*detect) return cmd_detect(a);
    if (*stain) return cmd_stain(a);
    if (*survival) return cmd_survival(a);
    if (*study) return cmd_study(a);
    if (*serve) return cmd_serve(a);
    if (*replay) return cmd_replay(a);
    if (*synthetic) return cmd_synthetic(a);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
