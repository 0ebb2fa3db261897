#include <cctype>
#include <cstdlib>
#include <set>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "pcbmine/eval.hpp"

using namespace pcbmine::cli;

namespace {

struct Invocation {
  GlobalOptions global;
  IngestOptions ingest;
  ConvertOptions convert;
  StatsOptions stats;
  std::size_t stats_target = 0;
  RoiOptions roi;
  AugmentOptions augment;
  EvalOptions eval;
  InventoryOptions inventory;
  std::string config;
};

void build(CLI::App& app, Invocation& v, bool read_config, const std::string& config_default) {
  app.require_subcommand(1);
  app.fallthrough();
  if (read_config) {
    app.set_config("--config", config_default, "TOML file with defaults; [command] sections for subcommand options",
                   !config_default.empty());
  } else {
    app.add_option("--config", v.config, "TOML file with defaults; [command] sections for subcommand options");
  }
  app.add_option("-o,--output-dir", v.global.output_dir, "Directory for all outputs")->capture_default_str();
  app.add_option("-j,--jobs", v.global.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_flag("--lenient", v.global.lenient, "Clamp out-of-range values and warn instead of failing");

  auto* ingest = app.add_subcommand("ingest", "Label Studio export -> manifest, images and YOLO labels");
  ingest->add_option("--export", v.ingest.export_file, "Label Studio JSON export");
  ingest->add_option("--images-dir", v.ingest.images_dir, "Directory holding the exported images");
  ingest->add_option("--split", v.ingest.split, "train | val | ratio:F | list:FILE")->capture_default_str();

  auto* convert = app.add_subcommand("convert", "Manifest <-> YOLO label directory");
  convert->add_option("--to", v.convert.to, "yolo | manifest")->capture_default_str();
  convert->add_option("--manifest", v.convert.manifest, "Manifest to export (--to yolo)");
  convert->add_option("--labels-dir", v.convert.labels_dir, "YOLO label files (--to manifest)");
  convert->add_option("--images-dir", v.convert.images_dir, "Images matching the labels (--to manifest)");
  convert->add_option("--split", v.convert.split, "train | val | ratio:F | list:FILE")->capture_default_str();

  auto* stats = app.add_subcommand("stats", "Class histogram, split summary and optional augmentation plan");
  stats->add_option("--manifest", v.stats.manifest, "Dataset manifest");
  stats->add_option("--target-min", v.stats_target, "Plan augmentation up to this many train instances per class");

  auto* roi = app.add_subcommand("roi", "Crop every image to its board region and remap labels");
  roi->add_option("--manifest", v.roi.manifest, "Dataset manifest");
  roi->add_option("--images-dir", v.roi.images_dir, "Image root (default: <manifest dir>/images)");
  roi->add_option("--margin", v.roi.margin, "Pixels added around the detected board")->capture_default_str();
  roi->add_option("--contrast", v.roi.contrast, "LOW,HIGH percentiles for a contrast stretch")->delimiter(',');

  auto* augment = app.add_subcommand("augment", "Flip/rotate train images until each class reaches a minimum");
  augment->add_option("--manifest", v.augment.manifest, "Dataset manifest");
  augment->add_option("--images-dir", v.augment.images_dir, "Image root (default: <manifest dir>/images)");
  augment->add_option("--target-min", v.augment.target_min, "Minimum train instances per class")->capture_default_str();
  augment->add_option("--ops", v.augment.ops, "Subset of hflip,vflip,rot90,rot180,rot270")->delimiter(',');

  auto* eval = app.add_subcommand("eval", "Score detection files against the manifest");
  eval->add_option("--manifest", v.eval.manifest, "Dataset manifest");
  eval->add_option("--detections-dir", v.eval.detections_dir, "One <image stem>.txt per image");
  eval->add_option("--split", v.eval.split, "val | train | all")->capture_default_str();
  eval->add_option("--thresholds", v.eval.thresholds, "Extra IoU thresholds, comma separated")->delimiter(',');

  auto* inventory = app.add_subcommand("inventory", "Critical raw material inventory from detection files");
  inventory->add_option("--detections-dir", v.inventory.detections_dir, "One detection file per board");
  inventory->add_option("--mapping", v.inventory.mapping, "JSON mapping config (default: built-in table)");
  inventory->add_option("--floor", v.inventory.floor, "Ignore detections below this confidence")->capture_default_str();
}

std::string env_name(const std::string& command, const std::string& option) {
  std::string out = "PCBMINE_";
  for (const auto& part : {command, option}) {
    if (part.empty()) continue;
    for (char c : part) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    out += '_';
  }
  out.pop_back();
  return out;
}

std::string key(const CLI::App* owner, const CLI::Option* opt) {
  return owner->get_parent() ? owner->get_name() + "." + opt->get_name() : opt->get_name();
}

std::set<std::string> given(const CLI::App& app) {
  std::set<std::string> out;
  auto collect = [&](const CLI::App* a) {
    for (const auto* opt : a->get_options())
      if (opt->count() > 0) out.insert(key(a, opt));
  };
  collect(&app);
  for (const auto* sub : app.get_subcommands()) collect(sub);
  return out;
}

/// Environment values fill every option the command line left unset, so
/// they take precedence over the config file.
void apply_environment(CLI::App& app, const std::set<std::string>& from_command_line) {
  auto apply = [&](CLI::App* a, const std::string& command) {
    for (auto* opt : a->get_options()) {
      const auto name = opt->get_single_name();
      if (name.empty() || name == "help" || name == "config" || from_command_line.count(key(a, opt))) continue;
      const char* value = std::getenv(env_name(command, name).c_str());
      if (!value || !*value) continue;
      opt->clear();
      opt->add_result(std::string(value));
      opt->run_callback();
    }
  };
  apply(&app, "");
  for (auto* sub : app.get_subcommands()) apply(sub, sub->get_name());
}

}  // namespace

int main(int argc, char** argv) {
  const std::string description = "PCB component dataset, evaluation and raw-material inventory tool";

  // First pass: the command line alone, to learn which options it set.
  std::set<std::string> from_command_line;
  Invocation first;
  {
    CLI::App app(description, "pcbmine");
    build(app, first, false, "");
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 2;
    }
    from_command_line = given(app);
  }

  std::string config_default;
  if (first.config.empty()) {
    if (const char* env = std::getenv("PCBMINE_CONFIG"); env && *env) config_default = env;
  }

  Invocation v;
  CLI::App app(description, "pcbmine");
  build(app, v, true, config_default);
  try {
    app.parse(argc, argv);
    apply_environment(app, from_command_line);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (v.global.jobs == 0) v.global.jobs = std::max(1u, std::thread::hardware_concurrency());

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "ingest") return cmd_ingest(v.global, v.ingest);
    if (command == "convert") return cmd_convert(v.global, v.convert);
    if (command == "stats") {
      if (app.get_subcommand("stats")->get_option("--target-min")->count() > 0) v.stats.target_min = v.stats_target;
      return cmd_stats(v.global, v.stats);
    }
    if (command == "roi") return cmd_roi(v.global, v.roi);
    if (command == "augment") return cmd_augment(v.global, v.augment);
    if (command == "eval") return cmd_eval(v.global, v.eval);
    if (command == "inventory") return cmd_inventory(v.global, v.inventory);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const InputError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const pcbmine::eval::EvalError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 2;
}
