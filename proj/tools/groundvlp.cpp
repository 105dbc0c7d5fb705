#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "groundvlp/cli.hpp"
#include "groundvlp/synthetic.hpp"

namespace cli = groundvlp::cli;

int main(int argc, char** argv) {
  CLI::App app{"groundvlp: zero-shot grounding fusion over exported model outputs"};
  app.require_subcommand(1);

  // validate
  std::vector<std::string> validate_paths;
  auto* validate = app.add_subcommand("validate", "Check bundle directories against the format");
  validate->add_option("paths", validate_paths, "Bundle directories or glob patterns");

  // ground
  std::string manifest_path;
  std::vector<std::string> bundles;
  std::string out_path;
  std::string mode_name;
  std::optional<double> alpha;
  std::optional<double> theta;
  std::optional<std::size_t> top_m;
  std::optional<std::size_t> jobs;
  auto* ground = app.add_subcommand("ground", "Select a box for every expression of every bundle");
  ground->add_option("--manifest", manifest_path, "Run manifest (JSON)");
  ground->add_option("--bundles", bundles, "Bundle directories or glob patterns");
  ground->add_option("--out", out_path, "Predictions file (JSON lines)");
  ground->add_option("--mode", mode_name, "Category source: ground-truth | predicted");
  ground->add_option("--alpha", alpha, "Area penalty exponent");
  ground->add_option("--theta", theta, "Detector score threshold");
  ground->add_option("--top-m", top_m, "Region tokens painted for region-based layouts");
  ground->add_option("--jobs", jobs, std::string("Worker threads (default $") + cli::kJobsEnv + ")");

  // eval
  std::string pred_path;
  std::string gt_path;
  std::string task_name = "rec";
  std::string report_path;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--pred", pred_path, "Predictions (JSON lines)")->required();
  eval->add_option("--gt", gt_path, "Ground truth (JSON lines)")->required();
  eval->add_option("--task", task_name, "rec | pg");
  eval->add_option("--report", report_path, "JSON report path (default <pred>.report.json)");

  // heatmap-dump
  std::string bundle_path;
  std::size_t expression_index = 0;
  std::string pgm_path;
  std::optional<std::string> raw_path;
  std::size_t dump_top_m = groundvlp::FusionConfig{}.top_m;
  auto* dump = app.add_subcommand("heatmap-dump", "Write an expression's heat-map as PGM");
  dump->add_option("--bundle", bundle_path, "Bundle directory")->required();
  dump->add_option("--expression", expression_index, "Expression index");
  dump->add_option("--out", pgm_path, "Output PGM path")->required();
  dump->add_option("--raw", raw_path, "Optional raw little-endian f64 dump");
  dump->add_option("--top-m", dump_top_m, "Region tokens painted for region-based layouts");

  // map-category
  std::string tree_text;
  std::string tree_file;
  std::optional<std::string> embeddings_path;
  auto* map = app.add_subcommand("map-category", "Extract and map an expression's target noun");
  auto* tree_opt = map->add_option("--tree", tree_text, "Bracketed or JSON parse tree");
  map->add_option("--tree-file", tree_file, "File holding the parse tree")->excludes(tree_opt);
  map->add_option("--embeddings", embeddings_path, "Embedding table (JSON)");

  // synth
  std::string synth_dir;
  std::size_t synth_count = 12;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "Write generated bundles with planted answers");
  synth->add_option("--out", synth_dir, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of bundles");
  synth->add_option("--seed", synth_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  try {
    if (*validate) return cli::cmd_validate(validate_paths, std::cout, std::cerr);

    if (*ground) {
      cli::RunManifest m;
      if (!manifest_path.empty()) m = cli::read_run_manifest(manifest_path);
      else m.parallelism = cli::default_parallelism();
      if (!bundles.empty()) m.bundles = bundles;
      if (!out_path.empty()) m.output = out_path;
      if (!mode_name.empty()) m.mode = cli::parse_mode(mode_name);
      if (alpha) m.alpha = alpha;
      if (theta) m.theta = theta;
      if (top_m) m.top_m = top_m;
      if (jobs) m.parallelism = *jobs;
      return cli::cmd_ground(m, std::cerr);
    }

    if (*eval) {
      if (report_path.empty())
        report_path = std::filesystem::path(pred_path).replace_extension(".report.json").string();
      return cli::cmd_eval(pred_path, gt_path, cli::parse_task(task_name), report_path, std::cout,
                           std::cerr);
    }

    if (*dump) {
      std::optional<std::filesystem::path> raw;
      if (raw_path) raw = *raw_path;
      return cli::cmd_heatmap_dump(bundle_path, expression_index, pgm_path, raw, dump_top_m,
                                   std::cerr);
    }

    if (*map) {
      if (!tree_file.empty()) {
        std::ifstream in(tree_file);
        if (!in) {
          std::cerr << "map-category: cannot open " << tree_file << '\n';
          return cli::kExitData;
        }
        tree_text.assign(std::istreambuf_iterator<char>(in), {});
      }
      if (tree_text.empty()) {
        std::cerr << "map-category: --tree or --tree-file is required\n";
        return cli::kExitUsage;
      }
      std::optional<std::filesystem::path> emb;
      if (embeddings_path) emb = *embeddings_path;
      return cli::cmd_map_category(tree_text, emb, std::cout, std::cerr);
    }

    if (*synth) {
      const auto paths = groundvlp::synthetic::write_suite(synth_dir, synth_count, synth_seed);
      std::cout << "wrote " << paths.size() << " bundles to " << synth_dir << '\n';
      return cli::kExitOk;
    }
  } catch (const groundvlp::Error& e) {
    std::cerr << e.what() << '\n';
    return cli::is_usage_error(e.code()) ? cli::kExitUsage : cli::kExitData;
  }
  return cli::kExitUsage;
}
