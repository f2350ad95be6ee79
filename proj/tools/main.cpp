// Command-line front end: gen, stylize, train, eval, ablate, sweep,
// export-curves.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ciss/experiment.hpp"

namespace fs = std::filesystem;
using namespace ciss;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : ExperimentConfig::load(path);
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty() || fs::is_directory(dir)) return;
  const auto parent = dir.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw DataError("parent directory does not exist: " + parent.string());
  fs::create_directory(dir);
}

void progress(const MetricsRow& r) {
  if (r.iter % 100 != 0) return;
  std::fprintf(stderr, "iter %6llu  loss %.4f  ce_src %.4f  ce_tgt %.4f  inv_src %.5f  inv_tgt %.5f  q %.3f\n",
               static_cast<unsigned long long>(r.iter), r.loss_total, r.loss_ce_src, r.loss_ce_tgt, r.loss_inv_src,
               r.loss_inv_tgt, r.q_weight);
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

std::vector<CellResult> run_table(const std::vector<Cell>& cells, const Dataset& data) {
  const std::size_t threads = thread_count();
  std::fprintf(stderr, "%zu runs on %zu worker(s)\n", cells.size(), threads);
  return run_cells(cells, data, threads, [](const CellResult& r) {
    std::fprintf(stderr, "  %-12s %-8s seed %llu  mIoU %.2f\n", r.cell.row.c_str(), r.cell.value.c_str(),
                 static_cast<unsigned long long>(r.cell.seed), 100.0 * r.miou);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy-scale unsupervised domain adaptation with cross-domain invariance"};
  app.require_subcommand(1);

  std::string config_path, out, input, style, method = "fda", checkpoint, split = "target_val", param, study = "variants",
                               metrics_path;
  double beta = 0.06;
  std::uint64_t seed = 0;
  bool force = false;
  std::vector<double> values;
  std::size_t window = 50;

  auto* gen = app.add_subcommand("gen", "Generate the synthetic two-domain dataset");
  gen->add_option("-c,--config", config_path, "Experiment config");
  gen->add_option("-o,--out", out, "Output directory")->required();
  gen->add_flag("--force", force, "Write into a non-empty directory");

  auto* sty = app.add_subcommand("stylize", "Restyle one image with the colors of another");
  sty->add_option("--input", input, "Content PPM")->required();
  sty->add_option("--style", style, "Style PPM")->required();
  sty->add_option("--method", method, "fda, reinhard or jitter");
  sty->add_option("--beta", beta, "Low-frequency band for fda");
  sty->add_option("--seed", seed, "Jitter seed");
  sty->add_option("-o,--out", out, "Output PPM")->required();

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("-c,--config", config_path, "Experiment config")->required();
  train->add_option("-o,--out", out, "Output directory (overrides output_dir)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("-c,--config", config_path, "Experiment config (dataset)");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", split, "target_val or source_train");
  eval->add_option("-o,--out", out, "Report CSV (default stdout)");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation table");
  ablate->add_option("-c,--config", config_path, "Experiment config")->required();
  ablate->add_option("--study", study, "variants or invariance_point");
  ablate->add_option("--values", values, "lambda_s values for the invariance-point study")->delimiter(',');
  ablate->add_option("-o,--out", out, "Table CSV (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "Sweep one hyperparameter");
  sweep->add_option("-c,--config", config_path, "Experiment config")->required();
  sweep->add_option("--param", param, "lambda_s, lambda_t or beta")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
  sweep->add_option("-o,--out", out, "Table CSV (default stdout)");

  auto* curves = app.add_subcommand("export-curves", "Block-averaged loss curves from a metrics CSV");
  curves->add_option("--metrics", metrics_path, "Metrics CSV written by train")->required();
  curves->add_option("--window", window, "Iterations per block");
  curves->add_option("-o,--out", out, "Curve CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = load_config(config_path);
      const fs::path dir(out);
      if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        throw DataError(dir.string() + " is not empty (use --force to overwrite)");
      }
      ensure_dir(dir);
      write_dataset(dataset_manifest(cfg), dir);
    } else if (sty->parsed()) {
      StyleConfig sc;
      sc.method = parse_style_method(method);
      sc.beta = beta;
      sc.validate();
      write_ppm(out, stylize(read_ppm(input), read_ppm(style), sc, seed));
    } else if (train->parsed()) {
      auto cfg = load_config(config_path);
      if (!out.empty()) cfg.output_dir = out;
      const fs::path dir(cfg.output_dir);
      ensure_dir(dir);
      const auto data = open_dataset(cfg);
      const auto run = run_training(cfg.train, data, progress);
      write_text(dir / "config.txt", cfg.to_text());
      write_text(dir / "metrics.csv", metrics_csv(run.metrics));
      write_checkpoint(dir / "checkpoint.ckpt", checkpoint_records(run.state));
      const auto cm = evaluate(run.state.student, data, Split::target_val);
      std::vector<std::string> names;
      for (std::size_t c = 0; c < kNumClasses; ++c) names.emplace_back(class_name(c));
      write_text(dir / "eval_target_val.csv", eval_report_csv(cm, names));
      std::printf("target_val mIoU %.2f\n", 100.0 * run.miou);
    } else if (eval->parsed()) {
      const auto cfg = load_config(config_path);
      const auto state = train_state_from_records(read_checkpoint(checkpoint));
      const auto data = open_dataset(cfg);
      std::vector<std::string> names;
      for (std::size_t c = 0; c < kNumClasses; ++c) names.emplace_back(class_name(c));
      emit(out, eval_report_csv(evaluate(state.student, data, parse_split(split)), names));
    } else if (ablate->parsed()) {
      const auto cfg = load_config(config_path);
      std::vector<Cell> cells;
      if (study == "variants") {
        cells = ablation_cells(cfg);
      } else if (study == "invariance_point") {
        if (values.empty()) values = {cfg.train.loss.lambda_s};
        cells = invariance_point_cells(cfg, values);
      } else {
        throw ConfigError("unknown study '" + study + "' (variants, invariance_point)");
      }
      const auto data = open_dataset(cfg);
      emit(out, table_csv(summarize(run_table(cells, data))));
    } else if (sweep->parsed()) {
      const auto cfg = load_config(config_path);
      const auto cells = sweep_cells(cfg, param, values);
      const auto data = open_dataset(cfg);
      emit(out, table_csv(summarize(run_table(cells, data))));
    } else if (curves->parsed()) {
      emit(out, metrics_csv(block_means(parse_metrics_csv(read_text(metrics_path)), window)));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
