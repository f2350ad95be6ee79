#include "ciss/experiment.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace ciss {
namespace {

// Shortest text that reads back to the same double.
std::string fmt_value(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

Cell make_cell(const ExperimentConfig& cfg, std::string row, std::string value, std::size_t k) {
  Cell c{std::move(row), std::move(value), cell_seed(cfg, k), cfg.train};
  c.train.master_seed = c.seed;
  return c;
}

}  // namespace

Manifest dataset_manifest(const ExperimentConfig& cfg) {
  return build_splits(cfg.dataset_seed, cfg.n_source_train, cfg.n_target_train, cfg.n_target_val);
}

Dataset open_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset_dir.empty()) return Dataset::load(cfg.dataset_dir);
  return Dataset::generate(dataset_manifest(cfg));
}

ConfusionMatrix evaluate(const SegNetParams<float>& params, const Dataset& data, Split split) {
  ConfusionMatrix cm(params.classes());
  const std::size_t n = data.size(split);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& truth = data.labels(split, i);
    cm.update(predict(params, data.image(split, i)), truth);
  }
  return cm;
}

RunResult run_training(const TrainConfig& cfg, const Dataset& data, const ProgressFn& progress) {
  cfg.validate();
  RunResult r{{}, init_train_state<float>(cfg.master_seed), 0.0};
  r.metrics.reserve(cfg.iterations);
  for (std::size_t i = 0; i < cfg.iterations; ++i) {
    r.metrics.push_back(train_step(r.state, data, cfg));
    if (progress) progress(r.metrics.back());
  }
  r.miou = miou(evaluate(r.state.student, data, Split::target_val));
  return r;
}

std::size_t thread_count() {
  if (const char* env = std::getenv("CISS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError("CISS_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<CellResult> run_cells(const std::vector<Cell>& cells, const Dataset& data, std::size_t threads,
                                  const std::function<void(const CellResult&)>& done) {
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        auto run = run_training(cells[i].train, data);
        results[i] = CellResult{cells[i], run.miou, std::move(run.metrics)};
        if (done) {
          std::lock_guard lock(mu);
          done(results[i]);
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next = cells.size();
        return;
      }
    }
  };

  const std::size_t n = std::max<std::size_t>(1, std::min(threads, cells.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

std::uint64_t cell_seed(const ExperimentConfig& cfg, std::size_t k) { return cfg.train.master_seed + k; }

std::vector<Cell> ablation_cells(const ExperimentConfig& cfg) {
  struct Row {
    const char* name;
    LossVariant variant;
    bool src, tgt;
  };
  const Row rows[] = {{"basic", LossVariant::basic, false, false},     {"fda", LossVariant::fda, false, false},
                      {"ce_full", LossVariant::ce_full, false, false}, {"ciss_source", LossVariant::ciss, true, false},
                      {"ciss_target", LossVariant::ciss, false, true}, {"ciss", LossVariant::ciss, true, true}};
  std::vector<Cell> cells;
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < cfg.seeds; ++k) {
      auto c = make_cell(cfg, row.name, "", k);
      c.train.loss.variant = row.variant;
      if (row.variant == LossVariant::ciss) {
        if (!row.src) c.train.loss.lambda_s = 0.0;
        if (!row.tgt) c.train.loss.lambda_t = 0.0;
      }
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

std::vector<Cell> sweep_cells(const ExperimentConfig& cfg, const std::string& param, const std::vector<double>& values) {
  if (param != "lambda_s" && param != "lambda_t" && param != "beta") {
    throw ConfigError("sweep parameter must be lambda_s, lambda_t or beta, got '" + param + "'");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<Cell> cells;
  for (double v : values) {
    for (std::size_t k = 0; k < cfg.seeds; ++k) {
      auto c = make_cell(cfg, param, fmt_value(v), k);
      if (param == "lambda_s") c.train.loss.lambda_s = v;
      if (param == "lambda_t") c.train.loss.lambda_t = v;
      if (param == "beta") c.train.loss.style.beta = v;
      c.train.validate();
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

std::vector<Cell> invariance_point_cells(const ExperimentConfig& cfg, const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw ConfigError("invariance-point study needs at least one lambda_s value");
  std::vector<Cell> cells;
  for (auto point : {InvariancePoint::encoder, InvariancePoint::output}) {
    for (double v : lambdas) {
      for (std::size_t k = 0; k < cfg.seeds; ++k) {
        auto c = make_cell(cfg, to_string(point), fmt_value(v), k);
        c.train.loss.variant = LossVariant::ciss;
        c.train.loss.invariance_point = point;
        c.train.loss.lambda_s = v;
        c.train.loss.lambda_t = 0.0;
        c.train.validate();
        cells.push_back(std::move(c));
      }
    }
  }
  return cells;
}

std::vector<TableEntry> summarize(const std::vector<CellResult>& results) {
  std::vector<TableEntry> out;
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : results) {
    const double pct = 100.0 * r.miou;
    out.push_back({r.cell.row, r.cell.value, std::to_string(r.cell.seed), pct, 0.0});
    const auto key = std::make_pair(r.cell.row, r.cell.value);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(pct);
  }
  for (const auto& key : order) {
    const auto& v = groups[key];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    out.push_back({key.first, key.second, "", mean, sd});
  }
  return out;
}

std::string table_csv(const std::vector<TableEntry>& entries) {
  std::string out = std::string(kTableHeader) + "\n";
  char buf[128];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", e.miou, e.miou_std);
    out += e.row + "," + e.value + "," + e.seed + "," + buf + "\n";
  }
  return out;
}

std::vector<TableEntry> parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTableHeader) throw DataError("table CSV: unexpected header");
  std::vector<TableEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (;;) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 5) throw DataError("table CSV: expected 5 fields in '" + line + "'");
    try {
      out.push_back({f[0], f[1], f[2], std::stod(f[3]), std::stod(f[4])});
    } catch (const std::logic_error&) {
      throw DataError("table CSV: malformed number in '" + line + "'");
    }
  }
  return out;
}

std::vector<MetricsRow> block_means(const std::vector<MetricsRow>& rows, std::size_t window) {
  if (window == 0) throw ConfigError("window must be >= 1");
  std::vector<MetricsRow> out;
  for (std::size_t b = 0; b < rows.size(); b += window) {
    const std::size_t e = std::min(rows.size(), b + window);
    MetricsRow m;
    for (std::size_t i = b; i < e; ++i) {
      m.loss_total += rows[i].loss_total;
      m.loss_ce_src += rows[i].loss_ce_src;
      m.loss_ce_tgt += rows[i].loss_ce_tgt;
      m.loss_inv_src += rows[i].loss_inv_src;
      m.loss_inv_tgt += rows[i].loss_inv_tgt;
      m.q_weight += rows[i].q_weight;
      m.lr += rows[i].lr;
    }
    const double k = static_cast<double>(e - b);
    m.iter = rows[e - 1].iter;
    m.loss_total /= k;
    m.loss_ce_src /= k;
    m.loss_ce_tgt /= k;
    m.loss_inv_src /= k;
    m.loss_inv_tgt /= k;
    m.q_weight /= k;
    m.lr /= k;
    out.push_back(m);
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace ciss
