// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vaealign/errors.hpp"
#include "vaealign/evaluation.hpp"

namespace vaealign {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t grid_cell_seed(std::uint64_t base_seed, double m1, double m2) noexcept {
  // +0.0 and -0.0 must map to the same cell.
  const auto bits = [](double v) { return std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v); };
  return mix_seed(base_seed, bits(m1), bits(m2));
}

namespace {

std::string cell_name(double m1, double m2) {
  std::ostringstream os;
  os << "m1_" << m1 << "_m2_" << m2;
  return os.str();
}

struct ExternalRow {
  double m1, m2;
  MetricRecord record;
};

std::vector<ExternalRow> read_external(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open external metrics");
  std::vector<ExternalRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      rows.push_back({j.at("m1").get<double>(), j.at("m2").get<double>(), metric_record_from_json(j)});
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
  }
  return rows;
}

void put(std::ostream& os, std::optional<double> v) {
  if (v) os << *v;
}

}  // namespace

GridResult grid_search(std::span<const double> m1_list, std::span<const double> m2_list,
                       const TrainConfig& base_config, const Corpus& corpus, const GridOptions& options) {
  if (m1_list.empty() || m2_list.empty()) throw ValidationError("grid: margin lists must be non-empty");
  if (base_config.scheme != Scheme::jmas) throw ValidationError("grid: base config scheme must be jmas");
  std::vector<ExternalRow> external;
  if (options.external_metrics) external = read_external(*options.external_metrics);

  GridResult result;
  for (double m1 : m1_list) {
    for (double m2 : m2_list) {
      TrainConfig cfg = base_config;
      cfg.margins = Margins{m1, m2};
      cfg.seed = grid_cell_seed(base_config.seed, m1, m2);
      cfg.validate();

      GridCell cell;
      cell.m1 = m1;
      cell.m2 = m2;
      cell.seed = cfg.seed;
      {
        const Trainer fresh(cfg, corpus);
        cell.recon_initial = eval_recon(fresh.model(), corpus, cfg.recon);
      }
      TrainOptions topts;
      if (options.out_dir) topts.out_dir = *options.out_dir / cell_name(m1, m2);
      const TrainResult run = train(cfg, corpus, topts);
      cell.diverged = run.log.diverged;
      cell.diverged_step = run.log.diverged_step;
      if (!cell.diverged) {
        const AlignDistances d = distance_report(run.checkpoint, corpus);
        cell.d_mcos = d.d_mcos;
        cell.d_mdss = d.d_mdss;
        cell.recon_final = eval_recon(*run.checkpoint.model, corpus, cfg.recon);
        const double ratio = cell.recon_initial > 0.0 ? cell.recon_final / cell.recon_initial : 1.0;
        cell.recon_proxy = 1.0 - std::clamp(ratio, 0.0, 1.0);
        for (const auto& e : external) {
          if (e.m1 == m1 && e.m2 == m2) {
            cell.metrics = e.record;
            cell.scores = score_record(e.record);
          }
        }
      }
      if (options.on_cell) options.on_cell(cell);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

void GridResult::write_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.precision(17);
  out << "m1,m2,seed,diverged,d_mcos,d_mdss,recon_proxy,recon,under,1-wer,sim,gene,overall\n";
  for (const auto& c : cells) {
    out << c.m1 << ',' << c.m2 << ',' << c.seed << ',' << (c.diverged ? 1 : 0) << ',';
    if (!c.diverged) out << c.d_mcos << ',' << c.d_mdss << ',' << c.recon_proxy << ',';
    else out << ",,,";
    if (c.scores && c.metrics) {
      out << c.scores->x_r << ',' << c.scores->x_u << ',' << 1.0 - c.metrics->tts_wer / 100.0 << ','
          << c.metrics->tts_sim << ',' << c.scores->x_g << ',' << c.scores->overall;
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<fs::path> GridResult::write_heatmaps(const fs::path& dir) const {
  fs::create_directories(dir);
  using Getter = std::optional<double> (*)(const GridCell&);
  std::vector<std::pair<std::string, Getter>> quantities = {
      {"d_mcos", [](const GridCell& c) -> std::optional<double> { return c.d_mcos; }},
      {"d_mdss", [](const GridCell& c) -> std::optional<double> { return c.d_mdss; }},
      {"recon_proxy", [](const GridCell& c) -> std::optional<double> { return c.recon_proxy; }},
  };
  const bool scored = std::any_of(cells.begin(), cells.end(), [](const GridCell& c) { return c.scores.has_value(); });
  if (scored) {
    quantities.push_back({"recon", [](const GridCell& c) -> std::optional<double> {
                            return c.scores ? std::optional(c.scores->x_r) : std::nullopt;
                          }});
    quantities.push_back({"under", [](const GridCell& c) -> std::optional<double> {
                            return c.scores ? std::optional(c.scores->x_u) : std::nullopt;
                          }});
    quantities.push_back({"gene", [](const GridCell& c) -> std::optional<double> {
                            return c.scores ? std::optional(c.scores->x_g) : std::nullopt;
                          }});
    quantities.push_back({"overall", [](const GridCell& c) -> std::optional<double> {
                            return c.scores ? std::optional(c.scores->overall) : std::nullopt;
                          }});
  }
  std::vector<fs::path> written;
  for (const auto& [name, get] : quantities) {
    const fs::path path = dir / ("heatmap_" + name + ".csv");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out.precision(17);
    out << "m1,m2,value,diverged\n";
    for (const auto& c : cells) {
      out << c.m1 << ',' << c.m2 << ',';
      if (!c.diverged) put(out, get(c));
      out << ',' << (c.diverged ? 1 : 0) << '\n';
    }
    if (!out) throw IoError(path.string(), "write failed");
    written.push_back(path);
  }
  return written;
}

GridTable GridTable::read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open grid csv");
  GridTable t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty grid csv");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": column count mismatch");
    std::vector<std::optional<double>> row;
    for (const auto& c : cells) {
      if (c.empty()) {
        row.emplace_back();
        continue;
      }
      try {
        std::size_t used = 0;
        row.emplace_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": not a number: " + c);
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::optional<std::size_t> GridTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

PccReport pcc_report(const GridTable& grid) {
  const auto diverged = grid.column("diverged");
  auto live = [&](const std::vector<std::optional<double>>& row) {
    return !diverged || !row[*diverged] || *row[*diverged] == 0.0;
  };
  auto has_values = [&](std::size_t col) {
    return std::any_of(grid.rows.begin(), grid.rows.end(),
                       [&](const auto& r) { return live(r) && r[col].has_value(); });
  };

  PccReport report;
  for (const char* dist : {"d_mcos", "d_mdss"}) {
    const auto dcol = grid.column(dist);
    if (!dcol) throw ValidationError(std::string("grid csv lacks column ") + dist);
    report.distances.emplace_back(dist);
    std::vector<std::optional<double>> values;
    for (const char* target : PccReport::kTargets) {
      auto tcol = grid.column(target);
      if (std::string_view(target) == "recon" && (!tcol || !has_values(*tcol))) tcol = grid.column("recon_proxy");
      if (!tcol || !has_values(*tcol)) {
        values.emplace_back();
        continue;
      }
      std::vector<double> xs, ys;
      for (const auto& r : grid.rows) {
        if (!live(r) || !r[*dcol] || !r[*tcol]) continue;
        xs.push_back(*r[*dcol]);
        ys.push_back(*r[*tcol]);
      }
      try {
        values.emplace_back(pearson(xs, ys));
      } catch (const ValidationError& e) {
        throw ValidationError(std::string(dist) + " vs " + target + ": " + e.what());
      }
    }
    report.values.push_back(std::move(values));
  }
  return report;
}

void PccReport::write_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.precision(17);
  out << "distance";
  for (const char* t : kTargets) out << ',' << t;
  out << '\n';
  for (std::size_t i = 0; i < distances.size(); ++i) {
    out << distances[i];
    for (const auto& v : values[i]) {
      out << ',';
      put(out, v);
    }
    out << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace vaealign
