#include "cml/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cml/errors.hpp"

namespace cml {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> trajectory_header(ModelFamily family) {
  const auto names = output_names(family);
  std::vector<std::string> h{"time"};
  if (load_dim(family) == 1) {
    h.insert(h.end(), {"load", "force", names[0], names[1], "tangent"});
  } else {
    h.insert(h.end(), {"load_s1", "load_s2", "load_n", "force_s1", "force_s2", "force_n",
                       names[0], names[1]});
    for (int i = 1; i <= 3; ++i) {
      for (int j = 1; j <= 3; ++j) h.push_back("tangent_" + std::to_string(i) + std::to_string(j));
    }
  }
  h.insert(h.end(), {"psi", "dissipation"});
  return h;
}

namespace {

void write_line(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k) out << ',';
    out << cells[k];
  }
  out << '\n';
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw IoFailure("line " + std::to_string(line_no) + ": '" + s + "' is not a number");
  }
  return v;
}

void save_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoFailure("write to '" + path.string() + "' failed");
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  write_line(out, trajectory_header(traj.family));
  const int n = traj.dim();
  std::vector<std::string> cells;
  for (const TrajectoryRecord& r : traj.records) {
    cells.clear();
    cells.push_back(format_double(r.time));
    for (int i = 0; i < n; ++i) cells.push_back(format_double(r.load[i]));
    for (int i = 0; i < n; ++i) cells.push_back(format_double(r.force[i]));
    cells.push_back(format_double(r.state.alpha));
    cells.push_back(format_double(r.state.xi));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) cells.push_back(format_double(r.tangent(i, j)));
    }
    cells.push_back(format_double(r.psi));
    cells.push_back(format_double(r.dissipation));
    write_line(out, cells);
  }
  if (!out) throw IoFailure("trajectory write failed");
}

void export_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
  std::ostringstream buf;
  write_trajectory_csv(traj, buf);
  save_text(path, buf.str());
}

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoFailure("trajectory file is empty");
  const auto header = split(line);
  Trajectory traj;
  bool matched = false;
  for (ModelFamily f : {ModelFamily::Plasticity, ModelFamily::Damage, ModelFamily::Cz3d}) {
    if (header == trajectory_header(f)) {
      traj.family = f;
      matched = true;
      break;
    }
  }
  if (!matched) throw IoFailure("unrecognized trajectory header '" + line + "'");
  const int n = traj.dim();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw IoFailure("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(header.size()));
    }
    std::size_t c = 0;
    const auto next = [&] { return parse_cell(cells[c++], line_no); };
    TrajectoryRecord r;
    r.time = next();
    for (int i = 0; i < n; ++i) r.load[i] = next();
    for (int i = 0; i < n; ++i) r.force[i] = next();
    r.state.alpha = next();
    r.state.xi = next();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) r.tangent(i, j) = next();
    }
    r.psi = next();
    r.dissipation = next();
    traj.records.push_back(r);
  }
  return traj;
}

Trajectory import_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open '" + path.string() + "'");
  return read_trajectory_csv(in);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) {
    throw InvalidArgument("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(header_.size()));
  }
  rows_.push_back(cells);
  return *this;
}

CsvTable& CsvTable::row(const std::vector<double>& cells) {
  std::vector<std::string> text;
  text.reserve(cells.size());
  for (double v : cells) text.push_back(format_double(v));
  return row(text);
}

void CsvTable::write(std::ostream& out) const {
  write_line(out, header_);
  for (const auto& r : rows_) write_line(out, r);
}

void CsvTable::save(const std::filesystem::path& path) const {
  std::ostringstream buf;
  write(buf);
  save_text(path, buf.str());
}

CsvTable loss_history_table(const std::vector<LossReport>& history) {
  CsvTable t({"epoch", "total", "ue", "ux", "ev", "yl", "ke", "ky"});
  for (const LossReport& r : history) {
    const LossTerms& x = r.terms;
    t.row(std::vector<double>{static_cast<double>(r.epoch), r.total, x.ue, x.ux, x.ev, x.yl, x.ke,
                              x.ky});
  }
  return t;
}

CsvTable error_table(const ErrorStats& stats, const Trajectory& ref) {
  CsvTable t({"index", "time", "error_pct"});
  for (std::size_t k = 0; k < stats.errors_pct.size(); ++k) {
    const std::size_t i = stats.indices[k];
    t.row(std::vector<double>{static_cast<double>(i), ref.records.at(i).time, stats.errors_pct[k]});
  }
  return t;
}

CsvTable collocation_table(const CollocationSet& set) {
  std::vector<std::string> header;
  if (set.family == ModelFamily::Cz3d) {
    header = {"g_s1", "g_s2", "g_n"};
  } else {
    header = {set.family == ModelFamily::Plasticity ? "eps" : "g"};
  }
  const auto names = output_names(set.family);
  header.push_back(names[0] + "_prev");
  header.push_back(names[1] + "_prev");
  if (set.labels) {
    header.push_back(names[0] + "_next");
    header.push_back(names[1] + "_next");
  }
  CsvTable t(header);
  std::vector<double> cells(header.size());
  for (Eigen::Index c = 0; c < set.size(); ++c) {
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < set.inputs.rows(); ++r) cells[static_cast<std::size_t>(k++)] = set.inputs(r, c);
    if (set.labels) {
      for (Eigen::Index r = 0; r < 2; ++r) cells[static_cast<std::size_t>(k++)] = (*set.labels)(r, c);
    }
    t.row(cells);
  }
  return t;
}

}  // namespace cml
