#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cml/pathlab.hpp"
#include "cml/pinn.hpp"

namespace cml {

/// Shortest text that parses back to the same double ("%.17g").
std::string format_double(double v);

/// Column names of a trajectory file:
///   1D: time,load,force,<state>,<xi>,tangent,psi,dissipation
///   3D: time,load_s1,load_s2,load_n,force_s1,force_s2,force_n,d,xi_d,
///       tangent_11 ... tangent_33 (row-major),psi,dissipation
std::vector<std::string> trajectory_header(ModelFamily family);

/// Throws IoFailure.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);
void export_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);

/// Inverse of export_trajectory_csv; the family is recovered from the header
/// and the backend name is left empty. Throws IoFailure on a malformed file.
Trajectory read_trajectory_csv(std::istream& in);
Trajectory import_trajectory_csv(const std::filesystem::path& path);

/// Small table writer used for every other CSV artifact.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row(const std::vector<std::string>& cells);
  CsvTable& row(const std::vector<double>& cells);

  void write(std::ostream& out) const;
  /// Throws IoFailure.
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// epoch,total,ue,ux,ev,yl,ke,ky
CsvTable loss_history_table(const std::vector<LossReport>& history);
/// index,time,error_pct
CsvTable error_table(const ErrorStats& stats, const Trajectory& ref);
/// One column per network input, then the labels when present.
CsvTable collocation_table(const CollocationSet& set);

}  // namespace cml
