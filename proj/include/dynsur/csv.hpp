#pragma once

#include "dynsur/signal.hpp"

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace dynsur::csv {

/// Shortest round-trip decimal representation.
std::string format_double(double v);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};

Table read_table(const std::filesystem::path& path);
void write_table(const std::filesystem::path& path, const Table& table);

/// Header `t,<label>`, one row per step.
void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);

/// Header `t,<label1>,<label2>,...`; all trajectories must share one grid.
void write_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajs);

/// Reads every non-time column as a trajectory on the grid recovered from `t`.
std::vector<Trajectory> read_trajectories(const std::filesystem::path& path);

/// Scenario CSV: `t,x1,...,xM,y1,...`. Static parameters are not stored in the CSV.
void write_scenario(const std::filesystem::path& path, const Scenario& scenario);

/// Columns listed in `response_labels` become responses; everything else is an excitation.
Scenario read_scenario(const std::filesystem::path& path, const std::set<std::string>& response_labels);

/// Sorted list of *.csv files in a directory, excluding names in `skip`.
std::vector<std::filesystem::path> list_csv(const std::filesystem::path& dir,
                                            const std::set<std::string>& skip = {});

}  // namespace dynsur::csv
