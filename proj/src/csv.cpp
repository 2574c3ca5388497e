#include "dynsur/csv.hpp"

#include "dynsur/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dynsur::csv {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
            cell.pop_back();
        }
        std::size_t lead = 0;
        while (lead < cell.size() && cell[lead] == ' ') {
            ++lead;
        }
        out.push_back(cell.substr(lead));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double parse_double(const std::string& s, const fs::path& path) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && s[0] == '+') {
        ++first;
    }
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        throw IoError("csv " + path.string() + ": cannot parse number '" + s + "'");
    }
    return v;
}

TimeGrid grid_from_times(const std::vector<double>& t, const fs::path& path) {
    if (t.size() < 2) {
        throw IoError("csv " + path.string() + ": need at least two rows");
    }
    const double dt = t[1] - t[0];
    if (!(dt > 0.0)) {
        throw IoError("csv " + path.string() + ": time column not increasing");
    }
    for (std::size_t k = 0; k < t.size(); ++k) {
        const double expected = t[0] + static_cast<double>(k) * dt;
        if (std::abs(t[k] - expected) > 1e-6 * dt + 1e-12 * std::abs(expected)) {
            throw IoError("csv " + path.string() + ": non-uniform time grid at row " + std::to_string(k));
        }
    }
    // Recover dt from the full span to avoid the rounding of a single difference.
    const double dt_span = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    return TimeGrid(t[0], dt_span, t.size());
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw IoError("csv: missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
}

Table read_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    Table table;
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("csv " + path.string() + ": empty file");
    }
    table.header = split_line(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        auto cells = split_line(line);
        if (cells.size() != table.header.size()) {
            throw IoError("csv " + path.string() + ": row width differs from header");
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

void write_table(const fs::path& path, const Table& table) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    auto write_row = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) {
                out << ',';
            }
            out << row[c];
        }
        out << '\n';
    };
    write_row(table.header);
    for (const auto& r : table.rows) {
        write_row(r);
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

void write_trajectory(const fs::path& path, const Trajectory& traj) {
    write_trajectories(path, {traj});
}

void write_trajectories(const fs::path& path, const std::vector<Trajectory>& trajs) {
    if (trajs.empty()) {
        throw DimensionError("write_trajectories: nothing to write");
    }
    const TimeGrid& g = trajs.front().grid();
    Table table;
    table.header.push_back("t");
    for (const auto& tr : trajs) {
        if (!(tr.grid() == g)) {
            throw DimensionError("write_trajectories: trajectories on different grids");
        }
        table.header.push_back(tr.label());
    }
    table.rows.reserve(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        std::vector<std::string> row;
        row.reserve(trajs.size() + 1);
        row.push_back(format_double(g.time(k)));
        for (const auto& tr : trajs) {
            row.push_back(format_double(tr[k]));
        }
        table.rows.push_back(std::move(row));
    }
    write_table(path, table);
}

std::vector<Trajectory> read_trajectories(const fs::path& path) {
    Table table = read_table(path);
    if (table.header.empty() || table.header.front() != "t") {
        throw IoError("csv " + path.string() + ": first column must be 't'");
    }
    std::vector<double> t;
    t.reserve(table.rows.size());
    for (const auto& r : table.rows) {
        t.push_back(parse_double(r[0], path));
    }
    const TimeGrid grid = grid_from_times(t, path);
    std::vector<Trajectory> out;
    for (std::size_t c = 1; c < table.header.size(); ++c) {
        std::vector<double> v;
        v.reserve(table.rows.size());
        for (const auto& r : table.rows) {
            v.push_back(parse_double(r[c], path));
        }
        out.emplace_back(grid, std::move(v), table.header[c]);
    }
    return out;
}

void write_scenario(const fs::path& path, const Scenario& scenario) {
    std::vector<Trajectory> all = scenario.excitations;
    for (const auto& [label, y] : scenario.responses) {
        all.push_back(y);
    }
    write_trajectories(path, all);
}

Scenario read_scenario(const fs::path& path, const std::set<std::string>& response_labels) {
    Scenario s;
    for (auto& tr : read_trajectories(path)) {
        if (response_labels.count(tr.label())) {
            std::string label = tr.label();
            s.responses.emplace(std::move(label), std::move(tr));
        } else {
            s.excitations.push_back(std::move(tr));
        }
    }
    return s;
}

std::vector<fs::path> list_csv(const fs::path& dir, const std::set<std::string>& skip) {
    if (!fs::is_directory(dir)) {
        throw IoError("not a directory: " + dir.string());
    }
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
            !skip.count(entry.path().filename().string())) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace dynsur::csv
