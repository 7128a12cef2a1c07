#include "marl/trace.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "marl/errors.hpp"

namespace marl {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int TrainingTrace::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<double> TrainingTrace::column(const std::string& name) const {
  const int idx = column_index(name);
  if (idx < 0) throw ConfigError("trace has no column named " + name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[idx]);
  return out;
}

void TrainingTrace::write_csv(std::ostream& os) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) os << ',';
    os << columns[i];
  }
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      os << format_double(row[i]);
    }
    os << '\n';
  }
}

void TrainingTrace::write_csv_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open trace file for writing: " + path);
  write_csv(os);
}

TrainingTrace TrainingTrace::read_csv(std::istream& is) {
  TrainingTrace trace;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty trace file");
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) trace.columns.push_back(cell);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != trace.columns.size())
      throw ConfigError("trace row width mismatch");
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

TrainingTrace TrainingTrace::read_csv_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open trace file: " + path);
  return read_csv(is);
}

}  // namespace marl
