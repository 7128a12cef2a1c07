#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace marl {

// Columnar training log. Column layout is fixed per run kind:
//   t, J_hat, mu_1..mu_K, omega_{k}_{d}..., theta_{i}_{d}...
// plus v_{k}_{d} / rho_{k}_{d} for the V variant and selected_mask for
// active runs. Floats serialize with 17 significant digits so a parse ->
// serialize round trip is byte-stable.
struct TrainingTrace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column_index(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;

  void write_csv(std::ostream& os) const;
  void write_csv_file(const std::string& path) const;
  static TrainingTrace read_csv(std::istream& is);
  static TrainingTrace read_csv_file(const std::string& path);

  bool operator==(const TrainingTrace& other) const = default;
};

// Shortest-round-trip-safe float formatting (17 significant digits).
std::string format_double(double v);

}  // namespace marl
