#include "qontot/matrix_io.h"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qontot/errors.h"

namespace qontot {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

Matrix read_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      auto first = cell.data();
      auto last = cell.data() + cell.size();
      while (first < last && *first == ' ') ++first;
      auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last) {
        throw ValidationError("read_csv: cannot parse '" + cell + "' as a number");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      std::ostringstream os;
      os << "read_csv: ragged row " << rows.size() << " (" << row.size() << " columns, expected "
         << rows.front().size() << ")";
      throw ValidationError(os.str());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("read_csv: no rows");
  Matrix m(rows.size(), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("matrix JSON must be a non-empty array");
  const size_t cols = j.front().is_array() ? j.front().size() : 0;
  Matrix m(j.size(), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    const auto& row = j[i];
    if (!row.is_array() || row.size() != cols) {
      std::ostringstream os;
      os << "matrix JSON: ragged row " << i;
      throw ValidationError(os.str());
    }
    for (size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw ValidationError("matrix JSON: non-numeric entry");
      m(i, c) = row[c].get<double>();
    }
  }
  return m;
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ValidationError("vector JSON must be an array");
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError("vector JSON: non-numeric entry");
    v[i] = j[i].get<double>();
  }
  return v;
}

}  // namespace qontot
