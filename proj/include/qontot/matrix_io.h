#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"
#include "qontot/mathcore.h"

namespace qontot {

/// Row-major CSV, no header, 17 significant digits so values round-trip.
void write_csv(std::ostream& out, const Matrix& m);
Matrix read_csv(std::istream& in);

nlohmann::json matrix_to_json(const Matrix& m);
/// Accepts an array of equally long numeric arrays.
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace qontot
