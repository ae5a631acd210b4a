#include "milg/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "milg/error.hpp"

namespace milg {

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw UserError("CSV has no column '" + name + "'");
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header) {
  std::ifstream is(path);
  if (!is) throw UserError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw UserError(path.string() + ": empty file");
  t.header = split_fields(line);
  if (!expected_header.empty() && t.header != expected_header) {
    std::string want;
    for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
    throw UserError(path.string() + ": expected header '" + want + "'");
  }
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    if (fields.size() != t.header.size())
      throw UserError(path.string() + ": row has " + std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw UserError("cannot write " + path.string());
  auto emit = [&os](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << fields[i];
    os << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
}

long parse_long(const std::string& field, const std::string& what) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw UserError("invalid integer '" + field + "' for " + what);
  return v;
}

double parse_double(const std::string& field, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw UserError("invalid number '" + field + "' for " + what);
  }
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace milg
