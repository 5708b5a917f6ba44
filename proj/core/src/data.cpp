#include "gamfit/data.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "gamfit/errors.hpp"

namespace gamfit {

bool DataTable::has(const std::string& name) const {
  return std::find(order_.begin(), order_.end(), name) != order_.end();
}

const Column& DataTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < order_.size(); ++i) {
    if (order_[i] == name) return columns_[i];
  }
  throw data_error("column not found: " + name);
}

const Eigen::VectorXd& DataTable::numeric(const std::string& name) const {
  const Column& col = column(name);
  if (col.is_factor) throw data_error("column is not numeric: " + name);
  return col.values;
}

void DataTable::check_length(Eigen::Index len, const std::string& name) {
  if (n_ < 0) {
    n_ = len;
  } else if (len != n_) {
    throw data_error("column length mismatch for " + name);
  }
  if (has(name)) throw data_error("duplicate column: " + name);
}

void DataTable::add_numeric(const std::string& name, Eigen::VectorXd values) {
  check_length(values.size(), name);
  order_.push_back(name);
  Column col;
  col.values = std::move(values);
  columns_.push_back(std::move(col));
}

void DataTable::add_factor(const std::string& name, const std::vector<std::string>& raw) {
  check_length(static_cast<Eigen::Index>(raw.size()), name);
  Column col;
  col.is_factor = true;
  col.levels.assign(raw.begin(), raw.end());
  std::sort(col.levels.begin(), col.levels.end());
  col.levels.erase(std::unique(col.levels.begin(), col.levels.end()), col.levels.end());
  col.values.resize(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto it = std::lower_bound(col.levels.begin(), col.levels.end(), raw[i]);
    col.values[static_cast<Eigen::Index>(i)] = static_cast<double>(it - col.levels.begin());
  }
  order_.push_back(name);
  columns_.push_back(std::move(col));
}

namespace {

// Splits one CSV record; handles quoted fields and embedded quotes.
// Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    const char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch == '\r') {
      // swallow; newline handling below
    } else if (ch == '\n') {
      fields.push_back(field);
      return true;
    } else {
      field.push_back(ch);
    }
  }
  if (!any) return false;
  fields.push_back(field);
  return true;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\n\r") != std::string::npos;
}

void write_field(std::ostream& out, const std::string& s) {
  if (!needs_quoting(s)) {
    out << s;
    return;
  }
  out << '"';
  for (char ch : s) {
    if (ch == '"') out << '"';
    out << ch;
  }
  out << '"';
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

DataTable read_csv(std::istream& in, const std::string& origin) {
  std::vector<std::string> header;
  if (!read_record(in, header) || header.empty()) {
    throw data_error(origin + ": missing header row");
  }
  std::vector<std::vector<std::string>> raw(header.size());
  std::vector<std::string> fields;
  std::size_t row = 1;
  while (read_record(in, fields)) {
    ++row;
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
    if (fields.size() != header.size()) {
      throw data_error(origin + ": row " + std::to_string(row) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) raw[j].push_back(fields[j]);
  }
  if (raw[0].empty()) throw data_error(origin + ": no data rows");

  DataTable table;
  for (std::size_t j = 0; j < header.size(); ++j) {
    Eigen::VectorXd values(static_cast<Eigen::Index>(raw[j].size()));
    bool numeric = true;
    for (std::size_t i = 0; i < raw[j].size(); ++i) {
      double v;
      if (!parse_double(raw[j][i], v)) {
        numeric = false;
        break;
      }
      values[static_cast<Eigen::Index>(i)] = v;
    }
    if (numeric) {
      table.add_numeric(header[j], std::move(values));
    } else {
      table.add_factor(header[j], raw[j]);
    }
  }
  return table;
}

DataTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  return read_csv(in, path);
}

void write_csv(const std::string& path, const DataTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path);
  const auto& names = table.names();
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (j) out << ',';
    write_field(out, names[j]);
  }
  out << '\n';
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (j) out << ',';
      const Column& col = table.column(names[j]);
      if (col.is_factor) {
        write_field(out, col.levels[static_cast<std::size_t>(col.values[i])]);
      } else {
        out << format_double(col.values[i]);
      }
    }
    out << '\n';
  }
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<Eigen::VectorXd>& columns) {
  if (header.size() != columns.size()) throw data_error("csv header/column count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    write_field(out, header[j]);
  }
  out << '\n';
  const Eigen::Index n = columns.empty() ? 0 : columns[0].size();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (j) out << ',';
      out << format_double(columns[j][i]);
    }
    out << '\n';
  }
}

}  // namespace gamfit
