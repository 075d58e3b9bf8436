#include "poquim/cli_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace poquim::cli {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

double parse_number(const CsvTable& table, std::size_t row, int col) {
  const std::string& cell = table.rows[row][col];
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0' || errno == ERANGE ||
      !std::isfinite(v)) {
    throw DataError(table.path + ": row " + std::to_string(row + 2) +
                    ", column '" + table.columns[col] +
                    "': not a finite number: '" + cell + "'");
  }
  return v;
}

}  // namespace

CsvTable CsvTable::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");
  CsvTable table;
  table.path = path;
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw DataError(path + ": empty data file (missing header row)");
  }
  table.columns = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != table.columns.size()) {
      throw DataError(path + ": row " + std::to_string(lineno) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(table.columns.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.rows.empty()) {
    throw DataError(path + ": no data rows");
  }
  return table;
}

int CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  throw DataError(path + ": missing column '" + name + "'");
}

ModelSpec build_model_from_csv(const CsvTable& table, const std::string& response,
                               const FixedSpec& fixed,
                               const std::vector<RandomTermSpec>& random_terms) {
  const int N = static_cast<int>(table.rows.size());
  ModelSpec model;
  model.y.resize(N);
  const int ycol = table.column_index(response);
  for (int i = 0; i < N; ++i) model.y[i] = parse_number(table, i, ycol);

  const int p = (fixed.intercept ? 1 : 0) + static_cast<int>(fixed.covariates.size());
  if (p == 0) {
    throw ConfigError("model: need an intercept or at least one covariate");
  }
  model.X.resize(N, p);
  int col = 0;
  if (fixed.intercept) {
    model.X.col(col).setOnes();
    model.fixed_names.push_back("(intercept)");
    ++col;
  }
  for (const auto& name : fixed.covariates) {
    const int c = table.column_index(name);
    for (int i = 0; i < N; ++i) model.X(i, col) = parse_number(table, i, c);
    model.fixed_names.push_back(name);
    ++col;
  }

  for (const auto& term : random_terms) {
    const int fcol = table.column_index(term.factor);
    // Levels ordered by first appearance.
    std::vector<std::string> levels;
    std::map<std::string, int> level_of;
    std::vector<int> level_idx(N);
    for (int i = 0; i < N; ++i) {
      const std::string& lab = table.rows[i][fcol];
      auto it = level_of.find(lab);
      if (it == level_of.end()) {
        it = level_of.emplace(lab, static_cast<int>(levels.size())).first;
        levels.push_back(lab);
      }
      level_idx[i] = it->second;
    }
    MatrixXd Z = MatrixXd::Zero(N, static_cast<int>(levels.size()));
    const bool weighted = !term.weight.empty();
    int wcol = -1;
    if (weighted) wcol = table.column_index(term.weight);
    for (int i = 0; i < N; ++i) {
      Z(i, level_idx[i]) = weighted ? parse_number(table, i, wcol) : 1.0;
    }
    model.Z.push_back(std::move(Z));
    model.random_names.push_back(weighted ? term.factor + ":" + term.weight
                                          : term.factor);
    model.allow_zero_rows.push_back(weighted);
  }
  return model;
}

// --- Json --------------------------------------------------------------------

Json Json::boolean(bool b) {
  Json j;
  j.type_ = Type::boolean;
  j.bool_ = b;
  return j;
}
Json Json::integer(std::int64_t v) {
  Json j;
  j.type_ = Type::integer;
  j.int_ = v;
  return j;
}
Json Json::real(double v) {
  Json j;
  j.type_ = Type::real;
  j.real_ = v;
  return j;
}
Json Json::str(std::string s) {
  Json j;
  j.type_ = Type::string;
  j.str_ = std::move(s);
  return j;
}
Json Json::array() {
  Json j;
  j.type_ = Type::array;
  return j;
}
Json Json::object() {
  Json j;
  j.type_ = Type::object;
  return j;
}

void Json::push_back(Json v) {
  if (type_ != Type::array) throw std::logic_error("Json: push_back on non-array");
  arr_.push_back(std::move(v));
}

Json& Json::operator[](const std::string& key) {
  if (type_ == Type::null) type_ = Type::object;
  if (type_ != Type::object) throw std::logic_error("Json: key on non-object");
  for (auto& [k, v] : obj_) {
    if (k == key) return v;
  }
  obj_.emplace_back(key, Json());
  return obj_.back().second;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "null";
  if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {
void escape_into(const std::string& s, std::string& out) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}
}  // namespace

void Json::dump(std::string& out, int indent) const {
  const std::string pad(indent, ' ');
  switch (type_) {
    case Type::null: out += "null"; break;
    case Type::boolean: out += bool_ ? "true" : "false"; break;
    case Type::integer: out += std::to_string(int_); break;
    case Type::real: out += format_real(real_); break;
    case Type::string: escape_into(str_, out); break;
    case Type::array: {
      if (arr_.empty()) {
        out += "[]";
        break;
      }
      out += "[";
      for (std::size_t i = 0; i < arr_.size(); ++i) {
        if (i) out += ",";
        out += "\n" + pad + "  ";
        arr_[i].dump(out, indent + 2);
      }
      out += "\n" + pad + "]";
      break;
    }
    case Type::object: {
      if (obj_.empty()) {
        out += "{}";
        break;
      }
      out += "{";
      for (std::size_t i = 0; i < obj_.size(); ++i) {
        if (i) out += ",";
        out += "\n" + pad + "  ";
        escape_into(obj_[i].first, out);
        out += ": ";
        obj_[i].second.dump(out, indent + 2);
      }
      out += "\n" + pad + "}";
      break;
    }
  }
}

std::string Json::dump() const {
  std::string out;
  dump(out, 0);
  out += "\n";
  return out;
}

Json Json::from_vector(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(Json::real(v[i]));
  return arr;
}

Json Json::from_matrix(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(Json::real(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << content;
  if (!out) throw DataError(path + ": write failed");
}

}  // namespace poquim::cli
