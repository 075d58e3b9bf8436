#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "poquim/model.hpp"

namespace poquim::cli {

/// Data-file problem (missing column, unparsable cell); exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Configuration problem (bad JSON, invalid model spec); exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::string path;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::string& path);
  int column_index(const std::string& name) const;  // throws DataError
};

struct RandomTermSpec {
  std::string factor;
  std::string weight;  // optional numeric column for slope loadings
};

struct FixedSpec {
  bool intercept = true;
  std::vector<std::string> covariates;
};

/// Factor columns expand to 0/1 indicators ordered by first appearance;
/// a weight column multiplies the indicator entries (slope terms).
ModelSpec build_model_from_csv(const CsvTable& table, const std::string& response,
                               const FixedSpec& fixed,
                               const std::vector<RandomTermSpec>& random_terms);

// --- deterministic JSON ------------------------------------------------------

/// Report tree serialized with insertion-ordered keys and 17 significant
/// digits for doubles, so identical runs produce byte-identical files.
class Json {
 public:
  enum class Type { null, boolean, integer, real, string, array, object };

  Json() : type_(Type::null) {}
  static Json boolean(bool b);
  static Json integer(std::int64_t v);
  static Json real(double v);
  static Json str(std::string s);
  static Json array();
  static Json object();

  Type type() const { return type_; }
  void push_back(Json v);              // array
  Json& operator[](const std::string& key);  // object, insertion order
  void dump(std::string& out, int indent = 0) const;
  std::string dump() const;

  // Convenience builders.
  static Json from_vector(const Eigen::VectorXd& v);
  static Json from_matrix(const Eigen::MatrixXd& m);

 private:
  Type type_;
  bool bool_ = false;
  std::int64_t int_ = 0;
  double real_ = 0.0;
  std::string str_;
  std::vector<Json> arr_;
  std::vector<std::pair<std::string, Json>> obj_;
};

std::string format_real(double v);  // %.17g

void write_file(const std::string& path, const std::string& content);

}  // namespace poquim::cli
