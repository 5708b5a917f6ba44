#ifndef GAMFIT_DATA_HPP
#define GAMFIT_DATA_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

namespace gamfit {

// One column of a data table. Factor columns store level indices in
// `values` and the level names in `levels` (sorted, unique).
struct Column {
  Eigen::VectorXd values;
  std::vector<std::string> levels;
  bool is_factor = false;
};

class DataTable {
 public:
  DataTable() = default;

  Eigen::Index rows() const { return n_; }
  bool has(const std::string& name) const;
  const Column& column(const std::string& name) const;  // throws data_error
  const Eigen::VectorXd& numeric(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }

  void add_numeric(const std::string& name, Eigen::VectorXd values);
  void add_factor(const std::string& name, const std::vector<std::string>& raw);

 private:
  std::vector<std::string> order_;
  std::vector<Column> columns_;
  Eigen::Index n_ = -1;
  void check_length(Eigen::Index len, const std::string& name);
};

// RFC-4180-style CSV with a mandatory header row. Columns where every
// cell parses as a double become numeric, anything else becomes a factor.
DataTable read_csv(const std::string& path);
DataTable read_csv(std::istream& in, const std::string& origin);
void write_csv(const std::string& path, const DataTable& table);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<Eigen::VectorXd>& columns);

}  // namespace gamfit

#endif
