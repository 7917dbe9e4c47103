#pragma once

#include <string>
#include <vector>

namespace latsep::acceptance {

/// Collects criterion outcomes and prints one line per criterion.
class Checklist {
 public:
  explicit Checklist(std::string suite) : suite_(std::move(suite)) {}

  /// Records a sub-check of `criterion`; the detail is printed with the criterion line.
  void expect(const std::string& criterion, bool ok, const std::string& detail);
  void not_run(const std::string& criterion, const std::string& reason);

  /// Prints the summary lines. Returns 0 when every run criterion passed.
  int finish() const;
  bool all_not_run() const;

 private:
  struct Item {
    std::string criterion;
    bool ok = true;
    bool run = true;
    std::vector<std::string> details;
  };
  Item& item(const std::string& criterion);

  std::string suite_;
  std::vector<Item> items_;
};

std::string fmt(double v, int precision = 4);

}  // namespace latsep::acceptance
