#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace kattn {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 2PR / (P + R), or 0 when P + R is 0.
double f1_score(double precision, double recall);

/// Micro-averaged scores with the negative class excluded from both the
/// numerator and the denominators. Zero denominators yield 0.
PRF micro_prf(std::span<const std::size_t> gold, std::span<const std::size_t> pred,
              std::size_t negative);
PRF micro_prf(std::span<const std::string> gold, std::span<const std::string> pred,
              const std::string& negative);

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/// Per-class true/false positives and false negatives, indexed by class id.
std::vector<ClassCounts> class_counts(std::span<const std::size_t> gold,
                                      std::span<const std::size_t> pred,
                                      std::size_t num_classes);

/// Mean per-class F1 over every class except `negative`.
double macro_f1(std::span<const std::size_t> gold, std::span<const std::size_t> pred,
                std::size_t num_classes, std::size_t negative);

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double macro_f1 = 0.0;
  std::map<std::string, ClassCounts> per_class;
  /// Dev F1 after every epoch of the run that produced the report.
  std::vector<double> history;

  /// {"precision", "recall", "f1", "macro_f1", "per_class", "history"}.
  std::string to_json() const;
};

MetricsReport make_report(std::span<const std::size_t> gold, std::span<const std::size_t> pred,
                          std::span<const std::string> labels, std::size_t negative);

}  // namespace kattn
