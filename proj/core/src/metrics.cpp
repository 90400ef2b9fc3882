#include "kattn/metrics.hpp"

#include <nlohmann/json.hpp>

#include "kattn/errors.hpp"

namespace kattn {

namespace {

void check_lengths(std::size_t gold, std::size_t pred) {
  if (gold != pred) {
    throw DataError("metrics: " + std::to_string(gold) + " gold labels but " +
                    std::to_string(pred) + " predictions");
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

PRF micro_prf(std::span<const std::size_t> gold, std::span<const std::size_t> pred,
              std::size_t negative) {
  check_lengths(gold.size(), pred.size());
  std::size_t correct = 0;
  std::size_t guessed = 0;
  std::size_t actual = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i] != negative) ++guessed;
    if (gold[i] != negative) ++actual;
    if (gold[i] == pred[i] && gold[i] != negative) ++correct;
  }
  PRF out;
  out.precision = ratio(correct, guessed);
  out.recall = ratio(correct, actual);
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

PRF micro_prf(std::span<const std::string> gold, std::span<const std::string> pred,
              const std::string& negative) {
  check_lengths(gold.size(), pred.size());
  std::map<std::string, std::size_t> ids{{negative, 0}};
  auto id = [&](const std::string& s) { return ids.emplace(s, ids.size()).first->second; };
  std::vector<std::size_t> g;
  std::vector<std::size_t> p;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    g.push_back(id(gold[i]));
    p.push_back(id(pred[i]));
  }
  return micro_prf(g, p, 0);
}

std::vector<ClassCounts> class_counts(std::span<const std::size_t> gold,
                                      std::span<const std::size_t> pred,
                                      std::size_t num_classes) {
  check_lengths(gold.size(), pred.size());
  std::vector<ClassCounts> counts(num_classes);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= num_classes || pred[i] >= num_classes) {
      throw LabelError("metrics: class id out of range [0, " + std::to_string(num_classes) + ")");
    }
    if (gold[i] == pred[i]) {
      ++counts[gold[i]].tp;
    } else {
      ++counts[pred[i]].fp;
      ++counts[gold[i]].fn;
    }
  }
  return counts;
}

double macro_f1(std::span<const std::size_t> gold, std::span<const std::size_t> pred,
                std::size_t num_classes, std::size_t negative) {
  const auto counts = class_counts(gold, pred, num_classes);
  double total = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (c == negative) continue;
    const ClassCounts& k = counts[c];
    total += f1_score(ratio(k.tp, k.tp + k.fp), ratio(k.tp, k.tp + k.fn));
    ++classes;
  }
  return classes == 0 ? 0.0 : total / static_cast<double>(classes);
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["macro_f1"] = macro_f1;
  j["per_class"] = nlohmann::ordered_json::object();
  for (const auto& [label, k] : per_class) {
    const double p = ratio(k.tp, k.tp + k.fp);
    const double r = ratio(k.tp, k.tp + k.fn);
    j["per_class"][label] = {{"tp", k.tp}, {"fp", k.fp}, {"fn", k.fn},
                             {"precision", p}, {"recall", r}, {"f1", f1_score(p, r)}};
  }
  j["history"] = history;
  return j.dump(2);
}

MetricsReport make_report(std::span<const std::size_t> gold, std::span<const std::size_t> pred,
                          std::span<const std::string> labels, std::size_t negative) {
  MetricsReport r;
  const PRF m = micro_prf(gold, pred, negative);
  r.precision = m.precision;
  r.recall = m.recall;
  r.f1 = m.f1;
  r.macro_f1 = macro_f1(gold, pred, labels.size(), negative);
  const auto counts = class_counts(gold, pred, labels.size());
  for (std::size_t c = 0; c < labels.size(); ++c) r.per_class[labels[c]] = counts[c];
  return r;
}

}  // namespace kattn
