#pragma once

#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "munet/core.hpp"

namespace munet {

// K x K confusion counts, truth along rows, prediction along columns.
// Unlabeled ground-truth pixels are excluded; predictions must never contain
// the unlabeled code.
struct ConfusionMatrix {
  int k = 0;
  std::vector<std::uint64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int k_classes)
      : k(k_classes), counts(static_cast<std::size_t>(k_classes) * k_classes, 0) {
    if (k_classes < 1) throw ConfigError("ConfusionMatrix: K must be >= 1");
  }

  std::uint64_t& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * k + pred];
  }
  std::uint64_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * k + pred];
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  // Pools another image pair into the matrix.
  void add(const LabelMap& truth, const LabelMap& pred) {
    if (truth.width != pred.width || truth.height != pred.height)
      throw DataError("confusion: truth/prediction dimensions differ");
    for (std::size_t i = 0; i < truth.lab.size(); ++i) {
      std::uint8_t t = truth.lab[i];
      if (t == kUnlabeled) continue;
      std::uint8_t p = pred.lab[i];
      if (p == kUnlabeled)
        throw DataError("confusion: prediction contains the unlabeled code");
      if (t >= k || p >= k)
        throw DataError("confusion: label outside K=" + std::to_string(k));
      ++at(t, p);
    }
  }
};

inline ConfusionMatrix confusion_matrix(const LabelMap& truth, const LabelMap& pred,
                                        int k_classes) {
  ConfusionMatrix cm(k_classes);
  cm.add(truth, pred);
  return cm;
}

// Ratios are undefined (not zero) when their denominator is empty, e.g. the
// dice of a class absent from both truth and prediction.
struct ClassMetrics {
  std::optional<double> sensitivity, specificity, precision, dice;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  std::optional<double> accuracy;   // micro: trace / total
  std::optional<double> mean_dice;  // over classes with defined dice
  int undefined_dice_classes = 0;
};

inline MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  MetricsReport rep;
  rep.per_class.resize(cm.k);
  const double total = static_cast<double>(cm.total());
  std::uint64_t trace = 0;
  double dice_sum = 0.0;
  int dice_defined = 0;
  for (int k = 0; k < cm.k; ++k) {
    std::uint64_t tp = cm.at(k, k), fn = 0, fp = 0;
    for (int j = 0; j < cm.k; ++j) {
      if (j == k) continue;
      fn += cm.at(k, j);
      fp += cm.at(j, k);
    }
    std::uint64_t tn = cm.total() - tp - fn - fp;
    trace += tp;
    ClassMetrics& m = rep.per_class[k];
    if (tp + fn > 0) m.sensitivity = double(tp) / double(tp + fn);
    if (tn + fp > 0) m.specificity = double(tn) / double(tn + fp);
    if (tp + fp > 0) m.precision = double(tp) / double(tp + fp);
    if (2 * tp + fp + fn > 0) {
      m.dice = 2.0 * double(tp) / double(2 * tp + fp + fn);
      dice_sum += *m.dice;
      ++dice_defined;
    } else {
      ++rep.undefined_dice_classes;
    }
  }
  if (total > 0) rep.accuracy = double(trace) / total;
  if (dice_defined > 0) rep.mean_dice = dice_sum / dice_defined;
  return rep;
}

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << *v;
  return os.str();
}

}  // namespace detail

// Human-readable table; class names optional.
inline std::string format_report(const MetricsReport& rep, const ClassTable* table) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "class" << std::right << std::setw(12) << "sens"
     << std::setw(12) << "spec" << std::setw(12) << "prec" << std::setw(12) << "dice"
     << '\n';
  for (std::size_t k = 0; k < rep.per_class.size(); ++k) {
    std::string name = table && k < static_cast<std::size_t>(table->num_classes())
                           ? table->names[k]
                           : "class" + std::to_string(k);
    const ClassMetrics& m = rep.per_class[k];
    os << std::left << std::setw(14) << name << std::right << std::setw(12)
       << detail::fmt_opt(m.sensitivity) << std::setw(12)
       << detail::fmt_opt(m.specificity) << std::setw(12)
       << detail::fmt_opt(m.precision) << std::setw(12) << detail::fmt_opt(m.dice)
       << '\n';
  }
  os << "accuracy " << detail::fmt_opt(rep.accuracy) << '\n';
  os << "mean_dice " << detail::fmt_opt(rep.mean_dice);
  if (rep.undefined_dice_classes > 0)
    os << " (" << rep.undefined_dice_classes << " class(es) undefined, skipped)";
  os << '\n';
  return os.str();
}

// Machine-readable key=value lines.
inline std::string report_key_values(const MetricsReport& rep) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto put = [&](const std::string& key, const std::optional<double>& v) {
    os << key << '=';
    if (v)
      os << *v;
    else
      os << "undefined";
    os << '\n';
  };
  for (std::size_t k = 0; k < rep.per_class.size(); ++k) {
    std::string p = "class" + std::to_string(k) + ".";
    put(p + "sensitivity", rep.per_class[k].sensitivity);
    put(p + "specificity", rep.per_class[k].specificity);
    put(p + "precision", rep.per_class[k].precision);
    put(p + "dice", rep.per_class[k].dice);
  }
  put("accuracy", rep.accuracy);
  put("mean_dice", rep.mean_dice);
  os << "undefined_dice_classes=" << rep.undefined_dice_classes << '\n';
  return os.str();
}

}  // namespace munet
