#pragma once

#include "modeseq/metrics_types.hpp"
#include "modeseq/training.hpp"

namespace modeseq {

void write_predictions(const std::vector<PredictionRecord>& preds, const std::string& path);
std::vector<PredictionRecord> read_predictions(const std::string& path);

// Joins predictions with their scenarios by id; throws on unknown ids.
std::vector<EvalRecord> make_eval_records(const std::vector<PredictionRecord>& preds,
                                          const std::vector<Scenario>& scenarios);

double miss_rate(const std::vector<EvalRecord>& records, MatchFamily family,
                 double step_duration);
std::pair<double, double> min_displacement(const std::vector<EvalRecord>& records);
double brier_min_fde(const std::vector<EvalRecord>& records);
double mean_average_precision(const std::vector<EvalRecord>& records, MatchFamily family,
                              double step_duration, bool soft);

MetricsReport evaluate_records(const std::vector<EvalRecord>& records, MatchFamily family,
                               double step_duration);

// Detection-style AP over a pooled confidence ranking. One record's
// highest-ranked matching mode is its true positive; later matching modes of
// the same record count as false positives (dropped entirely when `soft`).
// Precision/recall points are taken at matching entries, keeping the last
// point of each recall plateau, and integrated under the monotone envelope.
struct ApInstance {
  // per record, per mode: (confidence, matched)
  std::vector<std::vector<std::pair<double, bool>>> records;
};
double average_precision(const ApInstance& inst, bool soft);

void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<int, MetricsReport>>& rows_by_modes);
std::string metrics_summary(const MetricsReport& r);

}  // namespace modeseq
