#pragma once

#include <string>
#include <vector>

#include "bnnp/datasets.hpp"
#include "bnnp/domain_losses.hpp"
#include "bnnp/ensemble.hpp"

namespace bnnp {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Mann-Whitney probability that a positive outranks a negative, ties count
// one half. Throws DegenerateLabels unless both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean absolute error over every coordinate.
double l1_loss(const RowMatrix& preds, const RowMatrix& targets);

enum class PhiMode {
  averaged_predictor,  // phi of the ensemble's averaged predictor
  per_sample,          // mean over members of each member's phi
};

std::string to_string(PhiMode m);

double mean_phi(const DomainLoss& loss, const Ensemble& e, const Dataset& data, PhiMode mode);

struct ParetoPoint {
  double accuracy = 0.0;
  double phi = 0.0;
};

struct ParetoResult {
  std::vector<ParetoPoint> points;
  std::vector<bool> on_frontier;  // aligned with points
};

// Non-dominated points under (maximise accuracy, minimise phi); exact
// duplicates of a frontier point stay on the frontier.
ParetoResult pareto_points(const std::vector<ParetoPoint>& samples);

struct Summary {
  double mean = 0.0;
  double se = 0.0;  // sample std / sqrt(n); 0 for a single value
  Index n = 0;
};

Summary summarize(const std::vector<double>& values);

// Task metrics of an ensemble on a labelled split.
struct TaskMetrics {
  std::string primary_name;  // accuracy, auroc or l1
  double primary = 0.0;
  double accuracy = 0.0;     // classification tasks only
  double phi = 0.0;
};

RowMatrix ensemble_predictions(const Ensemble& e, const Dataset& data);
TaskMetrics evaluate_task(const Ensemble& e, const Dataset& data, const DomainLoss& loss, PhiMode mode);

// Accuracy (or negative L1 for regression) of a single network.
double member_score(const Mlp& net, const ParamVector& w, const Dataset& data);

struct MetricRow {
  std::string task;
  std::string method;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

std::string metrics_csv(const std::vector<MetricRow>& rows);

struct ParetoRow {
  std::string source_prior;
  Index sample_id = 0;
  double accuracy = 0.0;
  double phi = 0.0;
  bool on_frontier = false;
};

std::string pareto_csv(const std::vector<ParetoRow>& rows);

// Shortest text that round-trips the double.
std::string format_double(double v);

}  // namespace bnnp
