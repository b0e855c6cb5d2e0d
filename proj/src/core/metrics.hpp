#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace aseg {

// Pixel-level confusion between a predicted and a reference binary mask.
// Counts always sum to the image's pixel total.
struct ConfusionCounts {
  int64_t tp = 0;
  int64_t tn = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t total() const { return tp + tn + fp + fn; }
};

// 1 where value > threshold (strict), else 0.
Tensor binarize(const Tensor& prediction, float threshold);

constexpr float kTanhThreshold = 0.0f;         // generator output range (-1, 1)
constexpr float kProbabilityThreshold = 0.5f;  // baseline output range (0, 1)

// Both inputs must be two-valued {0, 1} tensors of identical dims.
ConfusionCounts confusion(const Tensor& pred_mask, const Tensor& gt_mask);

// (tp + tn) / total.
double accuracy(const ConfusionCounts& counts);

// Jaccard index tp / (tp + fp + fn); two empty masks count as full agreement.
double overlap_rate(const ConfusionCounts& counts);

// Harmonic mean of precision and recall; equals the Dice coefficient.
// tp = 0 with any error is 0; tp = fp = fn = 0 is 1.
double f_measure(const ConfusionCounts& counts);

struct MetricRecord {
  std::string id;
  double accuracy = 0;
  double overlap_rate = 0;
  double f_measure = 0;
};

MetricRecord make_record(const std::string& id, const ConfusionCounts& counts);

enum class Metric { accuracy, overlap_rate, f_measure };
const char* metric_name(Metric metric);

struct SummaryRow {
  std::string metric;
  double minimum = 0;
  double maximum = 0;
  double mean = 0;
  double stddev = 0;  // sample standard deviation (n - 1); 0 for a singleton
};

SummaryRow summarize(const std::vector<MetricRecord>& records, Metric metric);
std::vector<SummaryRow> summarize_all(const std::vector<MetricRecord>& records);

// Fixed-column table: metric x {minimum, maximum, mean, standard deviation},
// four decimals per cell.
std::string render_summary_table(const std::vector<SummaryRow>& rows);

// One labeled method per row of a method-comparison table. Empty timing
// strings render as "-".
struct ComparisonEntry {
  std::string label;
  SummaryRow accuracy;
  SummaryRow overlap;
  SummaryRow f;
  std::string training_time;
  std::string test_time;
};

// method x {accuracy, overlap rate, F measure, training time, test time},
// metric cells formatted "mean ± std" to three decimals.
std::string render_comparison_table(const std::vector<ComparisonEntry>& entries);

// Header `id,accuracy,overlap_rate,f_measure`, one row per record, six
// decimal places.
void write_records_csv(const std::vector<MetricRecord>& records, const std::string& path);
std::vector<MetricRecord> read_records_csv(const std::string& path);

}  // namespace aseg
