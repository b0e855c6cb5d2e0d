#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace aseg {

Tensor binarize(const Tensor& prediction, float threshold) {
  const auto& values = prediction.values();
  std::vector<float> out(values.size());
  for (size_t i = 0; i < values.size(); ++i) out[i] = values[i] > threshold ? 1.0f : 0.0f;
  return Tensor(prediction.dims(), std::move(out));
}

ConfusionCounts confusion(const Tensor& pred_mask, const Tensor& gt_mask) {
  require_arg(pred_mask.same_dims(gt_mask), "confusion: dims mismatch");
  const auto& pred = pred_mask.values();
  const auto& gt = gt_mask.values();
  ConfusionCounts counts;
  for (size_t i = 0; i < pred.size(); ++i) {
    require_arg(pred[i] == 0.0f || pred[i] == 1.0f, "confusion: prediction is not two-valued");
    require_arg(gt[i] == 0.0f || gt[i] == 1.0f, "confusion: reference is not two-valued");
    const bool p = pred[i] == 1.0f;
    const bool g = gt[i] == 1.0f;
    if (p && g)
      ++counts.tp;
    else if (p && !g)
      ++counts.fp;
    else if (!p && g)
      ++counts.fn;
    else
      ++counts.tn;
  }
  return counts;
}

double accuracy(const ConfusionCounts& counts) {
  require_arg(counts.total() > 0, "accuracy: empty confusion counts");
  return static_cast<double>(counts.tp + counts.tn) / static_cast<double>(counts.total());
}

double overlap_rate(const ConfusionCounts& counts) {
  const int64_t denom = counts.tp + counts.fp + counts.fn;
  if (denom == 0) return 1.0;  // both masks empty
  return static_cast<double>(counts.tp) / static_cast<double>(denom);
}

double f_measure(const ConfusionCounts& counts) {
  if (counts.tp == 0) {
    return (counts.fp == 0 && counts.fn == 0) ? 1.0 : 0.0;
  }
  const double precision = static_cast<double>(counts.tp) / (counts.tp + counts.fp);
  const double recall = static_cast<double>(counts.tp) / (counts.tp + counts.fn);
  return 2.0 * precision * recall / (precision + recall);
}

MetricRecord make_record(const std::string& id, const ConfusionCounts& counts) {
  return {id, accuracy(counts), overlap_rate(counts), f_measure(counts)};
}

const char* metric_name(Metric metric) {
  switch (metric) {
    case Metric::accuracy:
      return "accuracy";
    case Metric::overlap_rate:
      return "overlap rate";
    case Metric::f_measure:
      return "F measure";
  }
  return "?";
}

namespace {

double pick(const MetricRecord& record, Metric metric) {
  switch (metric) {
    case Metric::accuracy:
      return record.accuracy;
    case Metric::overlap_rate:
      return record.overlap_rate;
    case Metric::f_measure:
      return record.f_measure;
  }
  return 0;
}

}  // namespace

SummaryRow summarize(const std::vector<MetricRecord>& records, Metric metric) {
  require_arg(!records.empty(), "summarize: no records");
  SummaryRow row;
  row.metric = metric_name(metric);
  double sum = 0;
  row.minimum = pick(records.front(), metric);
  row.maximum = row.minimum;
  for (const auto& record : records) {
    const double v = pick(record, metric);
    row.minimum = std::min(row.minimum, v);
    row.maximum = std::max(row.maximum, v);
    sum += v;
  }
  row.mean = sum / static_cast<double>(records.size());
  if (records.size() > 1) {
    double sq = 0;
    for (const auto& record : records) {
      const double d = pick(record, metric) - row.mean;
      sq += d * d;
    }
    row.stddev = std::sqrt(sq / static_cast<double>(records.size() - 1));
  }
  return row;
}

std::vector<SummaryRow> summarize_all(const std::vector<MetricRecord>& records) {
  return {summarize(records, Metric::accuracy), summarize(records, Metric::overlap_rate),
          summarize(records, Metric::f_measure)};
}

namespace {

size_t display_width(const std::string& s) {
  size_t width = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++width;  // count code points, not bytes
  return width;
}

std::string pad_display(const std::string& s, size_t width) {
  const size_t have = display_width(s);
  return have >= width ? s : s + std::string(width - have, ' ');
}

std::string fixed(double v, int decimals) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.*f", decimals, v);
  return buffer;
}

}  // namespace

std::string render_summary_table(const std::vector<SummaryRow>& rows) {
  std::string out;
  out += pad_display("metric", 20) + pad_display("minimum", 11) + pad_display("maximum", 11) +
         pad_display("mean", 11) + "standard deviation\n";
  for (const auto& row : rows) {
    out += pad_display(row.metric, 20) + pad_display(fixed(row.minimum, 4), 11) +
           pad_display(fixed(row.maximum, 4), 11) + pad_display(fixed(row.mean, 4), 11) +
           fixed(row.stddev, 4) + "\n";
  }
  return out;
}

std::string render_comparison_table(const std::vector<ComparisonEntry>& entries) {
  const auto cell = [](const SummaryRow& row) {
    return fixed(row.mean, 3) + " ± " + fixed(row.stddev, 3);
  };
  const auto timing = [](const std::string& s) { return s.empty() ? std::string("-") : s; };
  std::string out;
  out += pad_display("method", 12) + pad_display("accuracy", 17) +
         pad_display("overlap rate", 17) + pad_display("F measure", 17) +
         pad_display("training time", 17) + "test time\n";
  for (const auto& entry : entries) {
    out += pad_display(entry.label, 12) + pad_display(cell(entry.accuracy), 17) +
           pad_display(cell(entry.overlap), 17) + pad_display(cell(entry.f), 17) +
           pad_display(timing(entry.training_time), 17) + timing(entry.test_time) + "\n";
  }
  return out;
}

void write_records_csv(const std::vector<MetricRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "cannot write records file: " + path);
  out << "id,accuracy,overlap_rate,f_measure\n";
  for (const auto& record : records) {
    out << record.id << ',' << fixed(record.accuracy, 6) << ',' << fixed(record.overlap_rate, 6)
        << ',' << fixed(record.f_measure, 6) << '\n';
  }
  require(out.good(), ErrorCode::io, "records write failed: " + path);
}

std::vector<MetricRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot read records file: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::format,
          "malformed report file (empty): " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "id,accuracy,overlap_rate,f_measure", ErrorCode::format,
          "malformed report file (bad header): " + path);
  std::vector<MetricRecord> records;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    MetricRecord record;
    std::string field;
    try {
      require(static_cast<bool>(std::getline(ss, record.id, ',')), ErrorCode::format, "");
      require(static_cast<bool>(std::getline(ss, field, ',')), ErrorCode::format, "");
      record.accuracy = std::stod(field);
      require(static_cast<bool>(std::getline(ss, field, ',')), ErrorCode::format, "");
      record.overlap_rate = std::stod(field);
      require(static_cast<bool>(std::getline(ss, field, ',')), ErrorCode::format, "");
      record.f_measure = std::stod(field);
    } catch (const Error&) {
      fail_format("malformed report file (bad row '" + line + "'): " + path);
    } catch (const std::exception&) {
      fail_format("malformed report file (bad number in '" + line + "'): " + path);
    }
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace aseg
