#include "cyc/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "cyc/error.hpp"

namespace cyc {

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || value.empty())
    throw Error(Error::Kind::format,
                "results entry '" + key + "' has a malformed number '" +
                    value + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& value) {
  long long out = 0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || value.empty())
    throw Error(Error::Kind::format,
                "results entry '" + key + "' has a malformed integer '" +
                    value + "'");
  return out;
}

}  // namespace

AccuracySummary summarize_accuracy(const std::vector<double>& per_subject,
                                   bool sample_std) {
  if (per_subject.empty())
    throw Error(Error::Kind::data,
                "cannot summarize an empty accuracy list");
  const double n = static_cast<double>(per_subject.size());
  double mean = 0.0;
  for (double v : per_subject) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : per_subject) ss += (v - mean) * (v - mean);
  AccuracySummary s;
  s.mean = mean;
  if (sample_std) {
    s.std_dev = per_subject.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  } else {
    s.std_dev = std::sqrt(ss / n);
  }
  return s;
}

AccuracySummary RunReport::accuracy() const {
  std::vector<double> accs;
  accs.reserve(folds.size());
  for (const FoldResult& f : folds) accs.push_back(f.test_accuracy);
  return summarize_accuracy(accs, sample_std);
}

double RunReport::mean_cycles() const {
  if (folds.empty())
    throw Error(Error::Kind::data, "report has no folds");
  double total = 0.0;
  for (const FoldResult& f : folds) total += f.mean_cycles;
  return total / static_cast<double>(folds.size());
}

std::string results_text(const RunReport& report) {
  const AccuracySummary s = report.accuracy();
  std::ostringstream out;
  out << "folds=" << report.folds.size() << "\n";
  out << "std_convention=" << (report.sample_std ? "sample" : "population")
      << "\n";
  out << "mean_accuracy=" << fmt6(s.mean) << "\n";
  out << "std_accuracy=" << fmt6(s.std_dev) << "\n";
  out << "mean_cycles=" << fmt6(report.mean_cycles()) << "\n";
  for (std::size_t i = 0; i < report.folds.size(); ++i) {
    const FoldResult& f = report.folds[i];
    const std::string p = "fold." + std::to_string(i + 1) + ".";
    out << p << "subject=" << f.subject << "\n";
    out << p << "best_epoch=" << f.best_epoch << "\n";
    out << p << "val_accuracy=" << fmt6(f.val_accuracy) << "\n";
    out << p << "test_accuracy=" << fmt6(f.test_accuracy) << "\n";
    out << p << "mean_cycles=" << fmt6(f.mean_cycles) << "\n";
    out << p << "checkpoint=" << f.checkpoint_file << "\n";
  }
  return out.str();
}

std::string results_csv(const RunReport& report) {
  std::ostringstream out;
  out << "subject,best_epoch,val_accuracy,test_accuracy,mean_cycles,"
         "checkpoint\n";
  for (const FoldResult& f : report.folds) {
    out << f.subject << ',' << f.best_epoch << ',' << fmt6(f.val_accuracy)
        << ',' << fmt6(f.test_accuracy) << ',' << fmt6(f.mean_cycles) << ','
        << f.checkpoint_file << "\n";
  }
  return out.str();
}

std::string results_table(const RunReport& report) {
  const AccuracySummary s = report.accuracy();
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%8s %11s %13s %14s %12s\n", "subject",
                "best_epoch", "val_accuracy", "test_accuracy", "mean_cycles");
  out << line;
  for (const FoldResult& f : report.folds) {
    std::snprintf(line, sizeof(line), "%8d %11zu %13.6f %14.6f %12.6f\n",
                  f.subject, f.best_epoch, f.val_accuracy, f.test_accuracy,
                  f.mean_cycles);
    out << line;
  }
  std::snprintf(line, sizeof(line),
                "\nmean accuracy %.6f, std %.6f (%s, %zu folds)\n",
                s.mean, s.std_dev,
                report.sample_std ? "sample" : "population",
                report.folds.size());
  out << line;
  std::snprintf(line, sizeof(line), "mean realized cycles %.6f\n",
                report.mean_cycles());
  out << line;
  return out.str();
}

RunReport parse_results_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Error::Kind::format,
                  "results line " + std::to_string(line_no) +
                      " is not a key=value pair: '" + line + "'");
    const std::string key = line.substr(0, eq);
    if (!kv.emplace(key, line.substr(eq + 1)).second)
      throw Error(Error::Kind::format,
                  "results file repeats key '" + key + "'");
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw Error(Error::Kind::format,
                  "results file is missing key '" + key + "'");
    return it->second;
  };

  RunReport report;
  const std::string& conv = need("std_convention");
  if (conv == "sample") {
    report.sample_std = true;
  } else if (conv == "population") {
    report.sample_std = false;
  } else {
    throw Error(Error::Kind::format,
                "results file has unknown std_convention '" + conv + "'");
  }
  const long long folds = parse_int("folds", need("folds"));
  if (folds < 1)
    throw Error(Error::Kind::format, "results file reports no folds");
  const double stated_mean =
      parse_double("mean_accuracy", need("mean_accuracy"));
  const double stated_std = parse_double("std_accuracy", need("std_accuracy"));
  const double stated_cycles =
      parse_double("mean_cycles", need("mean_cycles"));
  std::size_t expected_keys = 5 + 6 * static_cast<std::size_t>(folds);
  if (kv.size() != expected_keys)
    throw Error(Error::Kind::format,
                "results file has " + std::to_string(kv.size()) +
                    " entries where " + std::to_string(expected_keys) +
                    " were expected");
  for (long long i = 1; i <= folds; ++i) {
    const std::string p = "fold." + std::to_string(i) + ".";
    FoldResult f;
    f.subject = static_cast<int>(parse_int(p + "subject", need(p + "subject")));
    f.best_epoch = static_cast<std::size_t>(
        parse_int(p + "best_epoch", need(p + "best_epoch")));
    f.val_accuracy =
        parse_double(p + "val_accuracy", need(p + "val_accuracy"));
    f.test_accuracy =
        parse_double(p + "test_accuracy", need(p + "test_accuracy"));
    f.mean_cycles = parse_double(p + "mean_cycles", need(p + "mean_cycles"));
    f.checkpoint_file = need(p + "checkpoint");
    report.folds.push_back(std::move(f));
  }
  // The summary lines are redundant with the fold data; disagreement means
  // the file was edited or corrupted.
  const AccuracySummary s = report.accuracy();
  if (std::fabs(s.mean - stated_mean) > 1e-6 ||
      std::fabs(s.std_dev - stated_std) > 1e-6 ||
      std::fabs(report.mean_cycles() - stated_cycles) > 1e-6)
    throw Error(Error::Kind::format,
                "results summary lines do not match the fold data");
  return report;
}

}  // namespace cyc
