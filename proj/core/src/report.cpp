#include "lion/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lion/errors.hpp"

namespace lion::report {

namespace {

std::string fmt(double d) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

void check_text(const std::string& s, const char* field) {
  if (s.find_first_of(",\"\n\r") != std::string::npos) {
    throw ArgumentError(std::string("CSV field '") + field + "' may not contain commas, quotes or newlines");
  }
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_num(const std::string& s, std::size_t line, const char* field) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("CSV line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  }
  return v;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

std::string fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

}  // namespace

std::string write_csv(const std::vector<RunRecord>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    check_text(r.run_id, "run_id");
    check_text(r.protocol, "protocol");
    check_text(r.dataset, "dataset");
    out += r.run_id + "," + r.protocol + "," + r.dataset + "," + std::to_string(r.seed) + "," + fmt(r.accuracy) + "," +
           std::to_string(r.trainable_params) + "," + std::to_string(r.epochs) + "," + fmt(r.wall_time_s) + "\n";
  }
  return out;
}

std::vector<RunRecord> read_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV report");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw FormatError("unexpected CSV header '" + line + "'");
  std::vector<RunRecord> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != 8) {
      throw FormatError("CSV line " + std::to_string(line_no) + ": expected 8 fields, got " + std::to_string(f.size()));
    }
    RunRecord r;
    r.run_id = f[0];
    r.protocol = f[1];
    r.dataset = f[2];
    r.seed = parse_num<std::uint64_t>(f[3], line_no, "seed");
    r.accuracy = parse_num<double>(f[4], line_no, "accuracy");
    r.trainable_params = parse_num<std::size_t>(f[5], line_no, "trainable_params");
    r.epochs = parse_num<int>(f[6], line_no, "epochs");
    r.wall_time_s = parse_num<double>(f[7], line_no, "wall_time_s");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string comparison_table(std::vector<RunRecord> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RunRecord& a, const RunRecord& b) { return a.accuracy > b.accuracy; });
  std::size_t wp = 8, wd = 7;
  for (const auto& r : rows) {
    wp = std::max(wp, r.protocol.size());
    wd = std::max(wd, r.dataset.size());
  }
  std::string out = pad("protocol", wp) + "  " + pad("dataset", wd) + "  accuracy  params    epochs\n";
  for (const auto& r : rows) {
    out += pad(r.protocol, wp) + "  " + pad(r.dataset, wd) + "  " + pad(fixed(r.accuracy, 4), 8) + "  " +
           pad(std::to_string(r.trainable_params), 8) + "  " + std::to_string(r.epochs) + "\n";
  }
  return out;
}

std::string param_table(const std::vector<ParamCountRow>& rows) {
  std::size_t wm = 6, wc = 6;
  for (const auto& r : rows) {
    wm = std::max(wm, r.method.size());
    wc = std::max(wc, std::to_string(r.count).size());
  }
  std::string out = pad("method", wm) + "  " + pad("params", wc) + "  formula\n";
  for (const auto& r : rows) {
    out += pad(r.method, wm) + "  " + pad(std::to_string(r.count), wc) + "  " + r.formula + "\n";
  }
  return out;
}

std::string trace_csv(const robust::TrainLog& log) {
  std::vector<std::string> diag_names;
  if (!log.epochs.empty()) {
    for (const auto& [name, value] : log.epochs.front().diagnostics) diag_names.push_back(name);
  }
  std::string out = "epoch,loss,accuracy,crucial_fraction,noncrucial_mean_abs";
  for (const auto& n : diag_names) out += "," + n;
  out += "\n";
  for (const auto& e : log.epochs) {
    out += std::to_string(e.epoch) + "," + fmt(e.loss) + "," + fmt(e.accuracy) + "," + fmt(e.crucial_fraction) + "," +
           fmt(e.noncrucial_mean_abs);
    for (const auto& [name, value] : e.diagnostics) out += "," + fmt(value);
    out += "\n";
  }
  return out;
}

}  // namespace lion::report
