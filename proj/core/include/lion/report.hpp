#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lion/prompt_model.hpp"
#include "lion/robust_opt.hpp"

namespace lion::report {

inline constexpr const char* kCsvHeader =
    "run_id,protocol,dataset,seed,accuracy,trainable_params,epochs,wall_time_s";

/// One row of the machine-readable run report.
struct RunRecord {
  std::string run_id;
  std::string protocol;
  std::string dataset;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::size_t trainable_params = 0;
  int epochs = 0;
  double wall_time_s = 0.0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// Header plus one line per record. Reals use shortest round-trip form so
/// read_csv returns the identical values. Text fields may not contain
/// commas, quotes or newlines (ArgumentError).
std::string write_csv(const std::vector<RunRecord>& rows);
/// Throws FormatError on a wrong header or malformed row.
std::vector<RunRecord> read_csv(const std::string& text);

/// Fixed-width comparison table sorted by accuracy (best first).
std::string comparison_table(std::vector<RunRecord> rows);

/// The parameter-overhead formula table.
std::string param_table(const std::vector<ParamCountRow>& rows);

/// Per-epoch trace: loss, accuracy, crucial fraction and diagnostics
/// (gate weights for prompt models), as CSV.
std::string trace_csv(const robust::TrainLog& log);

}  // namespace lion::report
