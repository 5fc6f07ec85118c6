#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lion/config.hpp"
#include "lion/model.hpp"

namespace lion::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kMissingArtifact = 3,
};

/// Source and target splits for one configuration.
struct TaskData {
  Dataset source_train;
  Dataset source_test;
  Dataset target_train;  // shifted, then resampled
  Dataset target_test;   // shifted only
};

TaskData make_task(const RunConfig& c);

/// Short label naming the dataset, shift and resampling, e.g.
/// "blobs/invertible_linear/ir50".
std::string dataset_label(const RunConfig& c);

std::filesystem::path backbone_path(const RunConfig& c);
std::filesystem::path model_path(const RunConfig& c);

int cmd_pretrain(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_tune(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_prop1(const RunConfig& c, std::ostream& out, std::ostream& err);
int cmd_report(const RunConfig& c, const std::vector<std::string>& paths, std::ostream& out, std::ostream& err);

/// Parses argv, merges `--config` file and flags, dispatches, and maps
/// errors onto the exit-code taxonomy.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lion::cli
