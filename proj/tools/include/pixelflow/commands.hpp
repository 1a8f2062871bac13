#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>

#include "pixelflow/config.hpp"

namespace pixelflow::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kRuntime = 3 };

/// Loads data.path, generating and saving a shapes dataset first when the
/// file is missing and generation is enabled.
Dataset obtain_dataset(const RunConfig& config, std::ostream& log);

/// Trains for train.steps total steps. Writes <out_dir>/loss.csv and
/// checkpoints <out_dir>/step_NNNNNN.pxfc plus <out_dir>/latest.pxfc. With
/// `resume`, continues from latest.pxfc and appends to the log. A
/// non-finite loss writes <out_dir>/diverged.pxfc and returns kRuntime.
int cmd_train(const RunConfig& config, bool resume, std::ostream& out, std::ostream& err);

/// Writes `count` samples of class `label` to <out_dir>/class{c}_seed{s}.ppm
/// where s runs from sample.seed upward.
int cmd_sample(const RunConfig& config, const std::filesystem::path& checkpoint, std::size_t label,
               std::size_t count, const std::filesystem::path& out_dir, std::ostream& out,
               std::ostream& err);

/// Runs the invariant suite; returns kCheckFailed when any check fails.
int cmd_check(const RunConfig& config, std::ostream& out);

int cmd_gen_data(const RunConfig& config, const std::filesystem::path& path, std::ostream& out);

// Keeps freed tensor buffers in the heap instead of returning them to the OS.
// Without this every large temporary page-faults afresh; glibc only.
void tune_allocator();

/// Parses argv and dispatches. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pixelflow::cli
