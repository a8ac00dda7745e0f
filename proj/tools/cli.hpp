#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sdr/config.hpp"
#include "sdr/data.hpp"

namespace sdr::cli {

enum ExitCode : int {
  kOk = 0,
  kChecksFailed = 1,
  kUsageError = 2,
  kRuntimeError = 3,
};

// A dataset resolved from --dataset. Synthetic sources keep their world so
// evaluation can use the true labels on all of D.
struct Dataset {
  std::string source;
  InteractionSet set;
  std::optional<SyntheticWorld> world;
};

// coat:DIR (DIR/train.ascii and DIR/test.ascii), triples:TRAIN[,TEST] or
// synthetic. Throws std::invalid_argument on an unknown source.
Dataset load_dataset(const std::string& spec, const KeyValueConfig& config, double threshold);

// Parses argv and runs one subcommand. Everything the commands print goes to
// `out` / `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sdr::cli
