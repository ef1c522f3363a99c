#ifndef FBE_TOOLS_CLI_HPP_
#define FBE_TOOLS_CLI_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fbe/equalizer.hpp"
#include "fbe/gains.hpp"

namespace fbe::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kNumeric = 4,
};

struct Config {
  EngineConfig engine;
  EstimatorParams estimator;
  std::string estimator_name = "mmse-lsa";
  std::string gains_path;  // FBEG stream; overrides the estimator when set
  double stream_g_max = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Runs one command line (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fbe::cli

#endif  // FBE_TOOLS_CLI_HPP_
