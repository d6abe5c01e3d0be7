#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "wsym/serialize.hpp"

namespace wsym {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Relative --out paths resolve against this directory when it is set.
inline constexpr const char* kOutDirEnv = "WSYM_OUT_DIR";

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string git_describe;
  std::string started, finished;  // UTC ISO 8601; finished empty while running
  std::vector<std::string> outputs;
};

json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const json& j);

// Mean and standard error (sample sd / sqrt(n); 0 for n = 1).
struct MeanSe {
  double mean = 0.0, se = 0.0;
  std::size_t n = 0;
};
MeanSe mean_se(const std::vector<double>& xs);

}  // namespace wsym
