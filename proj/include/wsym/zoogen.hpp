#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsym/netmodels.hpp"
#include "wsym/serialize.hpp"

namespace wsym {

enum class Split { kTrain, kVal, kTest };
std::string split_name(Split s);
Split parse_split(const std::string& name);

struct Hyper {
  double learning_rate = 0.0;
  std::size_t epochs = 0;
  double label_noise = 0.0;
  double init_scale = 1.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kOriginal = "original";

struct ZooEntry {
  std::string id;
  Split split = Split::kTrain;
  double label = 0.0;  // held-out accuracy, or 1 / (1 + mse) for regression
  Hyper hyper;
  std::string provenance = kOriginal;  // or "augmented-from:<id>:<element hash>"
  Params params;

  bool original() const { return provenance == kOriginal; }
};

struct Zoo {
  std::string task;
  Arch arch = Arch::kMlp;
  std::vector<ZooEntry> entries;
};

struct HyperRanges {
  double lr_low = 0.01, lr_high = 1.0;  // log-uniform
  std::size_t epochs_low = 0, epochs_high = 300;
  double noise_low = 0.0, noise_high = 0.3;
  double init_low = 0.3, init_high = 1.5;
  void validate() const;
};

// Tasks: "2d-two-class" (disc of area 2 inside [-1, 1]^2, balanced) and
// "1d-regression" (sin 3x on [-1, 1]).
struct MlpZooOptions {
  std::size_t n = 200;
  std::string task = "2d-two-class";
  std::vector<std::size_t> hidden{8, 8};
  HyperRanges ranges;
  std::size_t train_points = 128;
  std::size_t test_points = 256;
};

// Tasks: "sequence-majority" (sign of the majority of +-1 tokens) and
// "sum-sign" (sign of the sum of Gaussian tokens). The logit is the token
// mean of output coordinate 0.
struct MhaZooOptions {
  std::size_t n = 100;
  std::string task = "sequence-majority";
  std::size_t heads = 2, model_dim = 8, head_dim = 4, ff_dim = 16, seq_len = 7;
  HyperRanges ranges{0.02, 1.0, 0, 60, 0.0, 0.3, 0.3, 1.5};
  std::size_t train_points = 64;
  std::size_t test_points = 128;
};

// Pure functions of (options, seed).
Zoo gen_mlp_zoo(const MlpZooOptions& options, std::uint64_t seed);
Zoo gen_mha_zoo(const MhaZooOptions& options, std::uint64_t seed);

// Single-entry trainers, exposed for tests.
MlpParams train_mlp_entry(const MlpZooOptions& options, const Hyper& hyper, std::uint64_t task_seed,
                          double* label);
MhaBlockParams train_mha_entry(const MhaZooOptions& options, const Hyper& hyper,
                               std::uint64_t task_seed, double* label);

// 0.7 / 0.15 / 0.15 by a seeded shuffle.
std::vector<Split> assign_splits(std::size_t n, Rng& rng);

struct AugmentOptions {
  std::size_t factor = 2;
  int scale_exp = 1;       // diagonal entries ~ U[1, 10^scale_exp]
  double gl_spread = 1.0;  // GL entries ~ U[-spread, spread]
  bool permute = true;
  bool certify = true;
};

class CertificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Originals first, then factor - 1 orbit copies per entry with inherited
// label and split. Each copy is certified functionally equivalent at
// 1e-6 10^i absolute (monomial) or 1e-6 relative (GL).
Zoo augment_zoo(const Zoo& zoo, const AugmentOptions& options, std::uint64_t seed);

json zoo_to_json(const Zoo& zoo);
Zoo zoo_from_json(const json& j);
void save_zoo(const Zoo& zoo, const std::filesystem::path& path);
Zoo load_zoo(const std::filesystem::path& path);
// "id,split,label,provenance" rows.
std::string zoo_manifest_csv(const Zoo& zoo);

// Entries of one split; threshold keeps labels >= threshold.
std::vector<const ZooEntry*> select(const Zoo& zoo, Split split, bool originals_only = false,
                                    double threshold = -1.0);

}  // namespace wsym
