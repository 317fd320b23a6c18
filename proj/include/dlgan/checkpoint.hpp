#pragma once

// Checkpoint container:
//
//   "DLGANCKP"                      8-byte magic
//   u64 LE manifest length
//   u32 LE CRC-32 of the manifest
//   manifest                        JSON text (version, config, stats,
//                                   rng state, counters, parameter table)
//   payload                         float32 LE blocks in table order
//
// Each parameter table entry carries name, rows, cols, byte offset and the
// CRC-32 of its block; the manifest also records the payload CRC-32.

#include <string>
#include <utility>
#include <vector>

#include "dlgan/autodiff.hpp"
#include "dlgan/config.hpp"
#include "dlgan/data.hpp"

namespace dlgan {

class DlganModel;

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  TrainingConfig config;
  NormStats stats;
  std::vector<std::string> feature_names;
  std::string rng_state;
  int phase = 0;  // last completed training phase (0..3)
  long epoch = 0;
  std::vector<std::pair<std::string, Matrix>> params;

  static Checkpoint capture(DlganModel& model, const NormStats& stats,
                            const std::vector<std::string>& feature_names, const std::string& rng_state,
                            int phase, long epoch);
  // Copies parameters into a model built from `config`; throws CorruptFile
  // on any missing name or shape mismatch.
  void restore(DlganModel& model) const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

std::uint32_t crc32_of(const void* data, std::size_t size);

}  // namespace dlgan
