#pragma once

#include <cstdint>
#include <string>

namespace mmnet {

// Every switch of a run in one serializable record: dataset source, model
// ablations, encoder size, optimizer schedule, and the master seed.
//
// Defaults are the full model with the reference recipe: lr 0.0008 decayed
// exponentially over 70 epochs, batch 32, continuous attention, 2 encoder
// layers with 4 heads.
struct RunConfig {
  // Data source: a dataset directory, or a synthesized one when empty.
  std::string dataset_dir;
  int synth_subjects = 0;
  int synth_classes = 0;
  int synth_samples_per = 0;

  int num_classes = 5;

  // Ablation switches.
  bool use_ca = true;
  bool use_pc = true;
  std::string attn_mode = "continuous";

  // Encoder size.
  int n_layers = 2;
  int n_heads = 4;

  // Optimization.
  double lr0 = 0.0008;
  double lr_decay = 0.0;  // 0 = derive so lr(last) == lr0/100
  int epochs = 70;
  int batch_size = 32;
  double weight_decay = 0.01;

  std::uint64_t seed = 1;
  std::string out_dir = "run";

  // Decay factor actually used by the schedule.
  double effective_gamma() const;

  void validate() const;

  // Canonical key-value serialization (fixed field order, versioned header).
  std::string canonical_text() const;
  // FNV-1a64 over the canonical text, embedded in every artifact.
  std::uint64_t digest() const;
  std::string digest_hex() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  bool synthetic() const { return dataset_dir.empty(); }
};

std::string format_double(double v);  // shortest round-trip-exact form

}  // namespace mmnet
