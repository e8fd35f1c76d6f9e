#pragma once

#include <string>

#include "semgan/models.hpp"
#include "semgan/run_config.hpp"
#include "semgan/trainer.hpp"

namespace semgan {

// Versioned binary container for a whole training run: the six networks
// (parameters, batch-norm running stats), all three Adam states, image
// pools, epoch/step counters and rng states, plus the config snapshot.
// Loading validates magic, version and config compatibility.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_train_checkpoint(const std::string& path, TrainState& state, const RunConfig& cfg);

// `state` must have been built with init_train_state() on a config with the
// same model shape; the stored config is returned for inspection.
RunConfig load_train_checkpoint(const std::string& path, TrainState& state);

// Reads only the embedded config snapshot (to rebuild a compatible state).
RunConfig peek_checkpoint_config(const std::string& path);

// Standalone segmenter checkpoints (evaluation networks).
void save_segmenter_checkpoint(const std::string& path, Segmenter& segmenter);
SegmenterCfg peek_segmenter_cfg(const std::string& path);
void load_segmenter_checkpoint(const std::string& path, Segmenter& segmenter);

}  // namespace semgan
