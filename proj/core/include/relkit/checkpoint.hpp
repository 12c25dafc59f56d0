#pragma once

#include <string>

#include "relkit/model.hpp"
#include "relkit/objectives.hpp"
#include "relkit/trainer.hpp"

namespace relkit::trainer {

// Everything a resumed run needs: the model (configs, vocabularies,
// parameters), the optimizer-side state, and the training configs the
// run was started with.
struct Checkpoint {
  std::string phase;  // "init" | "pretrain" | "finetune"
  Model model;
  TrainerState state;
  TrainConfig train;
  objectives::ContrastiveConfig contrast;
};

// Binary layout: 8-byte magic, u32 header length, JSON header (configs,
// vocabularies, counters, tensor manifest), then the tensor payloads in
// manifest order. save -> load -> save is byte-identical, so checkpoint
// files can be compared directly.
void checkpoint_save(const std::string& path, const Checkpoint& c);

// Validates the magic and header length, rebuilds the model from the
// header configs, then overlays every stored tensor. A manifest entry
// whose shape disagrees with the rebuilt model is an error naming the
// tensor and both shapes; a truncated or corrupt file is a
// RuntimeFailure.
Checkpoint checkpoint_load(const std::string& path);

}  // namespace relkit::trainer
