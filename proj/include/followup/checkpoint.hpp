#pragma once

#include <string>

#include "followup/model.hpp"

namespace followup::model {

// On-disk model container: one JSON header line (config, vocabulary
// fingerprint, training phase, tensor directory with byte offsets) followed
// by raw little-endian float32 tensor data in the canonical traversal order.
struct Checkpoint {
  EncoderParams<float> params;
  std::string vocab_fingerprint;
  std::string phase = "random";  // random | pretrained | finetuned
};

void save_checkpoint(const std::string& path, Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace followup::model
