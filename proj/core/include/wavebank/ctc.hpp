#pragma once

#include <vector>

#include "wavebank/autodiff.hpp"

namespace wavebank {

inline constexpr int kBlankId = 0;

// Frames the label can be aligned into at minimum: one frame per character
// plus one blank between each adjacent repeat.
int64_t ctc_min_frames(const std::vector<int>& label_ids);

// Negative log probability of the label under the softmax of the logits,
// marginalized over all monotonic alignments (forward-backward in log
// space). logits is [T, L+1] with the blank fixed at index 0; label_ids are
// logit indices in [1, L]. The gradient with respect to the logits is
// registered on the tape.
Var ctc_loss(Tape& tape, Var logits, const std::vector<int>& label_ids);

// Loss-only evaluation used by inference and tests.
double ctc_loss_value(const Tensor& logits, const std::vector<int>& label_ids);

}  // namespace wavebank
