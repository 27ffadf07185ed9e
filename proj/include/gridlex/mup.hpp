#pragma once

#include "gridlex/core.hpp"

namespace gridlex {

/// µP transfer of proxy-width hyperparameters: eta / m, lambda * m.
///
/// Real µP applies this only to hidden-layer parameter groups; the values
/// here are the scalar effective settings reported for those groups.
EffectiveHP rescale_hp(const BaseHP& base, const ScaleSpec& scale);
/// Same rescaling for an arbitrary positive width multiplier (used for the
/// inverse transfer, m -> 1/m).
EffectiveHP rescale_hp(const BaseHP& base, double width_multiplier);

/// Total training tokens fixed at `multiplier` tokens per non-embedding parameter.
TokenCount token_budget(const ScaleSpec& scale, TokenCount multiplier = 100);

/// Split budget D into R_max passes over D_LR plus fresh auxiliary tokens.
MixBudget mix_budget(TokenCount total_tokens, TokenCount lr_corpus_tokens, int repetition_budget);

}  // namespace gridlex
