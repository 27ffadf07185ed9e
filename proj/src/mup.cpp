#include "gridlex/mup.hpp"

#include <cmath>

namespace gridlex {

EffectiveHP rescale_hp(const BaseHP& base, const ScaleSpec& scale) {
    return rescale_hp(base, scale.width_multiplier());
}

EffectiveHP rescale_hp(const BaseHP& base, double m) {
    if (!(std::isfinite(m) && m > 0.0)) throw ValidationError("width_multiplier", "must be positive");
    return EffectiveHP(base.weight_decay * m, base.learning_rate / m);
}

TokenCount token_budget(const ScaleSpec& scale, TokenCount multiplier) {
    if (multiplier <= 0) throw ValidationError("multiplier", "must be positive");
    return multiplier * scale.n_nonemb();
}

MixBudget mix_budget(TokenCount d, TokenCount d_lr, int r_max) {
    if (d <= 0) throw ValidationError("total_tokens", "must be positive");
    if (d_lr <= 0) throw ValidationError("lr_corpus_tokens", "must be positive");
    if (r_max <= 0) throw ValidationError("repetition_budget", "must be positive");
    const TokenCount lr_share = static_cast<TokenCount>(r_max) * d_lr;
    if (lr_share > d) return MixBudget(d, d_lr, r_max, 1.0, 0, true);
    const double alpha = static_cast<double>(r_max) * static_cast<double>(d_lr) / static_cast<double>(d);
    return MixBudget(d, d_lr, r_max, alpha, d - lr_share, false);
}

}  // namespace gridlex
