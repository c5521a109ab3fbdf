#pragma once

#include <torch/torch.h>

#include "psvae/model.hpp"
#include "psvae/types.hpp"

namespace psvae {

/// Mean over elements of h(a-b), h(x) = 0.5 x^2 for |x| < 1, |x| - 0.5
/// otherwise.
torch::Tensor smooth_l1(const torch::Tensor& a, const torch::Tensor& b);

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_cyc);

torch::Tensor identity_loss(const torch::Tensor& x, const torch::Tensor& x_rec);

/// LSGAN discriminator objective: mean(real - 1)^2 + mean(fake + 1)^2.
torch::Tensor adversarial_loss_d(const torch::Tensor& real_scores,
                                 const torch::Tensor& fake_scores);

/// LSGAN generator objective: mean(fake - 1)^2.
torch::Tensor adversarial_loss_g(const torch::Tensor& fake_scores);

/// Closed-form KL to a standard normal over the z partition plus the
/// own-domain zeta partition only.
torch::Tensor kl_loss(const GaussianFeature& f, Domain domain, const NetworkSpec& spec);

/// smooth_l1(z_ref, z_re) with z_ref treated as a constant. Throws if
/// z_ref still carries gradient.
torch::Tensor feature_consistency_loss(const torch::Tensor& z_ref,
                                       const torch::Tensor& z_re);

/// Mean categorical cross-entropy with softmax; labels are class ids.
torch::Tensor prediction_loss_cls(const torch::Tensor& logits,
                                  const torch::Tensor& labels);

torch::Tensor prediction_loss_reg(const torch::Tensor& pred, const torch::Tensor& target);

/// adv_g + alpha cyc + beta id + gamma kl + delta fc + epsilon pred.
torch::Tensor total_loss(const torch::Tensor& adv_g, const torch::Tensor& cyc,
                         const torch::Tensor& id, const torch::Tensor& kl,
                         const torch::Tensor& fc, const torch::Tensor& pred,
                         const LossWeights& w);

double total_from_parts(const LossBreakdown& parts, const LossWeights& w);

}  // namespace psvae
