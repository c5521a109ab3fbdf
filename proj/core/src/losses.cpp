#include "psvae/losses.hpp"

namespace psvae {

torch::Tensor smooth_l1(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) {
    throw std::invalid_argument("smooth_l1: shape mismatch");
  }
  auto diff = torch::abs(a - b);
  auto val = torch::where(diff < 1.0, 0.5 * diff * diff, diff - 0.5);
  return val.mean();
}

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_cyc) {
  return smooth_l1(x, x_cyc);
}

torch::Tensor identity_loss(const torch::Tensor& x, const torch::Tensor& x_rec) {
  return smooth_l1(x, x_rec);
}

torch::Tensor adversarial_loss_d(const torch::Tensor& real_scores,
                                 const torch::Tensor& fake_scores) {
  return (real_scores - 1.0).square().mean() + (fake_scores + 1.0).square().mean();
}

torch::Tensor adversarial_loss_g(const torch::Tensor& fake_scores) {
  return (fake_scores - 1.0).square().mean();
}

torch::Tensor kl_loss(const GaussianFeature& f, Domain domain, const NetworkSpec& spec) {
  // z partition plus the own-domain zeta partition; the cross-domain zeta
  // head carries no KL term.
  const int64_t zeta_offset =
      domain == Domain::kSource ? spec.n_z : spec.n_z + spec.n_zeta;
  auto slice = [&](const torch::Tensor& t) {
    return torch::cat({t.narrow(1, 0, spec.n_z), t.narrow(1, zeta_offset, spec.n_zeta)}, 1);
  };
  auto mu = slice(f.mu);
  auto logvar = slice(f.logvar);
  return -0.5 * (1.0 + logvar - mu.square() - torch::exp(logvar)).mean();
}

torch::Tensor feature_consistency_loss(const torch::Tensor& z_ref,
                                       const torch::Tensor& z_re) {
  if (z_ref.requires_grad()) {
    throw std::invalid_argument(
        "feature_consistency_loss: reference code must be detached");
  }
  return smooth_l1(z_ref, z_re);
}

torch::Tensor prediction_loss_cls(const torch::Tensor& logits,
                                  const torch::Tensor& labels) {
  if (labels.numel() > 0) {
    const auto lo = labels.min().item<int64_t>();
    const auto hi = labels.max().item<int64_t>();
    if (lo < 0 || hi >= logits.size(1)) {
      throw DataError("class label out of range");
    }
  }
  return torch::nn::functional::cross_entropy(logits, labels);
}

torch::Tensor prediction_loss_reg(const torch::Tensor& pred, const torch::Tensor& target) {
  return smooth_l1(pred, target);
}

torch::Tensor total_loss(const torch::Tensor& adv_g, const torch::Tensor& cyc,
                         const torch::Tensor& id, const torch::Tensor& kl,
                         const torch::Tensor& fc, const torch::Tensor& pred,
                         const LossWeights& w) {
  return adv_g + w.alpha * cyc + w.beta * id + w.gamma * kl + w.delta * fc +
         w.epsilon * pred;
}

double total_from_parts(const LossBreakdown& parts, const LossWeights& w) {
  return parts.adv_g + w.alpha * parts.cyc + w.beta * parts.id + w.gamma * parts.kl +
         w.delta * parts.fc + w.epsilon * parts.pred;
}

}  // namespace psvae
