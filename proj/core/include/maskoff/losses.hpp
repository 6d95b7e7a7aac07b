#ifndef MASKOFF_LOSSES_HPP
#define MASKOFF_LOSSES_HPP

#include <string>
#include <vector>

#include "maskoff/tensor.hpp"

namespace maskoff::loss {

struct LossWeights {
    double lambda_r = 1.0;
    double lambda_p = 0.1;
    double lambda_s = 250.0;
    double lambda_adv = 0.1;
};

// What the non-adversarial losses compare against the ground truth: the
// composited image (supervision restricted to the hole) or the raw network
// output over the whole frame.
enum class SupervisionMode { local, full };
SupervisionMode supervision_mode_from_string(const std::string& s);
std::string to_string(SupervisionMode m);

// Mean absolute difference over every pixel and channel.
Tensor reconstruction_loss(const Tensor& syn, const Tensor& gt);

// Sum over layers of ||F_syn - F_gt||_2 / (W*H*C), the Euclidean norm of the
// flattened per-layer difference (not squared). Per-sample, averaged over the
// batch.
Tensor perceptual_loss(const std::vector<Tensor>& stack_syn, const std::vector<Tensor>& stack_gt);

// Sum over layers of ||G_syn - G_gt||_1 / (C*C). Gram matrices are divided by
// H*W when gram_spatial_norm is set (default) so the loss scale does not grow
// with resolution.
Tensor style_loss(const std::vector<Tensor>& stack_syn, const std::vector<Tensor>& stack_gt,
                  bool gram_spatial_norm = true);

// lambda_r*L_r + lambda_p*L_p + lambda_s*L_s + lambda_adv*L_adv.
Tensor total_loss(const LossWeights& w, const Tensor& l_r, const Tensor& l_p, const Tensor& l_s,
                  const Tensor& l_adv);

// local: composite of raw into inp over the mask; full: raw unchanged.
Tensor supervision_target(SupervisionMode mode, const Tensor& inp, const Tensor& mask,
                          const Tensor& raw);

}  // namespace maskoff::loss

#endif
