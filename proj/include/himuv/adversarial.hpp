#pragma once

// Unconditional patch discriminator over the mel treated as a one-channel
// image, and the least-squares adversarial / feature-matching losses.

#include "himuv/config.hpp"
#include "himuv/nn.hpp"

#include <vector>

namespace himuv {

struct DiscriminatorOutput {
    Var score;                  // one unbounded score per patch (P x 1)
    std::vector<Var> features;  // T intermediate maps, shallow to deep
    std::vector<Eigen::Index> time_steps;  // time resolution of each feature map
};

// disc_layers stride-2 3x3 convolutions with leaky ReLU, then a stride-1
// score convolution with no output nonlinearity.
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(ParameterStore& store, const TrainingConfig& config);
    DiscriminatorOutput operator()(const Var& mel) const;

private:
    std::vector<Conv2d> layers_;
    Conv2d score_;
    double slope_ = 0.2;
};

// mean((s_real - 1)^2) + mean(s_fake^2)
Var adv_loss_d(const Var& score_real, const Var& score_fake);
// mean((s_fake - 1)^2)
Var adv_loss_g(const Var& score_fake);
// sum over layers of mean |real - fake|. Throws Error(consistency) on mismatch.
Var feature_matching_loss(const std::vector<Var>& real, const std::vector<Var>& fake);

}  // namespace himuv
