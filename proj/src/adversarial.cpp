#include "himuv/adversarial.hpp"

#include "himuv/error.hpp"

#include <numeric>

namespace himuv {

Discriminator::Discriminator(ParameterStore& store, const TrainingConfig& config) : slope_(config.disc_slope)
{
    Eigen::Index in = 1;
    for (std::int64_t l = 0; l < config.disc_layers; ++l) {
        const Eigen::Index out = l == 0 ? config.disc_channels / 2 : config.disc_channels;
        layers_.emplace_back(store, "discriminator.conv" + std::to_string(l), in, std::max<Eigen::Index>(out, 1), 2);
        in = std::max<Eigen::Index>(out, 1);
    }
    score_ = Conv2d(store, "discriminator.score", in, 1, 1);
}

DiscriminatorOutput Discriminator::operator()(const Var& mel) const
{
    // M x 80 -> (M * 80) x 1: same row-major storage.
    std::vector<long> flat(static_cast<std::size_t>(mel.value().size()));
    std::iota(flat.begin(), flat.end(), 0L);
    FeatureMap x{ag::gather(mel, std::move(flat), mel.value().size(), 1), mel.rows(), mel.cols()};

    DiscriminatorOutput out;
    for (const auto& layer : layers_) {
        x = layer(x);
        x.data = ag::leaky_relu(x.data, slope_);
        out.features.push_back(x.data);
        out.time_steps.push_back(x.height);
    }
    out.score = score_(x).data;
    return out;
}

Var adv_loss_d(const Var& score_real, const Var& score_fake)
{
    return ag::add(ag::mean(ag::square(ag::add_scalar(score_real, -1.0))), ag::mean(ag::square(score_fake)));
}

Var adv_loss_g(const Var& score_fake)
{
    return ag::mean(ag::square(ag::add_scalar(score_fake, -1.0)));
}

Var feature_matching_loss(const std::vector<Var>& real, const std::vector<Var>& fake)
{
    if (real.size() != fake.size() || real.empty()) {
        throw Error(ErrorKind::consistency, "feature_matching_loss: layer lists differ in length");
    }
    Var total;
    for (std::size_t t = 0; t < real.size(); ++t) {
        if (real[t].rows() != fake[t].rows() || real[t].cols() != fake[t].cols()) {
            throw Error(ErrorKind::consistency, "feature_matching_loss: layer " + std::to_string(t) + " shape mismatch");
        }
        const Var layer = ag::mean(ag::abs(ag::sub(real[t], fake[t])));
        total = total.defined() ? ag::add(total, layer) : layer;
    }
    return total;
}

}  // namespace himuv
