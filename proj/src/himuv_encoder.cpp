#include "himuv/himuv_encoder.hpp"

#include "himuv/error.hpp"

#include <stdexcept>

namespace himuv {

MelEncoder::MelEncoder(ParameterStore& store, const TrainingConfig& config)
    : in_proj_(store, "himuv.mel_encoder.in_proj", kMelBins, config.d_enc)
{
    for (std::int64_t b = 0; b < config.mel_encoder_blocks; ++b) {
        blocks_.emplace_back(store, "himuv.mel_encoder.block" + std::to_string(b), config.d_enc,
                             config.mel_encoder_kernel);
    }
}

Var MelEncoder::operator()(const Var& mel) const
{
    Var h = ag::relu(in_proj_(mel));
    for (const auto& block : blocks_) {
        h = block(h);
    }
    return h;
}

void reparameterize(const Var& raw, Eigen::Index latent, const Matrix& eps, Var& mu, Var& sigma, Var& z)
{
    if (eps.rows() != raw.rows() || eps.cols() != latent) {
        throw std::invalid_argument("noise shape does not match the latent shape");
    }
    mu = ag::slice_cols(raw, 0, latent);
    sigma = ag::add_scalar(ag::softplus(ag::slice_cols(raw, latent, latent)), kSigmaFloor);
    z = ag::add(mu, ag::mul(sigma, ag::constant(eps)));
}

GlobalPosterior::GlobalPosterior(ParameterStore& store, const TrainingConfig& config)
    : gru_(store, "himuv.global_gru", config.d_enc, config.gru_hidden, 2),
      proj_(store, "himuv.global_proj", 2 * config.gru_hidden, 2 * config.latent_global),
      latent_(config.latent_global)
{
}

LatentGlobal GlobalPosterior::operator()(const Var& mel_features, const Matrix& eps) const
{
    LatentGlobal out;
    out.eps = eps;
    const Var pooled = ag::mean_rows(gru_(mel_features));
    reparameterize(proj_(pooled), latent_, eps, out.mu, out.sigma, out.z);
    return out;
}

HiddenEncoder::HiddenEncoder(ParameterStore& store, const TrainingConfig& config, Eigen::Index input_width)
    : conv1_(store, "himuv.hidden_encoder.conv1", input_width, config.d_enc, config.hidden_encoder_kernel),
      conv2_(store, "himuv.hidden_encoder.conv2", config.d_enc, config.d_enc, config.hidden_encoder_kernel),
      norm1_(store, "himuv.hidden_encoder.norm1", config.d_enc),
      norm2_(store, "himuv.hidden_encoder.norm2", config.d_enc),
      input_width_(input_width)
{
}

Var HiddenEncoder::operator()(const Var& x) const
{
    const Var h = ag::relu(norm1_(conv1_(x)));
    return ag::relu(norm2_(conv2_(h)));
}

LocalPosterior::LocalPosterior(ParameterStore& store, const TrainingConfig& config)
    : attention_(store, "himuv.attention", config.d_enc, config.d_enc, config.d_enc, config.attn_heads),
      gru_(store, "himuv.local_gru", config.d_enc, config.gru_hidden, 2),
      proj_(store, "himuv.local_proj", 2 * config.gru_hidden, 2 * config.latent_local),
      latent_(config.latent_local)
{
}

LatentLocal LocalPosterior::operator()(const Var& hidden, const Var& mel_features, const Matrix& eps) const
{
    LatentLocal out;
    out.eps = eps;
    out.hidden = hidden;
    const Var attended = attention_(hidden, mel_features, &out.attention);
    reparameterize(proj_(gru_(attended)), latent_, eps, out.mu, out.sigma, out.z);
    return out;
}

PosteriorMeanPredictor::PosteriorMeanPredictor(ParameterStore& store, const TrainingConfig& config)
    : gru_(store, "himuv.posterior_mean.gru", config.d_enc, config.gru_hidden, 2),
      proj_(store, "himuv.posterior_mean.proj", 2 * config.gru_hidden, config.latent_local)
{
}

Var PosteriorMeanPredictor::operator()(const Var& hidden) const
{
    return proj_(gru_(ag::detach(hidden)));
}

Var assemble_prosody(const Var& z_global, const Var& z_local, Eigen::Index rows)
{
    std::vector<Var> parts;
    if (z_global.defined()) {
        if (z_global.rows() != 1) {
            throw std::invalid_argument("assemble_prosody: global latent must be a single row");
        }
        parts.push_back(repeat_row(z_global, rows));
    }
    if (z_local.defined()) {
        if (z_local.rows() != rows) {
            throw std::invalid_argument("assemble_prosody: local latent row count mismatch");
        }
        parts.push_back(z_local);
    }
    if (parts.empty()) {
        return ag::constant(Matrix(rows, 0));
    }
    return parts.size() == 1 ? parts[0] : ag::concat_cols(parts);
}

Var kl_standard_normal(const Var& mu, const Var& sigma)
{
    if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols()) {
        throw std::invalid_argument("kl_standard_normal: shape mismatch");
    }
    if ((sigma.value().array() <= 0.0).any()) {
        throw std::domain_error("kl_standard_normal: sigma must be strictly positive");
    }
    const Var var = ag::square(sigma);
    const Var terms = ag::sub(ag::add_scalar(ag::add(ag::square(mu), var), -1.0), ag::log(var));
    return ag::scale(ag::sum(terms), 0.5);
}

Var posterior_mean_loss(const Var& mu_l, const Var& mu_hat)
{
    if (mu_l.rows() != mu_hat.rows() || mu_l.cols() != mu_hat.cols()) {
        throw Error(ErrorKind::consistency, "posterior_mean_loss: shape mismatch");
    }
    const Var sq = ag::square(ag::sub(ag::detach(mu_l), mu_hat));
    return ag::scale(ag::sum(sq), 1.0 / static_cast<double>(mu_l.cols()));
}

}  // namespace himuv
