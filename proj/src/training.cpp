#include "himuv/training.hpp"

#include "himuv/arrays.hpp"
#include "himuv/error.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace himuv {

namespace fs = std::filesystem;
using nlohmann::json;

KlWeights kl_weight_schedule(std::int64_t step, const TrainingConfig& config)
{
    if (step < config.kl_ramp_start) {
        return {};
    }
    if (step >= config.kl_ramp_end) {
        return {config.beta_g_max, config.beta_l_max};
    }
    const double f = static_cast<double>(step - config.kl_ramp_start) /
                     static_cast<double>(config.kl_ramp_end - config.kl_ramp_start);
    return {f * config.beta_g_max, f * config.beta_l_max};
}

double learning_rate(std::int64_t step, const TrainingConfig& config)
{
    if (config.warmup_steps <= 0) {
        return config.lr;
    }
    const double s = static_cast<double>(step + 1);
    const double w = static_cast<double>(config.warmup_steps);
    return config.lr * std::min(s / w, std::sqrt(w / s));
}

Var total_generator_loss(const GeneratorLossTerms& terms, double gamma, double delta)
{
    Var total = ag::scalar(0.0);
    if (terms.recon.defined()) total = ag::add(total, terms.recon);
    if (terms.kl.defined()) total = ag::add(total, terms.kl);
    if (terms.post.defined()) total = ag::add(total, ag::scale(terms.post, gamma));
    if (terms.adv.defined()) total = ag::add(total, terms.adv);
    if (terms.fm.defined()) total = ag::add(total, ag::scale(terms.fm, delta));
    return total;
}

namespace {

Var mean_of(const std::vector<Var>& values)
{
    if (values.empty()) {
        return {};
    }
    Var total = values.front();
    for (std::size_t i = 1; i < values.size(); ++i) {
        total = ag::add(total, values[i]);
    }
    return ag::scale(total, 1.0 / static_cast<double>(values.size()));
}

Var pooled_mean(const std::vector<SquaredError>& parts)
{
    Var total = parts.front().sum;
    double count = parts.front().count;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        total = ag::add(total, parts[i].sum);
        count += parts[i].count;
    }
    return ag::scale(total, 1.0 / count);
}

double value_or_zero(const Var& v)
{
    return v.defined() ? v.item() : 0.0;
}

}  // namespace

BatchLosses generator_losses(const Model& model, const std::vector<TrainingExample>& batch, const KlWeights& beta)
{
    if (batch.empty()) {
        throw std::invalid_argument("generator_losses: empty batch");
    }
    const TrainingConfig& cfg = model.config();
    BatchLosses out;
    std::vector<SquaredError> mel_se, dur_se, pitch_se;
    std::vector<Var> kl_g, kl_l, post, adv, fm;
    for (const auto& ex : batch) {
        const Utterance& u = *ex.utterance;
        ForwardResult r = model.forward(u.phoneme_ids, u.mel, u.targets.durations, u.pitch_normalized, ex.noise);
        mel_se.push_back(squared_error(ag::constant(u.mel), r.mel_pred));
        dur_se.push_back(squared_error(ag::constant(duration_to_log_domain(u.targets.durations)), r.log_duration_pred));
        pitch_se.push_back(squared_error(ag::constant(column_vector(u.pitch_normalized)), r.pitch_pred));
        if (r.global) {
            kl_g.push_back(kl_standard_normal(r.global->mu, r.global->sigma));
        }
        if (r.local) {
            kl_l.push_back(kl_standard_normal(r.local->mu, r.local->sigma));
            post.push_back(posterior_mean_loss(r.local->mu, r.mu_hat));
        }
        if (model.uses_adversarial()) {
            const Discriminator& disc = model.discriminator();
            DiscriminatorOutput real;
            {
                ag::NoGradGuard guard;
                real = disc(ag::constant(u.mel));
            }
            const DiscriminatorOutput fake = disc(r.mel_pred);
            adv.push_back(adv_loss_g(fake.score));
            fm.push_back(feature_matching_loss(real.features, fake.features));
        }
        out.forwards.push_back(std::move(r));
    }
    out.mel = pooled_mean(mel_se);
    out.duration = pooled_mean(dur_se);
    out.pitch = pooled_mean(pitch_se);
    out.recon = ag::add(out.mel, ag::scale(ag::add(out.duration, out.pitch), cfg.alpha));
    out.kl_global = mean_of(kl_g);
    out.kl_local = mean_of(kl_l);
    out.post = mean_of(post);
    out.adv_g = mean_of(adv);
    out.fm = mean_of(fm);

    GeneratorLossTerms terms;
    terms.recon = out.recon;
    Var kl = ag::scalar(0.0);
    if (out.kl_global.defined()) kl = ag::add(kl, ag::scale(out.kl_global, beta.beta_g));
    if (out.kl_local.defined()) kl = ag::add(kl, ag::scale(out.kl_local, beta.beta_l));
    terms.kl = kl;
    terms.post = out.post;
    terms.adv = out.adv_g;
    terms.fm = out.fm;
    out.total = total_generator_loss(terms, cfg.gamma, cfg.delta);
    return out;
}

Var discriminator_loss(const Model& model, const std::vector<TrainingExample>& batch,
                       const std::vector<ForwardResult>& forwards)
{
    if (forwards.size() != batch.size()) {
        throw std::invalid_argument("discriminator_loss: forwards do not match the batch");
    }
    const Discriminator& disc = model.discriminator();
    std::vector<Var> losses;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const DiscriminatorOutput real = disc(ag::constant(batch[i].utterance->mel));
        const DiscriminatorOutput fake = disc(ag::detach(forwards[i].mel_pred));
        losses.push_back(adv_loss_d(real.score, fake.score));
    }
    return mean_of(losses);
}

double gradient_norm(const ParameterStore& store)
{
    double sq = 0.0;
    for (const auto& [name, p] : store.all()) {
        if (p.node()->grad.size() != 0) {
            sq += p.node()->grad.squaredNorm();
        }
    }
    return std::sqrt(sq);
}

double clip_gradients(ParameterStore& store, double max_norm)
{
    const double norm = gradient_norm(store);
    if (max_norm > 0 && norm > max_norm) {
        const double factor = max_norm / norm;
        for (const auto& [name, p] : store.all()) {
            if (p.node()->grad.size() != 0) {
                p.node()->grad *= factor;
            }
        }
    }
    return norm;
}

void Adam::step(ParameterStore& store, double lr, const TrainingConfig& config)
{
    ++steps;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps));
    for (const auto& [name, param] : store.all()) {
        Var p = param;
        const Matrix g = p.grad();
        auto [mi, m_new] = first.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
        auto [vi, v_new] = second.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
        Matrix& m = mi->second;
        Matrix& v = vi->second;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        Matrix& w = p.mutable_value();
        const Matrix update =
            ((m / c1).array() / ((v / c2).array().sqrt() + config.adam_eps)).matrix();
        if (config.weight_decay > 0) {
            w -= lr * config.weight_decay * w;
        }
        w -= lr * update;
    }
}

std::string format_metrics_row(const StepMetrics& m)
{
    std::ostringstream out;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << m.step << ',' << m.l_recon << ',' << m.l_kl_g << ',' << m.l_kl_l << ',' << m.l_post << ','
        << m.l_adv_g << ',' << m.l_adv_d << ',' << m.l_fm << ',' << m.beta_g << ',' << m.beta_l << ','
        << m.grad_norm;
    return out.str();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'H', 'M', 'V', 'C', 'K', 'P', 'T', '\0'};

struct TensorRef {
    std::string name;
    const Matrix* value;
};

void append_pod(std::string& out, const void* data, std::size_t bytes)
{
    out.append(static_cast<const char*>(data), bytes);
}

json pitch_stats_json(const PitchStats& s)
{
    return {{"mean", s.mean}, {"sd", s.sd}, {"normalize", s.normalize}, {"voiced_phonemes", s.voiced_phonemes}};
}

PitchStats pitch_stats_from_json(const json& j)
{
    PitchStats s;
    s.mean = j.at("mean").get<double>();
    s.sd = j.at("sd").get<double>();
    s.normalize = j.at("normalize").get<bool>();
    s.voiced_phonemes = j.at("voiced_phonemes").get<std::int64_t>();
    return s;
}

std::map<std::string, Matrix> snapshot(const ParameterStore& store)
{
    std::map<std::string, Matrix> out;
    for (const auto& [name, p] : store.all()) {
        out.emplace(name, p.value());
    }
    return out;
}

void restore(ParameterStore& store, const std::map<std::string, Matrix>& values, const char* section)
{
    if (values.size() != store.all().size()) {
        throw Error(ErrorKind::consistency, std::string("checkpoint ") + section + " has " +
                                                std::to_string(values.size()) + " tensors, model expects " +
                                                std::to_string(store.all().size()));
    }
    for (const auto& [name, param] : store.all()) {
        const auto it = values.find(name);
        if (it == values.end()) {
            throw Error(ErrorKind::consistency, std::string("checkpoint ") + section + " lacks tensor " + name);
        }
        Var p = param;
        if (it->second.rows() != p.rows() || it->second.cols() != p.cols()) {
            throw Error(ErrorKind::consistency, "checkpoint tensor " + name + " has the wrong shape");
        }
        p.mutable_value() = it->second;
    }
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const fs::path& path)
{
    std::vector<std::pair<std::string, const std::map<std::string, Matrix>*>> sections = {
        {"gen", &c.generator},
        {"disc", &c.discriminator},
        {"adam_gen.m", &c.adam_generator.first},
        {"adam_gen.v", &c.adam_generator.second},
        {"adam_disc.m", &c.adam_discriminator.first},
        {"adam_disc.v", &c.adam_discriminator.second},
    };
    std::vector<TensorRef> tensors;
    json index = json::array();
    for (const auto& [section, map] : sections) {
        for (const auto& [name, value] : *map) {
            const std::string full = section + "/" + name;
            tensors.push_back({full, &value});
            index.push_back({{"name", full}, {"rows", value.rows()}, {"cols", value.cols()}});
        }
    }
    json header;
    header["step"] = c.step;
    header["variant"] = to_string(c.variant);
    header["config"] = format_config(c.config);
    header["vocab"] = c.vocab.symbols();
    header["pitch_stats"] = pitch_stats_json(c.stats);
    header["rng_state"] = c.rng_state;
    header["data_order"] = c.data_order;
    header["data_cursor"] = c.data_cursor;
    header["adam_gen_steps"] = c.adam_generator.steps;
    header["adam_disc_steps"] = c.adam_discriminator.steps;
    header["tensors"] = index;
    const std::string text = header.dump();

    std::string bytes;
    append_pod(bytes, kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint32_t version = c.version;
    append_pod(bytes, &version, sizeof version);
    const std::uint64_t length = text.size();
    append_pod(bytes, &length, sizeof length);
    bytes += text;
    for (const auto& t : tensors) {
        append_pod(bytes, t.value->data(), sizeof(double) * static_cast<std::size_t>(t.value->size()));
    }
    write_file_atomic(path, bytes);
}

Checkpoint load_checkpoint(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open checkpoint " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t fixed = sizeof kCheckpointMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
    if (bytes.size() < fixed || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
        throw Error(ErrorKind::parse, path.string() + " is not a checkpoint");
    }
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + sizeof kCheckpointMagic, sizeof version);
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::version, "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                            std::to_string(kCheckpointVersion) + ")");
    }
    std::uint64_t length = 0;
    std::memcpy(&length, bytes.data() + sizeof kCheckpointMagic + sizeof version, sizeof length);
    if (length > bytes.size() - fixed) {
        throw Error(ErrorKind::parse, "checkpoint header is truncated");
    }
    Checkpoint c;
    c.version = version;
    std::size_t offset = fixed + length;
    try {
        const json header = json::parse(bytes.substr(fixed, length));
        c.step = header.at("step").get<std::int64_t>();
        c.variant = parse_variant(header.at("variant").get<std::string>());
        c.config = parse_config(header.at("config").get<std::string>());
        c.vocab = PhonemeVocabulary(header.at("vocab").get<std::vector<std::string>>());
        c.stats = pitch_stats_from_json(header.at("pitch_stats"));
        c.rng_state = header.at("rng_state").get<std::string>();
        c.data_order = header.at("data_order").get<std::vector<std::uint64_t>>();
        c.data_cursor = header.at("data_cursor").get<std::uint64_t>();
        c.adam_generator.steps = header.at("adam_gen_steps").get<std::int64_t>();
        c.adam_discriminator.steps = header.at("adam_disc_steps").get<std::int64_t>();
        for (const auto& t : header.at("tensors")) {
            const std::string full = t.at("name").get<std::string>();
            const auto rows = t.at("rows").get<Eigen::Index>();
            const auto cols = t.at("cols").get<Eigen::Index>();
            const std::size_t n = sizeof(double) * static_cast<std::size_t>(rows * cols);
            if (rows < 0 || cols < 0 || n > bytes.size() - offset) {
                throw Error(ErrorKind::parse, "checkpoint tensor " + full + " is truncated");
            }
            Matrix value(rows, cols);
            std::memcpy(value.data(), bytes.data() + offset, n);
            offset += n;
            const auto slash = full.find('/');
            const std::string section = full.substr(0, slash);
            const std::string name = full.substr(slash + 1);
            std::map<std::string, Matrix>* target = nullptr;
            if (section == "gen") target = &c.generator;
            else if (section == "disc") target = &c.discriminator;
            else if (section == "adam_gen.m") target = &c.adam_generator.first;
            else if (section == "adam_gen.v") target = &c.adam_generator.second;
            else if (section == "adam_disc.m") target = &c.adam_discriminator.first;
            else if (section == "adam_disc.v") target = &c.adam_discriminator.second;
            else throw Error(ErrorKind::parse, "unknown checkpoint section " + section);
            target->emplace(name, std::move(value));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse, "malformed checkpoint header: " + std::string(e.what()));
    }
    if (offset != bytes.size()) {
        throw Error(ErrorKind::parse, "checkpoint has trailing bytes");
    }
    return c;
}

Model model_from_checkpoint(const Checkpoint& checkpoint)
{
    Model model(checkpoint.config, checkpoint.variant, checkpoint.vocab.size());
    restore(model.generator_params(), checkpoint.generator, "generator");
    restore(model.discriminator_params(), checkpoint.discriminator, "discriminator");
    return model;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const TrainingConfig& config, Variant variant, FeatureCache data)
    : data_(std::move(data)), model_(config, variant, data_.vocab.size()), rng_(config.seed)
{
    if (data_.utterances.empty()) {
        throw Error(ErrorKind::input, "training data is empty");
    }
}

Trainer::Trainer(const Checkpoint& checkpoint, FeatureCache data)
    : data_(std::move(data)), model_(model_from_checkpoint(checkpoint))
{
    if (!(checkpoint.vocab == data_.vocab)) {
        throw Error(ErrorKind::consistency, "checkpoint vocabulary differs from the feature cache vocabulary");
    }
    if (data_.utterances.empty()) {
        throw Error(ErrorKind::input, "training data is empty");
    }
    adam_generator_ = checkpoint.adam_generator;
    adam_discriminator_ = checkpoint.adam_discriminator;
    std::istringstream state(checkpoint.rng_state);
    state >> rng_;
    if (!state) {
        throw Error(ErrorKind::parse, "checkpoint random state is malformed");
    }
    step_ = checkpoint.step;
    for (const auto i : checkpoint.data_order) {
        if (i >= data_.utterances.size()) {
            throw Error(ErrorKind::consistency, "checkpoint data order refers to a missing utterance");
        }
        order_.push_back(static_cast<std::size_t>(i));
    }
    cursor_ = static_cast<std::size_t>(checkpoint.data_cursor);
}

std::vector<std::size_t> Trainer::next_batch()
{
    const std::size_t size = std::min<std::size_t>(static_cast<std::size_t>(config().batch_size),
                                                   data_.utterances.size());
    std::vector<std::size_t> batch;
    while (batch.size() < size) {
        if (cursor_ >= order_.size()) {
            order_.resize(data_.utterances.size());
            std::iota(order_.begin(), order_.end(), std::size_t{0});
            std::shuffle(order_.begin(), order_.end(), rng_);
            cursor_ = 0;
        }
        batch.push_back(order_[cursor_++]);
    }
    return batch;
}

std::vector<TrainingExample> Trainer::examples(const std::vector<std::size_t>& indices, std::mt19937_64& rng) const
{
    std::vector<TrainingExample> out;
    for (const auto i : indices) {
        const Utterance& u = data_.utterances.at(i);
        out.push_back({&u, model_.draw_noise(static_cast<Eigen::Index>(u.phoneme_ids.size()), rng)});
    }
    return out;
}

namespace {

void require_finite(double value, const char* term, std::int64_t step)
{
    if (!std::isfinite(value)) {
        throw Error(ErrorKind::numeric, std::string("non-finite ") + term + " at step " + std::to_string(step));
    }
}

}  // namespace

StepMetrics Trainer::step()
{
    const TrainingConfig& cfg = config();
    const std::vector<TrainingExample> batch = examples(next_batch(), rng_);
    const KlWeights beta = kl_weight_schedule(step_, cfg);
    const double lr = learning_rate(step_, cfg);

    StepMetrics m;
    m.step = step_;
    m.beta_g = beta.beta_g;
    m.beta_l = beta.beta_l;
    m.lr = lr;

    ParameterStore& gen = model_.generator_params();
    ParameterStore& disc = model_.discriminator_params();
    gen.zero_grad();
    disc.zero_grad();

    BatchLosses losses = generator_losses(model_, batch, beta);
    if (model_.uses_adversarial()) {
        // Discriminator update on detached fakes, then the generator losses
        // are recomputed against the updated discriminator.
        const Var ld = discriminator_loss(model_, batch, losses.forwards);
        m.l_adv_d = ld.item();
        require_finite(m.l_adv_d, "l_adv_d", step_);
        ld.backward();
        clip_gradients(disc, cfg.grad_clip);
        adam_discriminator_.step(disc, lr, cfg);
        disc.zero_grad();
        gen.zero_grad();
        losses = generator_losses(model_, batch, beta);
    }

    m.l_recon = losses.recon.item();
    m.l_mel = losses.mel.item();
    m.l_kl_g = value_or_zero(losses.kl_global);
    m.l_kl_l = value_or_zero(losses.kl_local);
    m.l_post = value_or_zero(losses.post);
    m.l_adv_g = value_or_zero(losses.adv_g);
    m.l_fm = value_or_zero(losses.fm);
    m.l_final = losses.total.item();
    require_finite(m.l_recon, "l_recon", step_);
    require_finite(m.l_kl_g, "l_kl_g", step_);
    require_finite(m.l_kl_l, "l_kl_l", step_);
    require_finite(m.l_post, "l_post", step_);
    require_finite(m.l_adv_g, "l_adv_g", step_);
    require_finite(m.l_fm, "l_fm", step_);

    losses.total.backward();
    m.grad_norm = clip_gradients(gen, cfg.grad_clip);
    require_finite(m.grad_norm, "grad_norm", step_);
    adam_generator_.step(gen, lr, cfg);
    gen.zero_grad();
    disc.zero_grad();
    ++step_;
    return m;
}

Checkpoint Trainer::checkpoint() const
{
    Checkpoint c;
    c.step = step_;
    c.variant = model_.variant();
    c.config = config();
    c.vocab = data_.vocab;
    c.stats = data_.stats;
    c.generator = snapshot(model_.generator_params());
    c.discriminator = snapshot(model_.discriminator_params());
    c.adam_generator = adam_generator_;
    c.adam_discriminator = adam_discriminator_;
    std::ostringstream state;
    state << rng_;
    c.rng_state = state.str();
    c.data_order.assign(order_.begin(), order_.end());
    c.data_cursor = cursor_;
    return c;
}

namespace {

// Keeps the header and every row logged before `step`, so a resumed run
// continues the file without duplicates.
void truncate_metrics(const fs::path& path, std::int64_t step)
{
    std::ifstream in(path);
    std::ostringstream kept;
    kept << kMetricsHeader << '\n';
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            continue;
        }
        if (line.empty()) continue;
        if (std::stoll(line.substr(0, line.find(','))) < step) {
            kept << line << '\n';
        }
    }
    write_file_atomic(path, kept.str());
}

std::string checkpoint_name(std::int64_t step)
{
    std::ostringstream out;
    out << "ckpt_" << std::setw(7) << std::setfill('0') << step << ".bin";
    return out.str();
}

}  // namespace

fs::path train(const TrainingConfig& config, Variant variant, FeatureCache data, const TrainOptions& options)
{
    config.validate();
    fs::create_directories(options.out_dir);
    const fs::path metrics_path = options.out_dir / "metrics.csv";

    std::optional<Trainer> trainer;
    if (options.resume) {
        const Checkpoint c = load_checkpoint(*options.resume);
        if (c.variant != variant) {
            throw Error(ErrorKind::consistency, std::string("checkpoint variant ") + to_string(c.variant) +
                                                    " differs from the requested variant " + to_string(variant));
        }
        trainer.emplace(c, std::move(data));
        truncate_metrics(metrics_path, c.step);
        spdlog::info("resumed from {} at step {}", options.resume->string(), c.step);
    } else {
        trainer.emplace(config, variant, std::move(data));
        write_file_atomic(metrics_path, std::string(kMetricsHeader) + "\n");
    }
    save_config(trainer->config(), options.out_dir / "config.txt");
    spdlog::info("variant {} with {} generator and {} discriminator parameters", to_string(variant),
                 trainer->model().generator_params().scalar_count(),
                 trainer->model().discriminator_params().scalar_count());

    std::ofstream metrics(metrics_path, std::ios::app);
    if (!metrics) {
        throw Error(ErrorKind::io, "cannot append to " + metrics_path.string());
    }
    const fs::path latest = options.out_dir / "latest.bin";
    auto save = [&] {
        const Checkpoint c = trainer->checkpoint();
        save_checkpoint(c, options.out_dir / checkpoint_name(c.step));
        save_checkpoint(c, latest);
    };
    const std::int64_t every = trainer->config().checkpoint_every;
    const std::int64_t log_every = std::max<std::int64_t>(1, trainer->config().log_every);
    while (trainer->current_step() < config.total_steps) {
        const StepMetrics m = trainer->step();
        metrics << format_metrics_row(m) << '\n';
        metrics.flush();
        if (options.on_step) {
            options.on_step(m);
        }
        if (m.step % log_every == 0) {
            spdlog::info("step {} recon {:.4f} mel {:.4f} kl_g {:.3f} kl_l {:.3f} post {:.4f} adv_g {:.4f} "
                         "adv_d {:.4f} fm {:.4f} lr {:.2e}",
                         m.step, m.l_recon, m.l_mel, m.l_kl_g, m.l_kl_l, m.l_post, m.l_adv_g, m.l_adv_d, m.l_fm,
                         m.lr);
        }
        if (every > 0 && trainer->current_step() % every == 0) {
            save();
        }
    }
    save();
    return latest;
}

}  // namespace himuv
