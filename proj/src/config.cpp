#include "himuv/config.hpp"

#include "himuv/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <type_traits>

namespace himuv {

const char* to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::config: return "config";
    case ErrorKind::consistency: return "consistency";
    case ErrorKind::input: return "input";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::version: return "version";
    case ErrorKind::degenerate: return "degenerate";
    }
    return "unknown";
}

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text)
{
    if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1") {
            return true;
        }
        if (text == "false" || text == "0") {
            return false;
        }
        throw Error(ErrorKind::config, "config key '" + key + "' expects true/false, got '" + text + "'");
    } else if constexpr (std::is_floating_point_v<T>) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != text.size()) {
            throw Error(ErrorKind::config, "config key '" + key + "' expects a number, got '" + text + "'");
        }
        return v;
    } else {
        T v{};
        const auto* first = text.data();
        const auto* last = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc{} || ptr != last) {
            throw Error(ErrorKind::config, "config key '" + key + "' expects an integer, got '" + text + "'");
        }
        return v;
    }
}

template <typename T>
std::string format_value(const T& v)
{
    std::ostringstream os;
    if constexpr (std::is_same_v<T, bool>) {
        os << (v ? "true" : "false");
    } else if constexpr (std::is_floating_point_v<T>) {
        // shortest text that parses back to the same double
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        os << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    } else {
        os << v;
    }
    return os.str();
}

template <typename T>
ConfigKey key(std::string name, std::string help, T TrainingConfig::*member)
{
    ConfigKey k;
    k.name = name;
    k.help = std::move(help);
    k.set = [member, name](TrainingConfig& c, const std::string& text) {
        c.*member = parse_value<T>(name, text);
    };
    k.get = [member](const TrainingConfig& c) { return format_value(c.*member); };
    return k;
}

std::vector<ConfigKey> build_keys()
{
    using C = TrainingConfig;
    return {
        key("lr", "initial Adam learning rate", &C::lr),
        key("batch_size", "utterances per step", &C::batch_size),
        key("total_steps", "training steps", &C::total_steps),
        key("adam_beta1", "Adam first-moment decay", &C::adam_beta1),
        key("adam_beta2", "Adam second-moment decay", &C::adam_beta2),
        key("adam_eps", "Adam denominator epsilon", &C::adam_eps),
        key("weight_decay", "decoupled weight decay", &C::weight_decay),
        key("warmup_steps", "linear warm-up steps before inverse-sqrt decay", &C::warmup_steps),
        key("grad_clip", "global gradient-norm clip (0 disables)", &C::grad_clip),
        key("alpha", "duration/pitch predictor loss weight", &C::alpha),
        key("gamma", "posterior-mean predictor loss weight", &C::gamma),
        key("delta", "feature-matching loss weight", &C::delta),
        key("beta_g_max", "final global KL weight", &C::beta_g_max),
        key("beta_l_max", "final local KL weight", &C::beta_l_max),
        key("kl_ramp_start", "step where the KL ramp begins", &C::kl_ramp_start),
        key("kl_ramp_end", "step where the KL ramp reaches its maximum", &C::kl_ramp_end),
        key("adversarial", "enable the discriminator when the variant supports it", &C::adversarial),
        key("d_model", "text encoder / decoder width", &C::d_model),
        key("n_heads", "self-attention heads in the backbone", &C::n_heads),
        key("encoder_blocks", "text encoder blocks", &C::encoder_blocks),
        key("decoder_blocks", "mel decoder blocks", &C::decoder_blocks),
        key("ffn_filter", "convolutional feed-forward width", &C::ffn_filter),
        key("ffn_kernel", "convolutional feed-forward kernel", &C::ffn_kernel),
        key("predictor_hidden", "duration/pitch LSTM width", &C::predictor_hidden),
        key("predictor_layers", "duration/pitch LSTM layers", &C::predictor_layers),
        key("pitch_kernel", "pitch embedding kernel", &C::pitch_kernel),
        key("d_enc", "prosody encoder feature width", &C::d_enc),
        key("gru_hidden", "per-direction Bi-GRU width", &C::gru_hidden),
        key("attn_heads", "cross-attention heads", &C::attn_heads),
        key("latent_global", "global latent dimension", &C::latent_global),
        key("latent_local", "local latent dimension", &C::latent_local),
        key("mel_encoder_blocks", "gated convolution blocks in the mel encoder", &C::mel_encoder_blocks),
        key("mel_encoder_kernel", "mel encoder kernel", &C::mel_encoder_kernel),
        key("hidden_encoder_kernel", "hidden encoder kernel", &C::hidden_encoder_kernel),
        key("disc_layers", "discriminator feature layers", &C::disc_layers),
        key("disc_channels", "discriminator channels", &C::disc_channels),
        key("disc_slope", "discriminator leaky-ReLU slope", &C::disc_slope),
        key("sample_rate", "audio sample rate in Hz", &C::sample_rate),
        key("hop", "STFT hop in samples", &C::hop),
        key("win", "STFT window / FFT size in samples", &C::win),
        key("fmin", "lowest mel filter edge in Hz", &C::fmin),
        key("fmax", "highest mel filter edge in Hz", &C::fmax),
        key("log_floor", "linear mel clamp before log", &C::log_floor),
        key("pitch_fmin", "pitch tracker lower bound in Hz", &C::pitch_fmin),
        key("pitch_fmax", "pitch tracker upper bound in Hz", &C::pitch_fmax),
        key("voicing_threshold", "normalized autocorrelation needed to call a frame voiced",
            &C::voicing_threshold),
        key("duration_tolerance", "max |sum(d) - M| repaired by clipping/padding", &C::duration_tolerance),
        key("seed", "random seed", &C::seed),
        key("checkpoint_every", "steps between checkpoints", &C::checkpoint_every),
        key("log_every", "steps between progress log lines (metrics.csv gets every step)", &C::log_every),
    };
}

}  // namespace

const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys = build_keys();
    return keys;
}

void set_config_value(TrainingConfig& config, const std::string& key, const std::string& value)
{
    for (const auto& k : config_keys()) {
        if (k.name == key) {
            k.set(config, value);
            return;
        }
    }
    throw Error(ErrorKind::config, "unknown config key '" + key + "'");
}

void TrainingConfig::validate() const
{
    auto fail = [](const std::string& what) { throw Error(ErrorKind::config, "invalid config: " + what); };
    if (!(kl_ramp_start >= 0 && kl_ramp_start < kl_ramp_end && kl_ramp_end <= total_steps)) {
        fail("require 0 <= kl_ramp_start < kl_ramp_end <= total_steps");
    }
    if (alpha < 0 || gamma < 0 || delta < 0 || beta_g_max < 0 || beta_l_max < 0) {
        fail("loss weights must be non-negative");
    }
    if (lr <= 0 || batch_size < 1 || total_steps < 1) {
        fail("lr, batch_size and total_steps must be positive");
    }
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
        fail("d_model must be a positive multiple of n_heads");
    }
    if (d_enc < 1 || attn_heads < 1 || d_enc % attn_heads != 0) {
        fail("d_enc must be a positive multiple of attn_heads");
    }
    if (latent_global < 1 || latent_local < 1 || gru_hidden < 1 || predictor_hidden < 1) {
        fail("latent and recurrent widths must be positive");
    }
    if (ffn_kernel % 2 == 0 || pitch_kernel % 2 == 0 || mel_encoder_kernel % 2 == 0 ||
        hidden_encoder_kernel % 2 == 0) {
        fail("convolution kernels must be odd");
    }
    if (disc_layers < 2) {
        fail("disc_layers must be at least 2");
    }
    if (hop < 1 || win < hop || (win & (win - 1)) != 0) {
        fail("win must be a power of two no smaller than hop");
    }
    if (!(fmax > fmin) || fmax > sample_rate / 2.0 || log_floor <= 0) {
        fail("mel band edges or log floor out of range");
    }
    if (!(pitch_fmax > pitch_fmin) || pitch_fmin <= 0) {
        fail("pitch search range invalid");
    }
    if (warmup_steps < 0 || grad_clip < 0 || predictor_layers < 1 || encoder_blocks < 0 ||
        decoder_blocks < 0 || duration_tolerance < 0 || checkpoint_every < 1 || log_every < 1) {
        fail("counts out of range (checkpoint_every, log_every and predictor_layers must be at least 1)");
    }
}

TrainingConfig parse_config(const std::string& text, TrainingConfig base)
{
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::config,
                        "config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot read config file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string format_config(const TrainingConfig& config)
{
    std::string out;
    for (const auto& k : config_keys()) {
        out += k.name + " = " + k.get(config) + "\n";
    }
    return out;
}

void save_config(const TrainingConfig& config, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write config file " + path.string());
    }
    out << format_config(config);
}

TrainingConfig toy_config()
{
    TrainingConfig c;
    c.lr = 0.003;
    c.batch_size = 8;
    c.total_steps = 2000;
    c.warmup_steps = 100;
    c.kl_ramp_start = 100;
    c.kl_ramp_end = 1000;
    c.d_model = 48;
    c.n_heads = 2;
    c.encoder_blocks = 2;
    c.decoder_blocks = 2;
    c.ffn_filter = 128;
    c.predictor_hidden = 32;
    c.d_enc = 32;
    c.gru_hidden = 32;
    c.disc_channels = 8;
    c.checkpoint_every = 500;
    c.log_every = 10;
    return c;
}

}  // namespace himuv
