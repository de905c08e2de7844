#include "smm/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace smm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("config", "key '" + key + "': expected " + expected + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& value) {
    double v = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end) bad_value(key, value, "a number");
    return v;
}

std::int64_t to_int(const std::string& key, const std::string& value) {
    std::int64_t v = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end) bad_value(key, value, "an integer");
    return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end) bad_value(key, value, "a non-negative integer");
    return v;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    bad_value(key, value, "true/false");
}

void require(bool ok, const std::string& key, const std::string& message) {
    if (!ok) throw ConfigError("config", "key '" + key + "' out of range: " + message);
}

const char* variant_name(VariantKind v) {
    switch (v) {
        case VariantKind::Original: return "original";
        case VariantKind::NoisyTarget: return "variant2";
        case VariantKind::PairedInput: return "variant3";
    }
    return "original";
}

// Keys that switch a tagged choice must be applied before their sub-keys.
int priority(const std::string& key) { return key == "corruption" || key == "dataset.kind" ? 0 : 1; }

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void set_config_value(TrainingConfig& c, const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    if (key == "variant") {
        if (value == "original") c.variant = VariantKind::Original;
        else if (value == "variant2" || value == "noisy_target") c.variant = VariantKind::NoisyTarget;
        else if (value == "variant3" || value == "paired_input") c.variant = VariantKind::PairedInput;
        else bad_value(key, value, "original|variant2|variant3");
    } else if (key == "corruption") {
        if (value == "zero_mean") c.corruption = ZeroMean{};
        else if (value == "nonzero_mean") c.corruption = NonZeroMean{};
        else if (value == "spatial") {
            if (!std::holds_alternative<SpatialDiffusion>(c.corruption)) c.corruption = SpatialDiffusion{};
        } else bad_value(key, value, "zero_mean|nonzero_mean|spatial");
    } else if (key == "corruption.ratio" || key == "corruption.steps_per_t") {
        auto* s = std::get_if<SpatialDiffusion>(&c.corruption);
        if (!s) throw ConfigError("config", "key '" + key + "' requires corruption = spatial");
        if (key == "corruption.ratio") {
            s->ratio = to_double(key, value);
            require(s->ratio > 0 && s->ratio <= 0.25, key, "must lie in (0, 0.25]");
        } else {
            const auto n = to_int(key, value);
            require(n >= 1, key, "must be >= 1");
            s->steps_per_t = static_cast<int>(n);
        }
    } else if (key == "T") {
        const auto n = to_int(key, value);
        require(n >= 1 && n <= 100000, key, "must be >= 1");
        c.steps = static_cast<int>(n);
    } else if (key == "beta_min") {
        c.beta_min = to_double(key, value);
        require(c.beta_min > 0 && c.beta_min < 1, key, "must lie in (0,1)");
    } else if (key == "beta_max") {
        c.beta_max = to_double(key, value);
        require(c.beta_max > 0 && c.beta_max < 1, key, "must lie in (0,1)");
    } else if (key == "lr") {
        c.learning_rate = to_double(key, value);
        require(c.learning_rate > 0, key, "must be > 0");
    } else if (key == "batch_size") {
        const auto n = to_int(key, value);
        require(n >= 1, key, "must be >= 1");
        c.batch_size = static_cast<int>(n);
    } else if (key == "duplicate_fake") {
        c.duplicate_fake = to_bool(key, value);
    } else if (key == "hflip") {
        c.hflip = to_bool(key, value);
    } else if (key == "iterations") {
        c.iterations = to_int(key, value);
        require(c.iterations >= 0, key, "must be >= 0");
    } else if (key == "seed") {
        c.seed = to_uint(key, value);
    } else if (key == "sum_score_losses") {
        c.sum_score_losses = to_bool(key, value);
    } else if (key == "dataset.kind") {
        if (value == "gauss8") {
            if (!std::holds_alternative<Gauss8>(c.dataset.kind)) c.dataset.kind = Gauss8{};
        } else if (value == "two_moons") {
            if (!std::holds_alternative<TwoMoons>(c.dataset.kind)) c.dataset.kind = TwoMoons{};
        } else if (value == "swiss_roll") {
            if (!std::holds_alternative<SwissRoll2D>(c.dataset.kind)) c.dataset.kind = SwissRoll2D{};
        } else if (value == "mnist") {
            if (!std::holds_alternative<Mnist>(c.dataset.kind)) c.dataset.kind = Mnist{};
        } else {
            bad_value(key, value, "gauss8|two_moons|swiss_roll|mnist");
        }
    } else if (key == "dataset.radius" || key == "dataset.std") {
        auto* g = std::get_if<Gauss8>(&c.dataset.kind);
        if (!g) throw ConfigError("config", "key '" + key + "' requires dataset.kind = gauss8");
        const double v = to_double(key, value);
        if (key == "dataset.radius") {
            require(v > 0, key, "must be > 0");
            g->radius = v;
        } else {
            require(v >= 0, key, "must be >= 0");
            g->std = v;
        }
    } else if (key == "dataset.noise") {
        const double v = to_double(key, value);
        require(v >= 0, key, "must be >= 0");
        if (auto* m = std::get_if<TwoMoons>(&c.dataset.kind)) m->noise = v;
        else if (auto* s = std::get_if<SwissRoll2D>(&c.dataset.kind)) s->noise = v;
        else throw ConfigError("config", "key '" + key + "' requires dataset.kind = two_moons or swiss_roll");
    } else if (key == "dataset.path" || key == "dataset.digit") {
        auto* m = std::get_if<Mnist>(&c.dataset.kind);
        if (!m) throw ConfigError("config", "key '" + key + "' requires dataset.kind = mnist");
        if (key == "dataset.path") {
            m->path = value;
        } else if (value == "any") {
            m->digit.reset();
        } else {
            const auto d = to_int(key, value);
            require(d >= 0 && d <= 9, key, "must be a digit 0-9 or 'any'");
            m->digit = static_cast<int>(d);
        }
    } else if (key == "dataset.size") {
        c.dataset.size = to_int(key, value);
        require(c.dataset.size >= 1, key, "must be >= 1");
    } else if (key == "dataset.normalize") {
        c.dataset.normalize = to_bool(key, value);
    } else if (key == "model.hidden") {
        const auto n = to_int(key, value);
        require(n >= 1, key, "must be >= 1");
        c.model.hidden = static_cast<int>(n);
    } else if (key == "model.latent_dim") {
        const auto n = to_int(key, value);
        require(n >= 0, key, "must be >= 0 (0 = default)");
        c.model.latent_dim = static_cast<int>(n);
    } else if (key == "model.activation") {
        if (value != "relu" && value != "leaky_relu" && value != "tanh") bad_value(key, value, "relu|leaky_relu|tanh");
        c.model.activation = parse_activation(value);
    } else if (key == "checkpoint") {
        c.checkpoint_path = value;
    } else if (key == "metrics") {
        c.metrics_path = value;
    } else if (key == "log_every") {
        c.log_every = to_int(key, value);
        require(c.log_every >= 1, key, "must be >= 1");
    } else if (key == "checkpoint_every") {
        c.checkpoint_every = to_int(key, value);
        require(c.checkpoint_every >= 0, key, "must be >= 0");
    } else if (key == "eval_samples") {
        c.eval_samples = to_int(key, value);
        require(c.eval_samples >= 2, key, "must be >= 2");
    } else if (key == "record_wall_time") {
        c.record_wall_time = to_bool(key, value);
    } else {
        throw ConfigError("config", "unknown key '" + key + "'");
    }
}

void validate(const TrainingConfig& c) {
    if (c.beta_min > c.beta_max) throw ConfigError("config", "key 'beta_min' out of range: exceeds beta_max");
    if (c.hflip && !is_image(c.dataset)) throw ConfigError("config", "key 'hflip' requires an image dataset");
    if (std::holds_alternative<SpatialDiffusion>(c.corruption) && !is_image(c.dataset)) {
        throw ConfigError("config", "key 'corruption' = spatial requires an image dataset");
    }
    if (const auto* m = std::get_if<Mnist>(&c.dataset.kind); m && m->path.empty()) {
        throw ConfigError("config", "key 'dataset.path' is required for mnist");
    }
}

TrainingConfig parse_config_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config", "line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return priority(a.first) < priority(b.first); });
    TrainingConfig config;
    for (const auto& [key, value] : entries) set_config_value(config, key, value);
    validate(config);
    return config;
}

TrainingConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot read config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string to_config_text(const TrainingConfig& c) {
    std::ostringstream os;
    os << "variant = " << variant_name(c.variant) << '\n';
    if (std::holds_alternative<ZeroMean>(c.corruption)) {
        os << "corruption = zero_mean\n";
    } else if (std::holds_alternative<NonZeroMean>(c.corruption)) {
        os << "corruption = nonzero_mean\n";
    } else {
        const auto& s = std::get<SpatialDiffusion>(c.corruption);
        os << "corruption = spatial\n"
           << "corruption.ratio = " << format_double(s.ratio) << '\n'
           << "corruption.steps_per_t = " << s.steps_per_t << '\n';
    }
    os << "T = " << c.steps << '\n'
       << "beta_min = " << format_double(c.beta_min) << '\n'
       << "beta_max = " << format_double(c.beta_max) << '\n'
       << "lr = " << format_double(c.learning_rate) << '\n'
       << "batch_size = " << c.batch_size << '\n'
       << "duplicate_fake = " << (c.duplicate_fake ? "true" : "false") << '\n'
       << "hflip = " << (c.hflip ? "true" : "false") << '\n'
       << "iterations = " << c.iterations << '\n'
       << "seed = " << c.seed << '\n'
       << "sum_score_losses = " << (c.sum_score_losses ? "true" : "false") << '\n';
    if (const auto* g = std::get_if<Gauss8>(&c.dataset.kind)) {
        os << "dataset.kind = gauss8\n"
           << "dataset.radius = " << format_double(g->radius) << '\n'
           << "dataset.std = " << format_double(g->std) << '\n';
    } else if (const auto* m = std::get_if<TwoMoons>(&c.dataset.kind)) {
        os << "dataset.kind = two_moons\n"
           << "dataset.noise = " << format_double(m->noise) << '\n';
    } else if (const auto* s = std::get_if<SwissRoll2D>(&c.dataset.kind)) {
        os << "dataset.kind = swiss_roll\n"
           << "dataset.noise = " << format_double(s->noise) << '\n';
    } else {
        const auto& mn = std::get<Mnist>(c.dataset.kind);
        os << "dataset.kind = mnist\n"
           << "dataset.path = " << mn.path << '\n'
           << "dataset.digit = " << (mn.digit ? std::to_string(*mn.digit) : "any") << '\n';
    }
    os << "dataset.size = " << c.dataset.size << '\n'
       << "dataset.normalize = " << (c.dataset.normalize ? "true" : "false") << '\n'
       << "model.hidden = " << c.model.hidden << '\n'
       << "model.latent_dim = " << c.model.latent_dim << '\n'
       << "model.activation = " << activation_name(c.model.activation) << '\n';
    if (!c.checkpoint_path.empty()) os << "checkpoint = " << c.checkpoint_path << '\n';
    if (!c.metrics_path.empty()) os << "metrics = " << c.metrics_path << '\n';
    os << "log_every = " << c.log_every << '\n'
       << "checkpoint_every = " << c.checkpoint_every << '\n'
       << "eval_samples = " << c.eval_samples << '\n'
       << "record_wall_time = " << (c.record_wall_time ? "true" : "false") << '\n';
    return os.str();
}

}  // namespace smm
