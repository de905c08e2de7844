#include "smm/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace smm {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'M', 'M', 'C', 'K', 'P', 'T', '\0'};

class Writer {
public:
    template <typename T>
    void pod(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&v);
        out_.append(p, sizeof v);
    }
    void bytes(const std::string& s) {
        pod<std::uint64_t>(s.size());
        out_ += s;
    }
    void vector(const Vector& v) {
        pod<std::uint64_t>(static_cast<std::uint64_t>(v.size()));
        out_.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(Scalar));
    }
    std::string& str() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

    template <typename T>
    T pod() {
        T v;
        need(sizeof v);
        std::memcpy(&v, data_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    std::string bytes() {
        const auto n = pod<std::uint64_t>();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    Vector vector() {
        const auto n = pod<std::uint64_t>();
        need(n * sizeof(Scalar));
        Vector v(static_cast<Index>(n));
        std::memcpy(v.data(), data_.data() + pos_, n * sizeof(Scalar));
        pos_ += n * sizeof(Scalar);
        return v;
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }
    std::size_t position() const { return pos_; }

private:
    void need(std::uint64_t n) const {
        if (n > data_.size() - pos_) throw FormatError("checkpoint", "truncated " + what_);
    }
    const std::string& data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const char* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::string encode_params(const ParamSet& params) {
    Writer w;
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        w.bytes(params.names()[i]);
        const Tensor& t = params.at(i);
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (Index d : t.shape()) w.pod<std::int64_t>(d);
        w.vector(t.data());
    }
    return w.str();
}

ParamSet decode_params(const std::string& payload) {
    Reader r(payload, "parameter section");
    ParamSet ps;
    const auto n = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.bytes();
        const auto rank = r.pod<std::uint32_t>();
        Shape shape;
        for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.pod<std::int64_t>());
        Vector v = r.vector();
        if (v.size() != numel(shape)) throw FormatError("checkpoint", "parameter '" + name + "' size mismatch");
        ps.add(std::move(name), Tensor::from(std::move(shape), std::move(v), true));
    }
    if (!r.done()) throw FormatError("checkpoint", "trailing bytes in parameter section");
    return ps;
}

std::string encode_adam(const AdamState& s) {
    Writer w;
    w.pod<double>(static_cast<double>(s.options.learning_rate));
    w.pod<double>(static_cast<double>(s.options.beta1));
    w.pod<double>(static_cast<double>(s.options.beta2));
    w.pod<double>(static_cast<double>(s.options.eps));
    w.pod<std::int64_t>(s.step);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(s.first_moment.size()));
    for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
        w.vector(s.first_moment[i]);
        w.vector(s.second_moment[i]);
    }
    return w.str();
}

AdamState decode_adam(const std::string& payload) {
    Reader r(payload, "optimizer section");
    AdamState s;
    s.options.learning_rate = static_cast<Scalar>(r.pod<double>());
    s.options.beta1 = static_cast<Scalar>(r.pod<double>());
    s.options.beta2 = static_cast<Scalar>(r.pod<double>());
    s.options.eps = static_cast<Scalar>(r.pod<double>());
    s.step = r.pod<std::int64_t>();
    const auto n = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
        s.first_moment.push_back(r.vector());
        s.second_moment.push_back(r.vector());
    }
    if (!r.done()) throw FormatError("checkpoint", "trailing bytes in optimizer section");
    return s;
}

std::string encode_rng(const RngStreams& rng) {
    std::ostringstream os;
    os << "master_seed=" << rng.master_seed() << '\n';
    for (const auto& [name, state] : rng.serialize()) os << name << '=' << state << '\n';
    return os.str();
}

RngStreams decode_rng(const std::string& payload) {
    std::istringstream in(payload);
    std::string line;
    std::uint64_t master = 0;
    std::map<std::string, std::string> states;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("checkpoint", "malformed RNG section");
        const std::string key = line.substr(0, eq);
        if (key == "master_seed") master = std::stoull(line.substr(eq + 1));
        else states[key] = line.substr(eq + 1);
    }
    return RngStreams::deserialize(master, states);
}

// key=value lines for the architecture descriptors.
std::map<std::string, std::string> kv_lines(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("checkpoint", "malformed architecture line '" + line + "'");
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

const std::string& field(const std::map<std::string, std::string>& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("checkpoint", "architecture field '" + key + "' missing");
    return it->second;
}

int int_field(const std::map<std::string, std::string>& kv, const std::string& key) {
    return std::stoi(field(kv, key));
}

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

}  // namespace

std::string to_text(const ScoreArch& arch) {
    std::ostringstream os;
    if (const auto* m = std::get_if<MlpScoreArch>(&arch.body)) {
        os << "body=mlp\ndata_dim=" << m->data_dim << "\nhidden=" << join(m->hidden)
           << "\nactivation=" << activation_name(m->activation) << '\n';
    } else {
        const auto& c = std::get<ConvScoreArch>(arch.body);
        os << "body=conv\nchannels=" << c.channels << "\nheight=" << c.height << "\nwidth=" << c.width
           << "\nwidths=" << join(c.widths) << "\nactivation=" << activation_name(c.activation) << '\n';
    }
    os << "paired=" << (arch.paired ? 1 : 0) << "\ntime_dim=" << arch.time_dim << '\n';
    return os.str();
}

std::string to_text(const GeneratorArch& arch) {
    std::ostringstream os;
    if (const auto* m = std::get_if<MlpGeneratorArch>(&arch)) {
        os << "body=mlp\nlatent_dim=" << m->latent_dim << "\nhidden=" << join(m->hidden)
           << "\ndata_dim=" << m->data_dim << "\nactivation=" << activation_name(m->activation) << '\n';
    } else {
        const auto& c = std::get<ConvGeneratorArch>(arch);
        os << "body=conv\nlatent_dim=" << c.latent_dim << "\nchannels=" << c.channels << "\nheight=" << c.height
           << "\nwidth=" << c.width << "\nbase_channels=" << c.base_channels
           << "\nactivation=" << activation_name(c.activation) << '\n';
    }
    return os.str();
}

ScoreArch parse_score_arch(const std::string& text) {
    const auto kv = kv_lines(text);
    ScoreArch arch;
    if (field(kv, "body") == "mlp") {
        arch.body = MlpScoreArch{int_field(kv, "data_dim"), split_ints(field(kv, "hidden")),
                                 parse_activation(field(kv, "activation"))};
    } else {
        arch.body = ConvScoreArch{int_field(kv, "channels"), int_field(kv, "height"), int_field(kv, "width"),
                                  split_ints(field(kv, "widths")), parse_activation(field(kv, "activation"))};
    }
    arch.paired = int_field(kv, "paired") != 0;
    arch.time_dim = int_field(kv, "time_dim");
    return arch;
}

GeneratorArch parse_generator_arch(const std::string& text) {
    const auto kv = kv_lines(text);
    if (field(kv, "body") == "mlp") {
        return MlpGeneratorArch{int_field(kv, "latent_dim"), split_ints(field(kv, "hidden")),
                                int_field(kv, "data_dim"), parse_activation(field(kv, "activation"))};
    }
    return ConvGeneratorArch{int_field(kv, "latent_dim"), int_field(kv, "channels"),    int_field(kv, "height"),
                             int_field(kv, "width"),      int_field(kv, "base_channels"),
                             parse_activation(field(kv, "activation"))};
}

std::string encode_checkpoint(const TrainerState& state) {
    const std::vector<std::pair<std::string, std::string>> sections = {
        {"config", to_config_text(state.config)},
        {"score.arch", to_text(state.score.arch())},
        {"score.params", encode_params(state.score.params())},
        {"generator.arch", to_text(state.generator.arch())},
        {"generator.params", encode_params(state.generator.params())},
        {"score.adam", encode_adam(state.score_adam)},
        {"generator.adam", encode_adam(state.generator_adam)},
        {"rng", encode_rng(state.rng)},
        {"iteration", std::to_string(state.iteration)},
    };
    Writer w;
    w.str().append(kMagic, sizeof kMagic);
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.pod<std::uint32_t>(sizeof(Scalar));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(sections.size()));
    for (const auto& [name, payload] : sections) {
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.str() += name;
        w.bytes(payload);
    }
    w.pod<std::uint32_t>(crc32_of(w.str().data(), w.str().size()));
    return w.str();
}

TrainerState decode_checkpoint(const std::string& bytes) {
    Reader r(bytes, "checkpoint");
    if (r.raw(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
        throw FormatError("checkpoint", "not a checkpoint (bad magic)");
    }
    const auto version = r.pod<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint", "version " + std::to_string(version) + " is not supported (expected " +
                                            std::to_string(kCheckpointVersion) + ")");
    }
    // Walk the sections first so a short file reports truncation, not a bad checksum.
    const auto scalar_bytes = r.pod<std::uint32_t>();
    const auto count = r.pod<std::uint32_t>();
    std::map<std::string, std::string> sections;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.pod<std::uint32_t>();
        std::string name = r.raw(name_len);
        sections[name] = r.bytes();
    }
    const std::size_t body = r.position();
    if (bytes.size() < body + sizeof(std::uint32_t)) throw FormatError("checkpoint", "truncated checkpoint (no checksum)");
    if (bytes.size() > body + sizeof(std::uint32_t)) throw FormatError("checkpoint", "trailing bytes after sections");
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + body, sizeof stored_crc);
    if (crc32_of(bytes.data(), body) != stored_crc) throw FormatError("checkpoint", "checksum mismatch");
    if (scalar_bytes != sizeof(Scalar)) {
        throw FormatError("checkpoint", "written with " + std::to_string(scalar_bytes * 8) +
                                            "-bit floats, this build uses " + std::to_string(sizeof(Scalar) * 8));
    }
    const auto section = [&](const std::string& name) -> const std::string& {
        auto it = sections.find(name);
        if (it == sections.end()) throw FormatError("checkpoint", "section '" + name + "' missing");
        return it->second;
    };

    TrainingConfig config = parse_config_text(section("config"));
    ScoreNet score(parse_score_arch(section("score.arch")), decode_params(section("score.params")));
    GeneratorNet generator(parse_generator_arch(section("generator.arch")),
                           decode_params(section("generator.params")));
    NoiseSchedule schedule = build_schedule(config.steps, config.beta_min, config.beta_max);
    return TrainerState{std::move(config),
                        std::move(schedule),
                        std::move(score),
                        std::move(generator),
                        decode_adam(section("score.adam")),
                        decode_adam(section("generator.adam")),
                        decode_rng(section("rng")),
                        std::stoll(section("iteration"))};
}

void save_checkpoint(const TrainerState& state, const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(state);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("checkpoint", "cannot write '" + tmp.string() + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("checkpoint", "write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

TrainerState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint", "cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace smm
