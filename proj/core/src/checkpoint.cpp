#include "cql/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cql/errors.hpp"
#include "cql/kv_config.hpp"

namespace cql {

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f64s(std::span<const double> vs) {
        for (double v : vs) f64(v);
    }
    void raw(std::span<const char> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void f64s(std::span<double> out) {
        for (double& v : out) v = f64();
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw ParseError("checkpoint is truncated");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void write_layers(Writer& w, std::span<const DenseLayer> layers) {
    for (const auto& l : layers) {
        w.f64s(l.weights.data());
        w.f64s(l.biases);
    }
}

void read_layers(Reader& r, std::span<DenseLayer> layers) {
    for (auto& l : layers) {
        r.f64s(l.weights.data());
        r.f64s(l.biases);
    }
}

void write_moments(Writer& w, const std::vector<LayerGradient>& m) {
    for (const auto& l : m) {
        w.f64s(l.weights.data());
        w.f64s(l.biases);
    }
}

void read_moments(Reader& r, std::vector<LayerGradient>& m) {
    for (auto& l : m) {
        r.f64s(l.weights.data());
        r.f64s(l.biases);
    }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
    Writer w;
    w.raw(kCheckpointMagic);
    const auto& shape = c.state.net.shape();
    w.u64(shape.input);
    w.u64(shape.hidden);
    w.u64(shape.actions);
    write_layers(w, c.state.net.layers());
    w.u64(c.state.target.generation);
    write_layers(w, c.state.target.params.layers());
    w.u64(c.state.adam.step);
    w.f64(c.state.adam.beta1);
    w.f64(c.state.adam.beta2);
    w.f64(c.state.adam.epsilon);
    write_moments(w, c.state.adam.first_moment);
    write_moments(w, c.state.adam.second_moment);
    w.u64(c.state.step);
    w.u64(kStateFeatures);
    w.f64s(c.norm.mean);
    w.f64s(c.norm.stddev);
    w.u8(c.binner ? 1 : 0);
    if (c.binner) {
        for (const auto* d : {&c.binner->iv, &c.binner->vp}) {
            w.f64(d->q1);
            w.f64(d->q2);
            w.f64(d->q3);
        }
        w.u64(c.binner->iv.fit_count);
        w.u64(c.binner->vp.fit_count);
    }
    const std::string cfg = train_config_to_text(c.config);
    w.u64(cfg.size());
    w.raw(cfg);
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.str(4) != std::string_view(kCheckpointMagic, 4)) {
        throw ParseError("not a checkpoint: bad magic bytes");
    }
    QNetShape shape;
    shape.input = r.u64();
    shape.hidden = r.u64();
    shape.actions = r.u64();
    constexpr std::uint64_t kSane = 1u << 20;
    if (shape.input == 0 || shape.hidden == 0 || shape.actions == 0 || shape.input > kSane ||
        shape.hidden > kSane || shape.actions > kSane) {
        throw ParseError("checkpoint network dimensions are invalid");
    }
    Checkpoint c;
    c.state.net = DuelingQNet(shape);
    read_layers(r, c.state.net.layers());
    c.state.target.generation = r.u64();
    c.state.target.params = DuelingQNet(shape);
    read_layers(r, c.state.target.params.layers());
    c.state.adam = AdamState::for_layers(c.state.net.layers());
    c.state.adam.step = r.u64();
    c.state.adam.beta1 = r.f64();
    c.state.adam.beta2 = r.f64();
    c.state.adam.epsilon = r.f64();
    read_moments(r, c.state.adam.first_moment);
    read_moments(r, c.state.adam.second_moment);
    c.state.step = r.u64();
    if (r.u64() != kStateFeatures) throw ParseError("checkpoint feature count mismatch");
    r.f64s(c.norm.mean);
    r.f64s(c.norm.stddev);
    const auto has_binner = r.u8();
    if (has_binner > 1) throw ParseError("checkpoint binner flag is invalid");
    if (has_binner) {
        QuartileBinner b;
        for (auto* d : {&b.iv, &b.vp}) {
            d->q1 = r.f64();
            d->q2 = r.f64();
            d->q3 = r.f64();
        }
        b.iv.fit_count = r.u64();
        b.vp.fit_count = r.u64();
        c.binner = b;
    }
    const auto n = r.u64();
    if (n > bytes.size()) throw ParseError("checkpoint is truncated");
    auto cfg = KeyValueConfig::parse(r.str(n), "<checkpoint config>");
    c.config = train_config_from_config(cfg);
    if (!r.done()) throw ParseError("checkpoint has trailing bytes");
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace cql
