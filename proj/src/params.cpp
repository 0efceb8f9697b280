#include "pspool/params.hpp"

#include "pspool/container.hpp"
#include "pspool/errors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pspool {

std::size_t ParameterSet::add(std::string name, Matrix init) {
    if (by_name_.count(name)) throw ConfigError("duplicate parameter " + name);
    by_name_.emplace(name, params_.size());
    params_.push_back({std::move(name), std::move(init)});
    return params_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

bool ParameterSet::all_finite() const {
    for (const auto& p : params_) {
        if (!p.value.allFinite()) return false;
    }
    return true;
}

std::uint64_t ParameterSet::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
        h = fnv1a(p.name, h);
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            auto bits = std::bit_cast<std::uint64_t>(p.value.data()[i]);
            h = fnv1a(std::string_view(reinterpret_cast<const char*>(&bits), sizeof bits), h);
        }
    }
    return h;
}

Gradients zero_gradients(const ParameterSet& params) {
    Gradients g;
    g.reserve(params.size());
    for (const auto& p : params.all()) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    return g;
}

void add_into(Gradients& total, const Gradients& part) {
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += part[i];
}

void scale(Gradients& g, double factor) {
    for (auto& m : g) m *= factor;
}

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * uniform01(rng) - 1.0) * limit;
    return w;
}

Adam::Adam(const ParameterSet& params, AdamOptions options)
    : opt_(options), m_(zero_gradients(params)), v_(zero_gradients(params)) {}

void Adam::step(ParameterSet& params, const Gradients& grads, double lr,
                const std::vector<std::size_t>& trainable) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    auto update = [&](std::size_t i) {
        Matrix& p = params[i].value;
        const Matrix& g = grads[i];
        m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
        v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            const double mhat = m_[i].data()[k] / c1;
            const double vhat = v_[i].data()[k] / c2;
            p.data()[k] -= lr * mhat / (std::sqrt(vhat) + opt_.epsilon);
        }
    };
    if (trainable.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) update(i);
    } else {
        for (std::size_t i : trainable) update(i);
    }
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
    if (in.size() - pos < 4) throw FormatError("truncated checkpoint");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

std::string get_bytes(const std::string& in, std::size_t& pos, std::size_t n) {
    if (in.size() - pos < n) throw FormatError("truncated checkpoint");
    std::string s = in.substr(pos, n);
    pos += n;
    return s;
}

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::string& metadata,
                     const std::filesystem::path& path) {
    std::string out = "PSPW";
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(metadata.size()));
    out += metadata;
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params.all()) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
        put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p.value.data()[i])));
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingCheckpoint(path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string in = ss.str();
    std::size_t pos = 0;
    if (get_bytes(in, pos, 4) != "PSPW") throw FormatError("not a PSPW checkpoint");
    if (get_u32(in, pos) != kCheckpointVersion) throw FormatError("unsupported PSPW version");
    Checkpoint ck;
    ck.metadata = get_bytes(in, pos, get_u32(in, pos));
    const std::uint32_t count = get_u32(in, pos);
    for (std::uint32_t t = 0; t < count; ++t) {
        std::string name = get_bytes(in, pos, get_u32(in, pos));
        std::uint32_t rows = get_u32(in, pos);
        std::uint32_t cols = get_u32(in, pos);
        if (static_cast<std::uint64_t>(rows) * cols * 4 > in.size() - pos) throw FormatError("truncated tensor " + name);
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<float>(get_u32(in, pos));
        ck.params.add(std::move(name), std::move(m));
    }
    if (pos != in.size()) throw FormatError("trailing bytes in checkpoint");
    return ck;
}

std::size_t copy_matching(const ParameterSet& from, ParameterSet& to) {
    std::size_t copied = 0;
    for (const auto& p : from.all()) {
        if (!to.contains(p.name)) continue;
        Matrix& dst = to[to.index_of(p.name)].value;
        if (dst.rows() != p.value.rows() || dst.cols() != p.value.cols()) {
            throw ShapeMismatch("parameter " + p.name + " shape differs");
        }
        dst = p.value;
        ++copied;
    }
    return copied;
}

}  // namespace pspool
