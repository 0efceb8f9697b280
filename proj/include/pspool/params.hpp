#pragma once

#include "pspool/mesh.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace pspool {

struct Parameter {
    std::string name;
    Matrix value;
};

/// Named, ordered collection of learnable tensors.
class ParameterSet {
public:
    std::size_t add(std::string name, Matrix init);
    std::size_t index_of(const std::string& name) const;
    bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    std::size_t size() const { return params_.size(); }
    const std::vector<Parameter>& all() const { return params_; }

    std::size_t scalar_count() const;
    bool all_finite() const;
    /// Order-sensitive hash of every value's bit pattern.
    std::uint64_t checksum() const;

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

/// One gradient matrix per parameter, same order and shapes.
using Gradients = std::vector<Matrix>;

Gradients zero_gradients(const ParameterSet& params);
void add_into(Gradients& total, const Gradients& part);
void scale(Gradients& g, double factor);

/// Deterministic uniform draw in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng);

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    explicit Adam(const ParameterSet& params, AdamOptions options = {});
    /// Updates only the parameters whose index is in `trainable` (all when empty).
    void step(ParameterSet& params, const Gradients& grads, double lr,
              const std::vector<std::size_t>& trainable = {});
    std::uint64_t steps() const { return t_; }

private:
    AdamOptions opt_;
    Gradients m_, v_;
    std::uint64_t t_ = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "PSPW" checkpoint, little-endian:
///   magic "PSPW" | u32 version | u32 len, metadata bytes | u32 tensor_count
///   per tensor: u32 len, name bytes | u32 rows | u32 cols | f32 values[rows*cols] (row-major)
void save_checkpoint(const ParameterSet& params, const std::string& metadata,
                     const std::filesystem::path& path);

struct Checkpoint {
    ParameterSet params;
    std::string metadata;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values for every name present in both sets; shapes must agree.
std::size_t copy_matching(const ParameterSet& from, ParameterSet& to);

}  // namespace pspool
