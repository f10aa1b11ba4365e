// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the memcc Project.

// Checkpoint layout, all little-endian:
//   "MEMC" | u32 version | u32 len, descriptor bytes
//   train config | u64 optimizer step
//   tensors: per layer weight, bias; then first moments; then second moments.
//     each tensor = u32 rank, u32 dims[rank], f32 values
//   "CMEM" trailer

#include <bit>
#include <cstring>

#include "memcc/io.hpp"
#include "memcc/memnet.hpp"

namespace memcc {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'E', 'M', 'C'};
constexpr char kTrailer[4] = {'C', 'M', 'E', 'M'};

class Writer {
public:
    template <class T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    void tensor(const std::vector<std::uint32_t>& shape, const std::vector<float>& values) {
        put(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) put(d);
        raw(values.data(), values.size() * sizeof(float));
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <class T>
    T get() {
        T v;
        std::memcpy(&v, need(sizeof(T)), sizeof(T));
        return v;
    }
    const std::uint8_t* need(std::size_t n) {
        if (bytes_.size() - pos_ < n) throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint is truncated");
        const std::uint8_t* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    void tensor(const std::vector<std::uint32_t>& shape, std::vector<float>& values) {
        const auto rank = get<std::uint32_t>();
        if (rank != shape.size()) throw CheckpointError(CheckpointErrorKind::shape_mismatch, "tensor rank mismatch");
        for (auto d : shape) {
            if (get<std::uint32_t>() != d) throw CheckpointError(CheckpointErrorKind::shape_mismatch, "tensor shape mismatch");
        }
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        values.resize(n);
        std::memcpy(values.data(), need(n * sizeof(float)), n * sizeof(float));
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint32_t> weight_shape(const LayerSpec& l) {
    return {static_cast<std::uint32_t>(l.out_channels), static_cast<std::uint32_t>(l.in_channels),
            static_cast<std::uint32_t>(l.kernel), static_cast<std::uint32_t>(l.kernel)};
}

std::vector<std::uint32_t> bias_shape(const LayerSpec& l) { return {static_cast<std::uint32_t>(l.out_channels)}; }

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.raw(kMagic, 4);
    w.put(kCheckpointVersion);
    const std::string desc = ckpt.params.arch.descriptor();
    w.put(static_cast<std::uint32_t>(desc.size()));
    w.raw(desc.data(), desc.size());

    const TrainConfig& c = ckpt.config;
    w.put(c.learning_rate);
    w.put(static_cast<std::int32_t>(c.batch_size));
    w.put(c.beta1);
    w.put(c.beta2);
    w.put(c.epsilon);
    w.put(static_cast<std::int32_t>(c.epochs));
    w.put(c.seed);
    w.put(static_cast<std::int32_t>(c.checkpoint_interval));
    w.put(c.max_steps);
    w.put(static_cast<std::int32_t>(c.crop_height));
    w.put(static_cast<std::int32_t>(c.crop_width));
    w.put(c.flip_probability);
    w.put(ckpt.optimizer.step);

    for (const auto& layer : ckpt.params.layers) {
        w.tensor(weight_shape(layer.spec), layer.weight);
        w.tensor(bias_shape(layer.spec), layer.bias);
    }
    for (const auto* moments : {&ckpt.optimizer.first_moment, &ckpt.optimizer.second_moment}) {
        for (std::size_t i = 0; i < ckpt.params.layers.size(); ++i) {
            const LayerSpec& l = ckpt.params.layers[i].spec;
            w.tensor(weight_shape(l), (*moments)[i].weight);
            w.tensor(bias_shape(l), (*moments)[i].bias);
        }
    }
    w.raw(kTrailer, 4);
    return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes, const std::optional<Architecture>& expected) {
    Reader r(bytes);
    if (std::memcmp(r.need(4), kMagic, 4) != 0) throw CheckpointError(CheckpointErrorKind::corrupt, "not a checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointErrorKind::version_mismatch,
                              "checkpoint format version " + std::to_string(version) + ", expected " +
                                  std::to_string(kCheckpointVersion));
    }
    const auto len = r.get<std::uint32_t>();
    const auto* d = r.need(len);
    const std::string desc(reinterpret_cast<const char*>(d), len);

    Checkpoint ckpt;
    try {
        ckpt.params = NetworkParams::zeros(Architecture::parse(desc));
    } catch (const DomainError& e) {
        throw CheckpointError(CheckpointErrorKind::corrupt, std::string("bad architecture descriptor: ") + e.what());
    }
    if (expected && !(*expected == ckpt.params.arch)) {
        throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                              "checkpoint architecture '" + desc + "' differs from expected '" + expected->descriptor() + "'");
    }

    TrainConfig& c = ckpt.config;
    c.learning_rate = r.get<double>();
    c.batch_size = r.get<std::int32_t>();
    c.beta1 = r.get<double>();
    c.beta2 = r.get<double>();
    c.epsilon = r.get<double>();
    c.epochs = r.get<std::int32_t>();
    c.seed = r.get<std::uint64_t>();
    c.checkpoint_interval = r.get<std::int32_t>();
    c.max_steps = r.get<std::uint64_t>();
    c.crop_height = r.get<std::int32_t>();
    c.crop_width = r.get<std::int32_t>();
    c.flip_probability = r.get<double>();

    ckpt.optimizer = OptimizerState::zeros_like(ckpt.params);
    ckpt.optimizer.step = r.get<std::uint64_t>();
    for (auto& layer : ckpt.params.layers) {
        r.tensor(weight_shape(layer.spec), layer.weight);
        r.tensor(bias_shape(layer.spec), layer.bias);
    }
    for (auto* moments : {&ckpt.optimizer.first_moment, &ckpt.optimizer.second_moment}) {
        for (std::size_t i = 0; i < ckpt.params.layers.size(); ++i) {
            const LayerSpec& l = ckpt.params.layers[i].spec;
            r.tensor(weight_shape(l), (*moments)[i].weight);
            r.tensor(bias_shape(l), (*moments)[i].bias);
        }
    }
    if (std::memcmp(r.need(4), kTrailer, 4) != 0 || !r.at_end()) {
        throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint trailer missing or trailing bytes");
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    io::write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<Architecture>& expected) {
    const std::string data = io::read_file(path);
    return deserialize_checkpoint(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()), expected);
}

}  // namespace memcc
