#include "aif/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "aif/errors.hpp"

namespace aif {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'I', 'F', 'C', 'K', 'P', 'T', '\0'};

std::uint8_t dtype_code(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat: return 0;
        case torch::kDouble: return 1;
        case torch::kLong: return 2;
        default: throw FormatError(std::string("unsupported checkpoint dtype ") + c10::toString(t));
    }
}

torch::ScalarType dtype_from_code(std::uint8_t c) {
    switch (c) {
        case 0: return torch::kFloat;
        case 1: return torch::kDouble;
        case 2: return torch::kLong;
        default: throw FormatError("unknown dtype code " + std::to_string(c));
    }
}

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get_value(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("truncated checkpoint");
    return v;
}

}  // namespace

void TensorArchive::add(const std::string& name, const torch::Tensor& tensor) {
    if (name.size() > 0xFFFF) throw FormatError("tensor name too long");
    dtype_code(tensor.scalar_type());
    auto copy = tensor.detach().to(torch::kCPU).contiguous().clone();
    for (auto& [n, t] : entries_) {
        if (n == name) {
            t = copy;
            return;
        }
    }
    entries_.emplace_back(name, std::move(copy));
}

bool TensorArchive::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const torch::Tensor& TensorArchive::get(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    throw FormatError("checkpoint has no tensor '" + name + "'");
}

void TensorArchive::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
    std::uint64_t offset = 0;
    for (const auto& [name, t] : entries_) {
        put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint8_t>(out, dtype_code(t.scalar_type()));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dim()));
        for (auto d : t.sizes()) put<std::int64_t>(out, d);
        const auto nbytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
        put<std::uint64_t>(out, offset);
        put<std::uint64_t>(out, nbytes);
        offset += nbytes;
    }
    for (const auto& [name, t] : entries_) {
        out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    }
    if (!out) throw FormatError("failed writing " + path.string());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError(path.string() + " is not a checkpoint (bad magic)");
    }
    const auto version = get_value<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = get_value<std::uint32_t>(in);
    struct Record {
        std::string name;
        torch::ScalarType dtype;
        std::vector<std::int64_t> dims;
        std::uint64_t offset;
        std::uint64_t nbytes;
    };
    std::vector<Record> table;
    table.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Record r;
        r.name.resize(get_value<std::uint16_t>(in));
        in.read(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        r.dtype = dtype_from_code(get_value<std::uint8_t>(in));
        const auto ndim = get_value<std::uint8_t>(in);
        for (int d = 0; d < ndim; ++d) r.dims.push_back(get_value<std::int64_t>(in));
        r.offset = get_value<std::uint64_t>(in);
        r.nbytes = get_value<std::uint64_t>(in);
        table.push_back(std::move(r));
    }
    const auto payload_start = in.tellg();
    TensorArchive archive;
    for (const auto& r : table) {
        auto t = torch::empty(r.dims, torch::TensorOptions().dtype(r.dtype));
        if (static_cast<std::uint64_t>(t.numel() * t.element_size()) != r.nbytes) {
            throw FormatError("shape table entry '" + r.name + "' disagrees with its byte count");
        }
        in.seekg(payload_start + static_cast<std::streamoff>(r.offset));
        in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(r.nbytes));
        if (!in) throw FormatError("truncated payload for '" + r.name + "'");
        archive.entries_.emplace_back(r.name, std::move(t));
    }
    return archive;
}

void archive_module(TensorArchive& archive, const torch::nn::Module& module, const std::string& prefix) {
    for (const auto& p : module.named_parameters(true)) archive.add(prefix + p.key(), p.value());
    for (const auto& b : module.named_buffers(true)) archive.add(prefix + b.key(), b.value());
}

void restore_module(const TensorArchive& archive, torch::nn::Module& module, const std::string& prefix) {
    torch::NoGradGuard no_grad;
    auto copy_into = [&](const std::string& name, torch::Tensor& dst) {
        const auto& src = archive.get(prefix + name);
        if (src.sizes() != dst.sizes()) {
            throw FormatError("shape mismatch restoring '" + prefix + name + "'");
        }
        dst.copy_(src);
    };
    for (auto& p : module.named_parameters(true)) copy_into(p.key(), p.value());
    for (auto& b : module.named_buffers(true)) copy_into(b.key(), b.value());
}

void save_module(const torch::nn::Module& module, const std::filesystem::path& path) {
    TensorArchive a;
    archive_module(a, module, "");
    a.save(path);
}

void load_module(torch::nn::Module& module, const std::filesystem::path& path) {
    restore_module(TensorArchive::load(path), module, "");
}

void archive_adam(TensorArchive& archive, torch::optim::Adam& optimizer, const std::string& prefix) {
    auto& state = optimizer.state();
    std::size_t index = 0;
    for (const auto& group : optimizer.param_groups()) {
        for (const auto& p : group.params()) {
            const auto key = prefix + std::to_string(index++) + ".";
            const auto it = state.find(p.unsafeGetTensorImpl());
            if (it == state.end()) continue;
            const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
            archive.add(key + "step", torch::tensor(s.step(), torch::kLong));
            archive.add(key + "exp_avg", s.exp_avg());
            archive.add(key + "exp_avg_sq", s.exp_avg_sq());
            if (s.max_exp_avg_sq().defined()) archive.add(key + "max_exp_avg_sq", s.max_exp_avg_sq());
        }
    }
}

void restore_adam(const TensorArchive& archive, torch::optim::Adam& optimizer, const std::string& prefix) {
    auto& state = optimizer.state();
    state.clear();
    std::size_t index = 0;
    for (const auto& group : optimizer.param_groups()) {
        for (const auto& p : group.params()) {
            const auto key = prefix + std::to_string(index++) + ".";
            if (!archive.contains(key + "step")) continue;
            auto s = std::make_unique<torch::optim::AdamParamState>();
            s->step(archive.get(key + "step").item<std::int64_t>());
            const auto& m = archive.get(key + "exp_avg");
            if (m.sizes() != p.sizes()) throw FormatError("optimizer state " + key + " does not match its parameter");
            s->exp_avg(m.clone());
            s->exp_avg_sq(archive.get(key + "exp_avg_sq").clone());
            if (archive.contains(key + "max_exp_avg_sq")) s->max_exp_avg_sq(archive.get(key + "max_exp_avg_sq").clone());
            state[p.unsafeGetTensorImpl()] = std::move(s);
        }
    }
}

}  // namespace aif
