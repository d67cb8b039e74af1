#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace aif {

/// Versioned binary tensor container shared by every trained component.
///
/// Layout, all integers little-endian:
///
///     magic      8 bytes   "AIFCKPT\0"
///     version    u32       kCheckpointVersion
///     count      u32       number of tensors
///     shape table, one record per tensor:
///         name_len u16, name bytes (UTF-8)
///         dtype    u8      0 = float32, 1 = float64, 2 = int64
///         ndim     u8
///         dims     i64 x ndim
///         offset   u64     byte offset into the payload
///         nbytes   u64
///     payload    raw contiguous tensor data in table order
class TensorArchive {
public:
    static constexpr std::uint32_t kCheckpointVersion = 1;

    void add(const std::string& name, const torch::Tensor& tensor);
    bool contains(const std::string& name) const;
    /// Throws FormatError when missing.
    const torch::Tensor& get(const std::string& name) const;
    const std::vector<std::pair<std::string, torch::Tensor>>& entries() const { return entries_; }

    void save(const std::filesystem::path& path) const;
    static TensorArchive load(const std::filesystem::path& path);

private:
    std::vector<std::pair<std::string, torch::Tensor>> entries_;
};

/// Adds every parameter and buffer of `module` under `prefix`.
void archive_module(TensorArchive& archive, const torch::nn::Module& module, const std::string& prefix);

/// Copies archived values into `module`; names and shapes must match exactly.
void restore_module(const TensorArchive& archive, torch::nn::Module& module, const std::string& prefix);

void save_module(const torch::nn::Module& module, const std::filesystem::path& path);

/// Adam moments and step counts of every parameter, in parameter order.
void archive_adam(TensorArchive& archive, torch::optim::Adam& optimizer, const std::string& prefix);
/// Throws FormatError when the archived state does not fit the optimizer.
void restore_adam(const TensorArchive& archive, torch::optim::Adam& optimizer, const std::string& prefix);
void load_module(torch::nn::Module& module, const std::filesystem::path& path);

}  // namespace aif
