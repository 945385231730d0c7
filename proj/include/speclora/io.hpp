#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "speclora/adapter.hpp"
#include "speclora/linalg.hpp"
#include "speclora/spectral.hpp"
#include "speclora/train.hpp"

namespace speclora::io {

// Tensor file layout (little-endian):
//   0  magic "SPLW"
//   4  u32 version = 1
//   8  u8  dtype (0 = f32, 1 = f64)
//   9  3 reserved zero bytes
//  12  u32 rows
//  16  u32 cols
//  20  u32 reserved zero
//  24  row-major payload
enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::size_t kHeaderSize = 24;
inline constexpr std::uint32_t kFormatVersion = 1;

std::size_t dtype_size(Dtype dtype) noexcept;
std::string_view to_string(Dtype dtype) noexcept;
Dtype parse_dtype(std::string_view s);

/// Serializes to the tensor byte layout. Throws DataError for non-finite
/// values (or values that overflow f32), DimensionError for shapes beyond u32.
std::vector<std::uint8_t> encode_tensor(const DenseMatrix& matrix, Dtype dtype);

/// Parses and validates a tensor image. Throws FormatError (bad magic, version,
/// dtype, reserved byte; carries the byte offset), LengthError (size disagrees
/// with the header) or DataError (first non-finite flat index).
DenseMatrix decode_tensor(std::span<const std::uint8_t> bytes, Dtype* dtype_out = nullptr);

void write_tensor(const std::filesystem::path& path, const DenseMatrix& matrix, Dtype dtype = Dtype::f64);
DenseMatrix read_tensor(const std::filesystem::path& path, Dtype* dtype_out = nullptr);

/// `layer.<index>.<q|k|v|up|down>` optionally followed by `.<identifier>` segments.
bool valid_tensor_name(std::string_view name);

/// Simple glob: `*` matches any run, `?` one character.
bool glob_match(std::string_view pattern, std::string_view text);

struct TensorEntry {
    DenseMatrix data;
    Dtype dtype = Dtype::f64;
};

struct AdapterEntry {
    std::string name;
    AdapterConfig config;
    std::size_t n = 0;
    std::size_t m = 0;
};

/// Directory holding manifest.json and one tensor file per entry.
struct WeightContainer {
    std::map<std::string, TensorEntry> tensors;
    std::map<std::string, AdapterEntry> adapters;

    // Throws FormatError for an invalid name, ConfigError for a duplicate.
    void add(const std::string& name, DenseMatrix data, Dtype dtype = Dtype::f64);
    const DenseMatrix& at(const std::string& name) const;
};

inline constexpr const char* kManifestName = "manifest.json";

WeightContainer load_container(const std::filesystem::path& dir);
void save_container(const std::filesystem::path& dir, const WeightContainer& container);

/// Adds adapter metadata plus `<name>.lora_d`, `.lora_a`, `.lora_b` (and
/// `.spec_m` for svd_exact) tensors to the container.
void store_adapter(WeightContainer& container, const std::string& name, const SpecLoraAdapter& adapter);
SpecLoraAdapter load_adapter(const WeightContainer& container, const std::string& name, DenseMatrix w_frozen);

// Config files. Field names mirror the structs; unknown keys are rejected.
nlohmann::json to_json(const AdapterConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const TaskSpec& spec);
AdapterConfig adapter_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
TaskSpec task_spec_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Shortest round-trip decimal; "inf"/"-inf"/"nan" for non-finite values.
std::string format_real(double x);

nlohmann::json to_json(const SpectralReport& report);
std::string reports_to_csv(std::span<const SpectralReport> reports);

nlohmann::json to_json(const RunResult& result);
std::string loss_curve_csv(const RunResult& result);

nlohmann::json to_json(std::span<const AblationRow> rows);
std::string ablation_to_csv(std::span<const AblationRow> rows);

}  // namespace speclora::io
