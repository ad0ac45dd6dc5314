#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dinf/common.hpp"

namespace dinf {

enum class DType : std::uint32_t { F64 = 0, F32 = 1, I8 = 2, U64 = 3 };

std::size_t dtype_size(DType t);

// Binary artifact file. Layout:
//   magic "DINF1"
//   per record: name length (u32 LE), UTF-8 name, dtype tag (u32 LE),
//               rank (u32 LE), dims (u64 LE each), raw LE payload
//   trailing u64 LE checksum (FNV-1a 64) of all preceding bytes
struct Record {
    std::string name;
    DType dtype = DType::F64;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> payload;

    std::uint64_t element_count() const;
};

class ArtifactContainer {
public:
    void add(Record rec);

    void add_f64(std::string name, std::vector<std::uint64_t> dims, std::span<const double> data);
    void add_u64(std::string name, std::vector<std::uint64_t> dims,
                 std::span<const std::uint64_t> data);
    void add_i8(std::string name, std::vector<std::uint64_t> dims,
                std::span<const std::int8_t> data);
    void add_f32(std::string name, std::vector<std::uint64_t> dims, std::span<const float> data);

    void add_scalar_u64(std::string name, std::uint64_t value);
    void add_string(std::string name, std::string_view text);
    void add_vector(std::string name, const Vec& v);
    // Matrices are stored column-major with dims {rows, cols}.
    void add_matrix(std::string name, const Mat& m);

    bool has(std::string_view name) const;
    const Record& get(std::string_view name) const;

    std::vector<double> get_f64(std::string_view name) const;
    std::vector<std::uint64_t> get_u64(std::string_view name) const;
    std::vector<std::int8_t> get_i8(std::string_view name) const;
    std::uint64_t get_scalar_u64(std::string_view name) const;
    std::string get_string(std::string_view name) const;
    Vec get_vector(std::string_view name) const;
    Mat get_matrix(std::string_view name) const;

    const std::vector<Record>& records() const { return records_; }

    std::vector<std::uint8_t> serialize() const;
    static ArtifactContainer deserialize(std::span<const std::uint8_t> bytes);

    void write_file(const std::filesystem::path& path) const;
    static ArtifactContainer read_file(const std::filesystem::path& path);

private:
    std::vector<Record> records_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

// FNV-1a 64 over a byte range; also used for config hashing.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace dinf
