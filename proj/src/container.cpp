#include "dinf/container.hpp"

#include <cstring>
#include <fstream>

namespace dinf {
namespace {

constexpr char kMagic[5] = {'D', 'I', 'N', 'F', '1'};
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint32_t read_u32() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t read_u64() {
        require(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::span<const std::uint8_t> read_span(std::size_t n) {
        require(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void require(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw ContainerError("container truncated");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = kFnvOffset;
    for (std::uint8_t b : bytes) h = (h ^ b) * kFnvPrime;
    return h;
}

std::uint64_t fnv1a64(std::string_view text) {
    return fnv1a64(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::F64: return 8;
        case DType::F32: return 4;
        case DType::I8: return 1;
        case DType::U64: return 8;
    }
    throw ContainerError("unknown dtype tag");
}

std::uint64_t Record::element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) n *= d;
    return n;
}

void ArtifactContainer::add(Record rec) {
    if (index_.count(rec.name)) {
        throw ContainerError("duplicate record name: " + rec.name);
    }
    if (rec.payload.size() != rec.element_count() * dtype_size(rec.dtype)) {
        throw ContainerError("payload size mismatch for record: " + rec.name);
    }
    index_.emplace(rec.name, records_.size());
    records_.push_back(std::move(rec));
}

void ArtifactContainer::add_f64(std::string name, std::vector<std::uint64_t> dims,
                                std::span<const double> data) {
    Record r;
    r.name = std::move(name);
    r.dtype = DType::F64;
    r.dims = std::move(dims);
    r.payload.resize(data.size() * 8);
    std::memcpy(r.payload.data(), data.data(), r.payload.size());
    add(std::move(r));
}

void ArtifactContainer::add_u64(std::string name, std::vector<std::uint64_t> dims,
                                std::span<const std::uint64_t> data) {
    Record r;
    r.name = std::move(name);
    r.dtype = DType::U64;
    r.dims = std::move(dims);
    r.payload.resize(data.size() * 8);
    std::memcpy(r.payload.data(), data.data(), r.payload.size());
    add(std::move(r));
}

void ArtifactContainer::add_i8(std::string name, std::vector<std::uint64_t> dims,
                               std::span<const std::int8_t> data) {
    Record r;
    r.name = std::move(name);
    r.dtype = DType::I8;
    r.dims = std::move(dims);
    r.payload.resize(data.size());
    std::memcpy(r.payload.data(), data.data(), r.payload.size());
    add(std::move(r));
}

void ArtifactContainer::add_f32(std::string name, std::vector<std::uint64_t> dims,
                                std::span<const float> data) {
    Record r;
    r.name = std::move(name);
    r.dtype = DType::F32;
    r.dims = std::move(dims);
    r.payload.resize(data.size() * 4);
    std::memcpy(r.payload.data(), data.data(), r.payload.size());
    add(std::move(r));
}

void ArtifactContainer::add_scalar_u64(std::string name, std::uint64_t value) {
    add_u64(std::move(name), {1}, std::span<const std::uint64_t>(&value, 1));
}

void ArtifactContainer::add_string(std::string name, std::string_view text) {
    add_i8(std::move(name), {text.size()},
           std::span<const std::int8_t>(reinterpret_cast<const std::int8_t*>(text.data()),
                                        text.size()));
}

void ArtifactContainer::add_vector(std::string name, const Vec& v) {
    add_f64(std::move(name), {static_cast<std::uint64_t>(v.size())},
            std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

void ArtifactContainer::add_matrix(std::string name, const Mat& m) {
    add_f64(std::move(name),
            {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
            std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

bool ArtifactContainer::has(std::string_view name) const { return index_.count(name) > 0; }

const Record& ArtifactContainer::get(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContainerError("missing record: " + std::string(name));
    return records_[it->second];
}

std::vector<double> ArtifactContainer::get_f64(std::string_view name) const {
    const Record& r = get(name);
    if (r.dtype != DType::F64) throw ContainerError("record is not f64: " + std::string(name));
    std::vector<double> out(r.element_count());
    std::memcpy(out.data(), r.payload.data(), r.payload.size());
    return out;
}

std::vector<std::uint64_t> ArtifactContainer::get_u64(std::string_view name) const {
    const Record& r = get(name);
    if (r.dtype != DType::U64) throw ContainerError("record is not u64: " + std::string(name));
    std::vector<std::uint64_t> out(r.element_count());
    std::memcpy(out.data(), r.payload.data(), r.payload.size());
    return out;
}

std::vector<std::int8_t> ArtifactContainer::get_i8(std::string_view name) const {
    const Record& r = get(name);
    if (r.dtype != DType::I8) throw ContainerError("record is not i8: " + std::string(name));
    std::vector<std::int8_t> out(r.element_count());
    std::memcpy(out.data(), r.payload.data(), r.payload.size());
    return out;
}

std::uint64_t ArtifactContainer::get_scalar_u64(std::string_view name) const {
    auto v = get_u64(name);
    if (v.size() != 1) throw ContainerError("record is not scalar: " + std::string(name));
    return v[0];
}

std::string ArtifactContainer::get_string(std::string_view name) const {
    auto v = get_i8(name);
    return std::string(reinterpret_cast<const char*>(v.data()), v.size());
}

Vec ArtifactContainer::get_vector(std::string_view name) const {
    const Record& r = get(name);
    if (r.dims.size() != 1) throw ContainerError("record is not rank-1: " + std::string(name));
    auto data = get_f64(name);
    Vec v(static_cast<Eigen::Index>(data.size()));
    std::memcpy(v.data(), data.data(), data.size() * 8);
    return v;
}

Mat ArtifactContainer::get_matrix(std::string_view name) const {
    const Record& r = get(name);
    if (r.dims.size() != 2) throw ContainerError("record is not rank-2: " + std::string(name));
    auto data = get_f64(name);
    Mat m(static_cast<Eigen::Index>(r.dims[0]), static_cast<Eigen::Index>(r.dims[1]));
    std::memcpy(m.data(), data.data(), data.size() * 8);
    return m;
}

std::vector<std::uint8_t> ArtifactContainer::serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + sizeof(kMagic));
    for (const Record& r : records_) {
        append_u32(out, static_cast<std::uint32_t>(r.name.size()));
        out.insert(out.end(), r.name.begin(), r.name.end());
        append_u32(out, static_cast<std::uint32_t>(r.dtype));
        append_u32(out, static_cast<std::uint32_t>(r.dims.size()));
        for (std::uint64_t d : r.dims) append_u64(out, d);
        out.insert(out.end(), r.payload.begin(), r.payload.end());
    }
    append_u64(out, fnv1a64(std::span<const std::uint8_t>(out.data(), out.size())));
    return out;
}

ArtifactContainer ArtifactContainer::deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic) + 8) throw ContainerError("container too short");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw ContainerError("bad magic");
    }
    const std::size_t body_size = bytes.size() - 8;
    Reader tail(bytes.subspan(body_size));
    const std::uint64_t stored = tail.read_u64();
    const std::uint64_t actual = fnv1a64(bytes.subspan(0, body_size));
    if (stored != actual) throw ContainerError("checksum mismatch");

    ArtifactContainer c;
    Reader r(bytes.subspan(sizeof(kMagic), body_size - sizeof(kMagic)));
    while (r.remaining() > 0) {
        Record rec;
        const std::uint32_t name_len = r.read_u32();
        auto name_bytes = r.read_span(name_len);
        rec.name.assign(reinterpret_cast<const char*>(name_bytes.data()), name_bytes.size());
        const std::uint32_t tag = r.read_u32();
        if (tag > 3) throw ContainerError("unknown dtype tag in record: " + rec.name);
        rec.dtype = static_cast<DType>(tag);
        const std::uint32_t rank = r.read_u32();
        rec.dims.resize(rank);
        for (std::uint32_t i = 0; i < rank; ++i) rec.dims[i] = r.read_u64();
        auto payload = r.read_span(rec.element_count() * dtype_size(rec.dtype));
        rec.payload.assign(payload.begin(), payload.end());
        c.add(std::move(rec));
    }
    return c;
}

void ArtifactContainer::write_file(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContainerError("write failed: " + path.string());
}

ArtifactContainer ArtifactContainer::read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContainerError("cannot open for reading: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace dinf
