#include "himuv/arrays.hpp"

#include "himuv/error.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace himuv {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kF64 = 1;
constexpr std::uint32_t kI64 = 2;

template <typename T>
void put(std::string& out, T v)
{
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

std::string header(std::uint32_t dtype, std::uint64_t rows, std::uint64_t cols)
{
    std::string out = "HMVA";
    put(out, kVersion);
    put(out, dtype);
    put<std::uint32_t>(out, 0);
    put(out, rows);
    put(out, cols);
    return out;
}

struct Parsed {
    std::uint32_t dtype;
    std::uint64_t rows;
    std::uint64_t cols;
    std::string payload;
};

Parsed parse(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot read array file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    if (bytes.size() < 32 || bytes.compare(0, 4, "HMVA") != 0) {
        throw Error(ErrorKind::parse, "not an array file: " + path.string());
    }
    Parsed p{};
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    if (version != kVersion) {
        throw Error(ErrorKind::version, "unsupported array version in " + path.string());
    }
    std::memcpy(&p.dtype, bytes.data() + 8, 4);
    std::memcpy(&p.rows, bytes.data() + 16, 8);
    std::memcpy(&p.cols, bytes.data() + 24, 8);
    if (bytes.size() - 32 != p.rows * p.cols * 8) {
        throw Error(ErrorKind::parse, "truncated array file: " + path.string());
    }
    p.payload = bytes.substr(32);
    return p;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::io, "cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error(ErrorKind::io, "short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_array(const std::filesystem::path& path, const Matrix& values)
{
    std::string out = header(kF64, static_cast<std::uint64_t>(values.rows()), static_cast<std::uint64_t>(values.cols()));
    out.append(reinterpret_cast<const char*>(values.data()), static_cast<std::size_t>(values.size()) * sizeof(double));
    write_file_atomic(path, out);
}

Matrix read_array(const std::filesystem::path& path)
{
    const Parsed p = parse(path);
    if (p.dtype != kF64) {
        throw Error(ErrorKind::parse, "expected a float array in " + path.string());
    }
    Matrix m(static_cast<Eigen::Index>(p.rows), static_cast<Eigen::Index>(p.cols));
    std::memcpy(m.data(), p.payload.data(), p.payload.size());
    return m;
}

void write_int_array(const std::filesystem::path& path, std::span<const std::int64_t> values)
{
    std::string out = header(kI64, values.size(), 1);
    out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(std::int64_t));
    write_file_atomic(path, out);
}

std::vector<std::int64_t> read_int_array(const std::filesystem::path& path)
{
    const Parsed p = parse(path);
    if (p.dtype != kI64) {
        throw Error(ErrorKind::parse, "expected an integer array in " + path.string());
    }
    std::vector<std::int64_t> v(p.rows * p.cols);
    std::memcpy(v.data(), p.payload.data(), p.payload.size());
    return v;
}

}  // namespace himuv
