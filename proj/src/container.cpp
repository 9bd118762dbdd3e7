#include "plexquery/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "plexquery/error.hpp"

namespace plexquery {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'X', 'Q'};

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return v;
    }

    double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error(ErrorCode::SchemaError, "truncated container");
    }

    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void Container::put(const std::string& name, std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) throw Error(ErrorCode::ShapeMismatch, "container entry '" + name + "'");
    entries[name] = Matrix{rows, cols, std::move(data)};
}

const Matrix& Container::get(const std::string& name, std::size_t rows, std::size_t cols) const {
    const auto it = entries.find(name);
    if (it == entries.end()) throw Error(ErrorCode::SchemaError, "container lacks entry '" + name + "'");
    if ((rows != 0 && it->second.rows != rows) || (cols != 0 && it->second.cols != cols)) {
        throw Error(ErrorCode::SchemaError, "container entry '" + name + "' has unexpected shape");
    }
    return it->second;
}

void write_container(const Container& c, const std::filesystem::path& path) {
    std::string out(kMagic, 4);
    put_le<std::uint32_t>(out, kContainerVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind));
    put_le<std::uint64_t>(out, c.entries.size());
    for (const auto& [name, m] : c.entries) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_le<std::uint64_t>(out, m.rows);
        put_le<std::uint64_t>(out, m.cols);
        for (double v : m.data) put_f64(out, v);
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

Container read_container(const std::filesystem::path& path, ContainerKind expected) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::MissingFile, path.string());
    Reader r(std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));
    if (r.str(4) != std::string(kMagic, 4)) throw Error(ErrorCode::SchemaError, path.string() + ": bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kContainerVersion) {
        throw Error(ErrorCode::SchemaError, path.string() + ": unsupported version " + std::to_string(version));
    }
    Container c;
    c.kind = static_cast<ContainerKind>(r.get<std::uint32_t>());
    if (c.kind != expected) throw Error(ErrorCode::SchemaError, path.string() + ": wrong container kind");
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t e = 0; e < count; ++e) {
        const std::string name = r.str(r.get<std::uint32_t>());
        Matrix m;
        m.rows = r.get<std::uint64_t>();
        m.cols = r.get<std::uint64_t>();
        m.data.resize(m.rows * m.cols);
        for (auto& v : m.data) v = r.f64();
        c.entries[name] = std::move(m);
    }
    if (!r.done()) throw Error(ErrorCode::SchemaError, path.string() + ": trailing bytes");
    return c;
}

}  // namespace plexquery
