#include "toonfield/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "toonfield/errors.hpp"

namespace toonfield {
namespace {

constexpr char kMagic[8] = {'T', 'F', 'C', 'K', 'P', 'T', '\0', '\1'};

uint8_t dtype_code(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat32: return 0;
        case torch::kFloat64: return 1;
        case torch::kInt64: return 2;
        case torch::kBool: return 3;
        default: throw ArgumentError(std::string("cannot checkpoint dtype ") + c10::toString(t));
    }
}

torch::ScalarType dtype_from_code(uint8_t code, const std::string& section) {
    switch (code) {
        case 0: return torch::kFloat32;
        case 1: return torch::kFloat64;
        case 2: return torch::kInt64;
        case 3: return torch::kBool;
        default: throw IntegrityError(section, "unknown dtype code " + std::to_string(code));
    }
}

class Writer {
public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void put_bytes(const void* data, size_t n) { buf_.append(static_cast<const char*>(data), n); }
    void put_string(const std::string& s) {
        put<uint32_t>(uint32_t(s.size()));
        buf_.append(s);
    }
    void put_tensor(const torch::Tensor& t) {
        auto c = t.detach().cpu().contiguous();
        put<uint8_t>(dtype_code(c.scalar_type()));
        put<uint32_t>(uint32_t(c.dim()));
        for (auto d : c.sizes()) put<int64_t>(d);
        const uint64_t nbytes = c.numel() * c.element_size();
        put<uint64_t>(nbytes);
        put_bytes(c.data_ptr(), nbytes);
    }
    std::string& str() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const char* data, size_t size, std::string section) : data_(data), size_(size), section_(std::move(section)) {}

    template <typename T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    const char* take(size_t n) {
        if (n > size_ - pos_) throw IntegrityError(section_, "unexpected end of data");
        const char* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    std::string get_string() {
        const auto n = get<uint32_t>();
        return std::string(take(n), n);
    }
    torch::Tensor get_tensor() {
        const auto dtype = dtype_from_code(get<uint8_t>(), section_);
        const auto ndim = get<uint32_t>();
        if (ndim > 16) throw IntegrityError(section_, "implausible tensor rank");
        std::vector<int64_t> shape(ndim);
        int64_t numel = 1;
        for (auto& d : shape) {
            d = get<int64_t>();
            if (d < 0) throw IntegrityError(section_, "negative tensor dimension");
            numel *= d;
        }
        const auto nbytes = get<uint64_t>();
        auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
        if (nbytes != uint64_t(numel) * t.element_size()) throw IntegrityError(section_, "tensor byte count mismatch");
        std::memcpy(t.data_ptr(), take(nbytes), nbytes);
        return t;
    }
    bool done() const { return pos_ == size_; }
    void set_section(std::string section) { section_ = std::move(section); }
    size_t remaining() const { return size_ - pos_; }

private:
    const char* data_;
    size_t size_;
    size_t pos_ = 0;
    std::string section_;
};

uint32_t crc(const std::string& payload) {
    return uint32_t(crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), uInt(payload.size())));
}

void put_section(Writer& out, const std::string& name, const std::string& payload) {
    out.put_string(name);
    out.put<uint64_t>(payload.size());
    out.put_bytes(payload.data(), payload.size());
    out.put<uint32_t>(crc(payload));
}

bool tensors_equal(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.defined() != b.defined()) return false;
    if (!a.defined()) return true;
    return a.scalar_type() == b.scalar_type() && a.sizes() == b.sizes() && torch::equal(a, b);
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
    if (format_version != o.format_version || step != o.step || stage != o.stage || rng_seed != o.rng_seed ||
        rng_counter != o.rng_counter || config != o.config || metadata != o.metadata ||
        arrays.size() != o.arrays.size() || !tensors_equal(sbm_raw, o.sbm_raw))
        return false;
    for (const auto& [name, t] : arrays) {
        auto it = o.arrays.find(name);
        if (it == o.arrays.end() || !tensors_equal(t, it->second)) return false;
    }
    return true;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    Writer out;
    out.put_bytes(kMagic, sizeof(kMagic));
    out.put<uint32_t>(ckpt.format_version);

    Writer header;
    header.put<int64_t>(ckpt.step);
    header.put<int64_t>(ckpt.stage);
    header.put<uint64_t>(ckpt.rng_seed);
    header.put<uint64_t>(ckpt.rng_counter);
    put_section(out, "header", header.str());
    put_section(out, "config", ckpt.config.dump());
    put_section(out, "metadata", ckpt.metadata.dump());

    Writer arrays;
    arrays.put<uint64_t>(ckpt.arrays.size());
    for (const auto& [name, t] : ckpt.arrays) {
        arrays.put_string(name);
        arrays.put_tensor(t);
    }
    put_section(out, "arrays", arrays.str());

    Writer sbm;
    sbm.put<uint8_t>(ckpt.sbm_raw.defined() ? 1 : 0);
    if (ckpt.sbm_raw.defined()) sbm.put_tensor(ckpt.sbm_raw);
    put_section(out, "sbm", sbm.str());
    put_section(out, "end", "");
    return std::move(out.str());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader top(bytes.data(), bytes.size(), "preamble");
    if (bytes.size() < sizeof(kMagic) || std::memcmp(top.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0)
        throw IntegrityError("preamble", "not a checkpoint file (bad magic)");
    Checkpoint ckpt;
    ckpt.format_version = top.get<uint32_t>();
    if (ckpt.format_version != Checkpoint::kFormatVersion) throw UnsupportedVersionError(ckpt.format_version);

    bool seen_header = false, seen_config = false, seen_arrays = false, seen_end = false;
    while (!seen_end) {
        if (top.done()) throw IntegrityError("end", "missing end marker (file truncated)");
        top.set_section("section table");
        const auto name = top.get_string();
        top.set_section(name);
        const auto length = top.get<uint64_t>();
        if (length > top.remaining() || top.remaining() - length < 4) throw IntegrityError(name, "truncated section");
        const std::string payload(top.take(length), length);
        const auto stored_crc = top.get<uint32_t>();
        if (stored_crc != crc(payload)) throw IntegrityError(name, "checksum mismatch");

        Reader in(payload.data(), payload.size(), name);
        if (name == "header") {
            ckpt.step = in.get<int64_t>();
            ckpt.stage = in.get<int64_t>();
            ckpt.rng_seed = in.get<uint64_t>();
            ckpt.rng_counter = in.get<uint64_t>();
            seen_header = true;
        } else if (name == "config" || name == "metadata") {
            try {
                (name == "config" ? ckpt.config : ckpt.metadata) = nlohmann::json::parse(payload);
            } catch (const nlohmann::json::exception& e) {
                throw IntegrityError(name, e.what());
            }
            in.take(payload.size());
            seen_config = seen_config || name == "config";
        } else if (name == "arrays") {
            const auto count = in.get<uint64_t>();
            for (uint64_t i = 0; i < count; ++i) {
                auto key = in.get_string();
                ckpt.arrays[key] = in.get_tensor();
            }
            seen_arrays = true;
        } else if (name == "sbm") {
            if (in.get<uint8_t>()) ckpt.sbm_raw = in.get_tensor();
        } else if (name == "end") {
            seen_end = true;
        } else {
            throw IntegrityError(name, "unknown section");
        }
        if (!in.done()) throw IntegrityError(name, "trailing bytes in section");
    }
    if (!seen_header) throw IntegrityError("header", "missing section");
    if (!seen_config) throw IntegrityError("config", "missing section");
    if (!seen_arrays) throw IntegrityError("arrays", "missing section");
    if (!top.done()) throw IntegrityError("end", "trailing bytes after end marker");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write checkpoint " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw Error("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module) {
    for (const auto& p : module.named_parameters(true)) ckpt.arrays[prefix + "." + p.key()] = p.value().detach().cpu().clone();
    for (const auto& b : module.named_buffers(true)) ckpt.arrays[prefix + "." + b.key()] = b.value().detach().cpu().clone();
}

void restore_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module) {
    torch::NoGradGuard guard;
    auto restore = [&](const std::string& key, torch::Tensor target) {
        auto it = ckpt.arrays.find(prefix + "." + key);
        if (it == ckpt.arrays.end()) throw IntegrityError("arrays", "missing array '" + prefix + "." + key + "'");
        if (it->second.sizes() != target.sizes())
            throw ConfigError("array '" + prefix + "." + key + "' has a shape that does not match the model");
        target.copy_(it->second);
    };
    for (auto& p : module.named_parameters(true)) restore(p.key(), p.value());
    for (auto& b : module.named_buffers(true)) restore(b.key(), b.value());
}

}  // namespace toonfield
