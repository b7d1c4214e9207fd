#include "actuforge/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace af {

namespace {

constexpr char kMagic[4] = {'A', 'F', 'T', 'N'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

}  // namespace

void save_tensors(const std::string& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), str("cannot open checkpoint for writing: ", path));
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(tensors.items.size()));
    for (const auto& [name, t] : tensors.items) {
        write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<uint32_t>(t.shape().size()));
        for (int e : t.shape()) write_u64(os, static_cast<uint64_t>(e));
        os.write(reinterpret_cast<const char*>(t.values().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    require(os.good(), str("write failed for checkpoint: ", path));
}

NamedTensors load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), str("cannot open checkpoint: ", path));
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, kMagic, 4) == 0,
            str("not an AFTN checkpoint: ", path));
    uint32_t version = read_u32(is);
    require(version == kVersion, str("unsupported AFTN version ", version, " in ", path));
    uint32_t count = read_u32(is);
    NamedTensors out;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t rank = read_u32(is);
        Shape shape(rank);
        for (uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(read_u64(is));
        std::vector<float> vals(shape_numel(shape));
        is.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(float)));
        require(is.good(), str("truncated AFTN checkpoint: ", path));
        out.items.emplace(std::move(name), Tensor::from(std::move(shape), std::move(vals)));
    }
    return out;
}

void save_parameters(const std::string& path, std::vector<Parameter*>& params) {
    NamedTensors t;
    for (auto* p : params) t.items.emplace(p->name, Tensor::from(p->value.shape(), p->value.values()));
    save_tensors(path, t);
}

void load_parameters(const std::string& path, std::vector<Parameter*>& params) {
    NamedTensors t = load_tensors(path);
    for (auto* p : params) {
        auto it = t.items.find(p->name);
        require(it != t.items.end(), str("checkpoint ", path, " is missing tensor '", p->name, "'"));
        require(it->second.shape() == p->value.shape(),
                str("checkpoint tensor '", p->name, "' has shape ", shape_str(it->second.shape()),
                    ", expected ", shape_str(p->value.shape())));
        p->value.values() = it->second.values();
    }
}

}  // namespace af
