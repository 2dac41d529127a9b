#include "protomark/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "protomark/errors.hpp"

namespace protomark {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

constexpr char kMagic[8] = {'P', 'M', 'K', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_f64(std::vector<unsigned char>& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(buf, v);
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("checkpoint blob truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    unsigned char u8() {
        need(1);
        return buf[pos++];
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

void put_params(std::vector<unsigned char>& buf, const ParamSet& p) {
    put_u32(buf, static_cast<std::uint32_t>(p.count()));
    for (std::size_t i = 0; i < p.count(); ++i) {
        const std::string& name = p.name(i);
        const Tensor& t = p.tensor(i);
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf.insert(buf.end(), name.begin(), name.end());
        put_u32(buf, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(buf, static_cast<std::uint32_t>(d));
        for (double v : t.data) put_f64(buf, v);
    }
}

ParamSet read_params(Reader& r) {
    ParamSet p;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u32());
        const std::uint32_t ndim = r.u32();
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(r.u32());
        Tensor& t = p.add(name, shape);
        for (double& v : t.data) v = r.f64();
    }
    return p;
}

std::string manifest_path(const std::string& path) { return path + ".manifest"; }

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 8);
    put_u32(buf, 1);
    buf.push_back(ckpt.inference_only() ? 1 : 0);

    const PrototypeBank& bank = ckpt.bank;
    put_u32(buf, static_cast<std::uint32_t>(bank.holistic.k));
    put_u32(buf, static_cast<std::uint32_t>(bank.holistic.d));
    put_f64(buf, bank.alpha);
    put_u64(buf, static_cast<std::uint64_t>(bank.step));
    buf.push_back(bank.initialized ? 1 : 0);
    for (double v : bank.holistic.vectors) put_f64(buf, v);

    put_params(buf, ckpt.backbone);
    if (!ckpt.inference_only()) {
        put_params(buf, *ckpt.rel_head);
        put_params(buf, *ckpt.pos_embedder);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    out.close();
    if (!out) throw IoError("checkpoint write failed: " + path);

    std::ofstream man(manifest_path(path));
    if (!man) throw IoError("cannot write manifest: " + manifest_path(path));
    man << "format=1\n";
    man << "kind=" << (ckpt.inference_only() ? "inference" : "train") << "\n";
    man << "epoch=" << ckpt.epoch << "\n";
    man << "step=" << ckpt.step << "\n";
    man << "seed=" << ckpt.seed << "\n";
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(buf.data(), buf.size())));
    man << "content_hash=" << hash << "\n";
    for (const auto& line : config_lines(ckpt.cfg)) man << "cfg." << line << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

    std::ifstream man(manifest_path(path));
    if (!man) throw IoError("missing checkpoint manifest: " + manifest_path(path));

    Checkpoint ckpt;
    std::string recorded_hash;
    std::string kind;
    std::string line;
    while (std::getline(man, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("manifest line without '=': " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "format") {
            if (value != "1") throw ValidationError("unsupported manifest format: " + value);
        } else if (key == "kind") {
            kind = value;
        } else if (key == "epoch") {
            ckpt.epoch = std::stoi(value);
        } else if (key == "step") {
            ckpt.step = std::stol(value);
        } else if (key == "seed") {
            ckpt.seed = std::stoull(value);
        } else if (key == "content_hash") {
            recorded_hash = value;
        } else if (key.rfind("cfg.", 0) == 0) {
            const std::string cfg_key = key.substr(4);
            // skip informational keys that are not RunConfig fields
            if (cfg_key == "optimizer" || cfg_key == "activation" || cfg_key == "upsample" ||
                cfg_key == "normalization")
                continue;
            apply_config_line(ckpt.cfg, cfg_key, value);
        } else {
            throw ValidationError("unknown manifest key: " + key);
        }
    }
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(buf.data(), buf.size())));
    if (recorded_hash != hash)
        throw ValidationError("checkpoint content hash mismatch for " + path);

    Reader r{buf};
    if (r.str(8) != std::string(kMagic, 8)) throw ValidationError("bad checkpoint magic: " + path);
    if (r.u32() != 1) throw ValidationError("unsupported checkpoint version in " + path);
    const bool inference = r.u8() != 0;
    if ((kind == "inference") != inference)
        throw ValidationError("manifest/blob kind disagree for " + path);

    const int k = static_cast<int>(r.u32());
    const int d = static_cast<int>(r.u32());
    ckpt.bank = PrototypeBank(k, d, r.f64());
    ckpt.bank.step = static_cast<long>(r.u64());
    ckpt.bank.initialized = r.u8() != 0;
    for (double& v : ckpt.bank.holistic.vectors) v = r.f64();

    ckpt.backbone = read_params(r);
    if (!inference) {
        ckpt.rel_head = read_params(r);
        ckpt.pos_embedder = read_params(r);
    }
    if (r.pos != buf.size()) throw ValidationError("trailing bytes in checkpoint " + path);
    return ckpt;
}

} // namespace protomark
