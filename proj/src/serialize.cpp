#include "fedpm/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fedpm {

namespace {

void put_bytes(std::vector<std::uint8_t>& out, const void* src, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(src);
    out.insert(out.end(), p, p + n);
}

template <typename T>
void put_value(std::vector<std::uint8_t>& out, T value) {
    put_bytes(out, &value, sizeof(T));
}

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    void read(void* dst, std::size_t n) {
        if (pos_ + n > size_) throw std::runtime_error("truncated byte stream");
        std::memcpy(dst, data_ + pos_, n);
        pos_ += n;
    }

    template <typename T>
    T value() {
        T v;
        read(&v, sizeof(T));
        return v;
    }

    bool exhausted() const { return pos_ == size_; }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

void write_doubles(std::ofstream& out, const std::vector<double>& values) {
    const std::uint64_t n = values.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::vector<double> values(n);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint");
    return values;
}

void write_string(std::ofstream& out, const std::string& s) {
    const std::uint64_t n = s.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(s.data(), static_cast<std::streamsize>(n));
}

std::string read_string(std::ifstream& in) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("truncated checkpoint");
    return s;
}

void write_memory(std::ofstream& out, const PrototypeMemory& memory) {
    write_string(out, memory.domain_id);
    const std::uint64_t m = memory.size(), d = memory.dim();
    out.write(reinterpret_cast<const char*>(&m), sizeof(m));
    out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    out.write(reinterpret_cast<const char*>(memory.vectors.data.data()),
              static_cast<std::streamsize>(m * d * sizeof(double)));
    out.write(reinterpret_cast<const char*>(memory.usage.data()),
              static_cast<std::streamsize>(m * sizeof(std::int64_t)));
    for (Provenance p : memory.provenance) {
        const auto byte = static_cast<std::uint8_t>(p);
        out.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

PrototypeMemory read_memory(std::ifstream& in) {
    PrototypeMemory memory;
    memory.domain_id = read_string(in);
    std::uint64_t m = 0, d = 0;
    in.read(reinterpret_cast<char*>(&m), sizeof(m));
    in.read(reinterpret_cast<char*>(&d), sizeof(d));
    memory.vectors = Matrix(m, d);
    in.read(reinterpret_cast<char*>(memory.vectors.data.data()),
            static_cast<std::streamsize>(m * d * sizeof(double)));
    memory.usage.resize(m);
    in.read(reinterpret_cast<char*>(memory.usage.data()),
            static_cast<std::streamsize>(m * sizeof(std::int64_t)));
    memory.provenance.resize(m);
    for (std::uint64_t i = 0; i < m; ++i) {
        std::uint8_t byte = 0;
        in.read(reinterpret_cast<char*>(&byte), 1);
        memory.provenance[i] = static_cast<Provenance>(byte);
    }
    if (!in) throw std::runtime_error("truncated checkpoint");
    return memory;
}

constexpr char kCheckpointMagic[8] = {'F', 'D', 'P', 'M', 'C', 'K', 'P', '1'};

}  // namespace

std::size_t payload_size(std::size_t size, std::size_t dim) {
    return size * dim * sizeof(double) + size * sizeof(std::int64_t);
}

std::vector<std::uint8_t> encode_payload(const PrototypeMemory& memory) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(payload_size(memory.size(), memory.dim()));
    put_bytes(bytes, memory.vectors.data.data(),
              memory.vectors.data.size() * sizeof(double));
    put_bytes(bytes, memory.usage.data(), memory.usage.size() * sizeof(std::int64_t));
    return bytes;
}

PrototypeMemory decode_payload(const std::vector<std::uint8_t>& bytes, std::size_t size,
                               std::size_t dim, std::string domain_id) {
    if (bytes.size() != payload_size(size, dim))
        throw std::runtime_error("payload size mismatch");
    ByteReader reader(bytes.data(), bytes.size());
    PrototypeMemory memory;
    memory.domain_id = std::move(domain_id);
    memory.vectors = Matrix(size, dim);
    reader.read(memory.vectors.data.data(), size * dim * sizeof(double));
    memory.usage.resize(size);
    reader.read(memory.usage.data(), size * sizeof(std::int64_t));
    memory.provenance.assign(size, Provenance::fresh);
    return memory;
}

std::string memory_to_json(const PrototypeMemory& memory) {
    nlohmann::json j;
    j["domain_id"] = memory.domain_id;
    j["M"] = memory.size();
    j["D"] = memory.dim();
    j["vectors"] = memory.vectors.data;  // row-major
    j["usage"] = memory.usage;
    std::vector<std::string> prov;
    prov.reserve(memory.size());
    for (Provenance p : memory.provenance) prov.emplace_back(provenance_name(p));
    j["provenance"] = prov;
    return j.dump();
}

PrototypeMemory memory_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    PrototypeMemory memory;
    memory.domain_id = j.at("domain_id").get<std::string>();
    const auto m = j.at("M").get<std::size_t>();
    const auto d = j.at("D").get<std::size_t>();
    memory.vectors = Matrix(m, d);
    const auto values = j.at("vectors").get<std::vector<double>>();
    if (values.size() != m * d) throw std::runtime_error("memory json: bad vector length");
    memory.vectors.data = values;
    memory.usage = j.at("usage").get<std::vector<std::int64_t>>();
    for (const auto& name : j.at("provenance").get<std::vector<std::string>>()) {
        if (name == "fresh") memory.provenance.push_back(Provenance::fresh);
        else if (name == "shared") memory.provenance.push_back(Provenance::shared);
        else if (name == "personalized") memory.provenance.push_back(Provenance::personalized);
        else throw std::runtime_error("memory json: unknown provenance '" + name + "'");
    }
    if (memory.usage.size() != m || memory.provenance.size() != m)
        throw std::runtime_error("memory json: inconsistent lengths");
    return memory;
}

void write_checkpoint(const std::string& path, const ClientCheckpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_string(out, ckpt.domain_id);

    const ModelConfig& c = ckpt.config;
    const std::uint64_t dims[] = {c.patch_len, c.lookback, c.horizon, c.latent_dim,
                                  c.encoder_blocks, c.decoder_blocks, c.batch_size};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    const double hyper[] = {c.beta, c.learning_rate, c.adam_beta1, c.adam_beta2, c.adam_eps};
    out.write(reinterpret_cast<const char*>(hyper), sizeof(hyper));

    write_doubles(out, ckpt.params);
    write_doubles(out, ckpt.adam_m);
    write_doubles(out, ckpt.adam_v);
    out.write(reinterpret_cast<const char*>(&ckpt.adam_step), sizeof(ckpt.adam_step));
    write_memory(out, ckpt.memory);
    write_doubles(out, ckpt.memory_adam_m);
    write_doubles(out, ckpt.memory_adam_v);
    out.write(reinterpret_cast<const char*>(&ckpt.memory_adam_step),
              sizeof(ckpt.memory_adam_step));
    if (!out) throw std::runtime_error("failed to write checkpoint: " + path);
}

ClientCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);

    ClientCheckpoint ckpt;
    ckpt.domain_id = read_string(in);
    std::uint64_t dims[7];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    double hyper[5];
    in.read(reinterpret_cast<char*>(hyper), sizeof(hyper));
    ckpt.config.patch_len = dims[0];
    ckpt.config.lookback = dims[1];
    ckpt.config.horizon = dims[2];
    ckpt.config.latent_dim = dims[3];
    ckpt.config.encoder_blocks = dims[4];
    ckpt.config.decoder_blocks = dims[5];
    ckpt.config.batch_size = dims[6];
    ckpt.config.beta = hyper[0];
    ckpt.config.learning_rate = hyper[1];
    ckpt.config.adam_beta1 = hyper[2];
    ckpt.config.adam_beta2 = hyper[3];
    ckpt.config.adam_eps = hyper[4];

    ckpt.params = read_doubles(in);
    ckpt.adam_m = read_doubles(in);
    ckpt.adam_v = read_doubles(in);
    in.read(reinterpret_cast<char*>(&ckpt.adam_step), sizeof(ckpt.adam_step));
    ckpt.memory = read_memory(in);
    ckpt.memory_adam_m = read_doubles(in);
    ckpt.memory_adam_v = read_doubles(in);
    in.read(reinterpret_cast<char*>(&ckpt.memory_adam_step),
            sizeof(ckpt.memory_adam_step));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return ckpt;
}

}  // namespace fedpm
