#include "hexplain/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "hexplain/errors.hpp"

namespace hexplain {

namespace {

constexpr char kMagic[8] = {'H', 'X', 'P', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw SchemaError("truncated checkpoint", 0);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

void write_f64(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
}

double read_f64(std::istream& in) {
    std::uint64_t bits = read_u64(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

void save_parameters(std::ostream& out, const std::vector<const Parameter*>& params) {
    out.write(kMagic, 8);
    write_u64(out, params.size());
    for (const Parameter* p : params) {
        write_u64(out, p->name.size());
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_u64(out, p->shape.size());
        for (auto d : p->shape) write_u64(out, d);
        write_u64(out, p->value.size());
        for (double v : p->value) write_f64(out, v);
    }
}

void load_parameters(std::istream& in, const std::vector<Parameter*>& params) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw SchemaError("bad checkpoint magic", 0);

    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>> table;
    std::uint64_t count = read_u64(in);
    for (std::uint64_t k = 0; k < count; ++k) {
        std::uint64_t name_len = read_u64(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!in) throw SchemaError("truncated checkpoint name", 0);
        std::uint64_t rank = read_u64(in);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = read_u64(in);
        std::uint64_t n = read_u64(in);
        std::vector<double> values(n);
        for (auto& v : values) v = read_f64(in);
        table[name] = {std::move(shape), std::move(values)};
    }

    for (Parameter* p : params) {
        auto it = table.find(p->name);
        if (it == table.end()) throw std::runtime_error("checkpoint missing parameter " + p->name);
        if (it->second.first != p->shape)
            throw std::runtime_error("checkpoint shape mismatch for " + p->name);
        p->value = it->second.second;
    }
}

void save_parameters_file(const std::string& path, const std::vector<const Parameter*>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint file " + path);
    save_parameters(out, params);
}

void load_parameters_file(const std::string& path, const std::vector<Parameter*>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint file " + path);
    load_parameters(in, params);
}

}  // namespace hexplain
