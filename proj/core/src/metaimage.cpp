// metaimage.cpp - local single-file MetaImage I/O, little-endian, x-fastest.

#include "blendreg/metaimage.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "blendreg/field.hpp"

namespace blendreg {

namespace {

static_assert(std::endian::native == std::endian::little, "MetaImage I/O assumes a little-endian host");

struct Header {
    Geometry geom;
    int channels = 1;
    MetaElementType type = MetaElementType::float_;
};

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_numbers(const std::string &value, const std::string &key) {
    std::istringstream in(value);
    std::vector<double> out;
    double v = 0.0;
    while (in >> v) out.push_back(v);
    if (out.empty()) {
        throw IoError("MetaImage: key " + key + " has no numeric value");
    }
    return out;
}

std::size_t element_size(MetaElementType t) {
    switch (t) {
    case MetaElementType::uchar: return 1;
    case MetaElementType::short_: return 2;
    case MetaElementType::float_: return 4;
    case MetaElementType::double_: return 8;
    }
    return 0;
}

MetaElementType parse_type(const std::string &name) {
    if (name == "MET_UCHAR") return MetaElementType::uchar;
    if (name == "MET_SHORT") return MetaElementType::short_;
    if (name == "MET_FLOAT") return MetaElementType::float_;
    if (name == "MET_DOUBLE") return MetaElementType::double_;
    throw IoError("MetaImage: unsupported ElementType " + name);
}

// Shortest round-trip decimal representation, locale independent.
std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_triple(const Vec3 &v) {
    return format_number(v.x) + " " + format_number(v.y) + " " + format_number(v.z);
}

Header read_header(std::istream &in, const std::filesystem::path &path) {
    std::map<std::string, std::string> keys;
    std::string line;
    bool found_data = false;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        keys[key] = value;
        if (key == "ElementDataFile") {
            found_data = true;
            break;
        }
    }
    if (!found_data) {
        throw IoError("MetaImage: missing ElementDataFile in " + path.string());
    }
    if (keys["ElementDataFile"] != "LOCAL") {
        throw IoError("MetaImage: only ElementDataFile = LOCAL is supported");
    }
    if (keys.count("NDims") && keys["NDims"] != "3") {
        throw IoError("MetaImage: only NDims = 3 is supported");
    }
    if (keys.count("CompressedData") && keys["CompressedData"] == "True") {
        throw IoError("MetaImage: compressed data is not supported");
    }
    const std::string msb = keys.count("BinaryDataByteOrderMSB") ? keys["BinaryDataByteOrderMSB"]
                                                                  : (keys.count("ElementByteOrderMSB") ? keys["ElementByteOrderMSB"] : "False");
    if (msb == "True") {
        throw IoError("MetaImage: big-endian data is not supported");
    }
    if (!keys.count("DimSize") || !keys.count("ElementType")) {
        throw IoError("MetaImage: DimSize and ElementType are required");
    }
    Header h;
    const auto dims = parse_numbers(keys["DimSize"], "DimSize");
    if (dims.size() != 3) throw IoError("MetaImage: DimSize needs 3 values");
    for (int a = 0; a < 3; ++a) h.geom.dims[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(dims[static_cast<std::size_t>(a)]);
    if (keys.count("ElementSpacing")) {
        const auto sp = parse_numbers(keys["ElementSpacing"], "ElementSpacing");
        if (sp.size() != 3) throw IoError("MetaImage: ElementSpacing needs 3 values");
        h.geom.spacing = {sp[0], sp[1], sp[2]};
    }
    const std::string origin_key = keys.count("Offset") ? "Offset" : (keys.count("Origin") ? "Origin" : "");
    if (!origin_key.empty()) {
        const auto o = parse_numbers(keys[origin_key], origin_key);
        if (o.size() != 3) throw IoError("MetaImage: Offset needs 3 values");
        h.geom.origin = {o[0], o[1], o[2]};
    }
    if (keys.count("ElementNumberOfChannels")) {
        h.channels = static_cast<int>(parse_numbers(keys["ElementNumberOfChannels"], "ElementNumberOfChannels")[0]);
    }
    h.type = parse_type(keys["ElementType"]);
    try {
        h.geom.validate();
    } catch (const ConfigError &e) {
        throw IoError(std::string("MetaImage: invalid geometry: ") + e.what());
    }
    return h;
}

std::vector<double> read_payload(std::istream &in, const Header &h) {
    const std::size_t count = h.geom.voxel_count() * static_cast<std::size_t>(h.channels);
    const std::size_t esz = element_size(h.type);
    std::vector<char> raw(count * esz);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw IoError("MetaImage: truncated voxel data");
    }
    std::vector<double> out(count);
    for (std::size_t n = 0; n < count; ++n) {
        const char *p = raw.data() + n * esz;
        switch (h.type) {
        case MetaElementType::uchar: out[n] = static_cast<unsigned char>(*p); break;
        case MetaElementType::short_: {
            std::int16_t v;
            std::memcpy(&v, p, 2);
            out[n] = v;
            break;
        }
        case MetaElementType::float_: {
            float v;
            std::memcpy(&v, p, 4);
            out[n] = v;
            break;
        }
        case MetaElementType::double_: {
            double v;
            std::memcpy(&v, p, 8);
            out[n] = v;
            break;
        }
        }
        if (!std::isfinite(out[n])) {
            throw IoError("MetaImage: non-finite voxel value");
        }
    }
    return out;
}

void append_value(std::string &buf, double v, MetaElementType t) {
    char tmp[8];
    std::size_t n = 0;
    switch (t) {
    case MetaElementType::uchar: {
        const auto c = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
        std::memcpy(tmp, &c, 1);
        n = 1;
        break;
    }
    case MetaElementType::short_: {
        const auto s = static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L));
        std::memcpy(tmp, &s, 2);
        n = 2;
        break;
    }
    case MetaElementType::float_: {
        const auto f = static_cast<float>(v);
        std::memcpy(tmp, &f, 4);
        n = 4;
        break;
    }
    case MetaElementType::double_:
        std::memcpy(tmp, &v, 8);
        n = 8;
        break;
    }
    buf.append(tmp, n);
}

void write_file(const std::filesystem::path &path, const Geometry &g, int channels,
                MetaElementType type, const std::vector<double> &values) {
    std::ostringstream hdr;
    hdr << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = False\n"
        << "CompressedData = False\n"
        << "Offset = " << format_triple(g.origin) << "\n"
        << "ElementSpacing = " << format_triple(g.spacing) << "\n"
        << "DimSize = " << g.dims[0] << " " << g.dims[1] << " " << g.dims[2] << "\n";
    if (channels != 1) {
        hdr << "ElementNumberOfChannels = " << channels << "\n";
    }
    hdr << "ElementType = " << meta_type_name(type) << "\n"
        << "ElementDataFile = LOCAL\n";
    std::string payload = hdr.str();
    payload.reserve(payload.size() + values.size() * element_size(type));
    for (double v : values) append_value(payload, v, type);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

std::ifstream open_input(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return in;
}

} // namespace

const char *meta_type_name(MetaElementType t) {
    switch (t) {
    case MetaElementType::uchar: return "MET_UCHAR";
    case MetaElementType::short_: return "MET_SHORT";
    case MetaElementType::float_: return "MET_FLOAT";
    case MetaElementType::double_: return "MET_DOUBLE";
    }
    return "MET_FLOAT";
}

Image3D read_image(const std::filesystem::path &path) {
    auto in = open_input(path);
    const Header h = read_header(in, path);
    if (h.channels != 1) {
        throw IoError("MetaImage: expected a scalar image in " + path.string());
    }
    return Image3D(h.geom, read_payload(in, h));
}

Mask3D read_mask(const std::filesystem::path &path) {
    const Image3D img = read_image(path);
    Mask3D mask(img.geometry());
    for (std::size_t n = 0; n < mask.size(); ++n) mask[n] = img[n] != 0.0 ? 1 : 0;
    return mask;
}

void write_image(const std::filesystem::path &path, const Image3D &img, MetaElementType type) {
    write_file(path, img.geometry(), 1, type, {img.voxels().begin(), img.voxels().end()});
}

void write_mask(const std::filesystem::path &path, const Mask3D &mask) {
    std::vector<double> v(mask.size());
    for (std::size_t n = 0; n < v.size(); ++n) v[n] = mask[n] ? 1.0 : 0.0;
    write_file(path, mask.geometry(), 1, MetaElementType::uchar, v);
}

void write_field(const std::filesystem::path &path, const DeformationField &field) {
    std::vector<double> v;
    v.reserve(field.size() * 3);
    for (const auto &u : field.vectors) {
        v.push_back(u.x);
        v.push_back(u.y);
        v.push_back(u.z);
    }
    write_file(path, field.geom, 3, MetaElementType::float_, v);
}

DeformationField read_field(const std::filesystem::path &path) {
    auto in = open_input(path);
    const Header h = read_header(in, path);
    if (h.channels != 3) {
        throw IoError("MetaImage: deformation field needs ElementNumberOfChannels = 3");
    }
    const auto values = read_payload(in, h);
    DeformationField field(h.geom);
    for (std::size_t n = 0; n < field.size(); ++n) {
        field.vectors[n] = {values[3 * n], values[3 * n + 1], values[3 * n + 2]};
    }
    return field;
}

} // namespace blendreg
