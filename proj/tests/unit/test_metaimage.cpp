#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "blendreg/field.hpp"
#include "blendreg/metaimage.hpp"

using namespace blendreg;
namespace fs = std::filesystem;

namespace {
fs::path tmp(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / "blendreg_test_metaimage";
    fs::create_directories(dir);
    return dir / name;
}
} // namespace

TEST_CASE("double round trip keeps geometry and values") {
    Image3D img(Geometry{{4, 3, 2}, {0.98, 0.98, 4.0}, {-10.5, 3.25, 7}});
    for (std::size_t n = 0; n < img.size(); ++n) img[n] = 0.1 * static_cast<double>(n) - 1.0;
    write_image(tmp("d.mha"), img, MetaElementType::double_);
    const Image3D back = read_image(tmp("d.mha"));
    CHECK(back == img);
}

TEST_CASE("float and short storage") {
    Image3D img(Geometry{{3, 3, 3}, {1, 1, 1}, {}});
    for (std::size_t n = 0; n < img.size(); ++n) img[n] = static_cast<double>(n) * 10 - 100;
    write_image(tmp("s.mha"), img, MetaElementType::short_);
    CHECK(read_image(tmp("s.mha")) == img);
    write_image(tmp("f.mha"), img, MetaElementType::float_);
    CHECK(read_image(tmp("f.mha")) == img);
}

TEST_CASE("mask round trip") {
    Mask3D m(Geometry{{5, 2, 2}, {1, 2, 3}, {}});
    m[3] = 1;
    m[7] = 1;
    write_mask(tmp("m.mha"), m);
    CHECK(read_mask(tmp("m.mha")) == m);
}

TEST_CASE("field round trip with three channels") {
    DeformationField f(Geometry{{3, 2, 2}, {1, 1, 1}, {}});
    for (std::size_t n = 0; n < f.size(); ++n) f.vectors[n] = {0.5 * n, -0.25 * n, 1.0};
    write_field(tmp("u.mha"), f);
    std::ifstream in(tmp("u.mha"));
    std::string header((std::istreambuf_iterator<char>(in)), {});
    CHECK(header.find("ElementNumberOfChannels = 3") != std::string::npos);
    CHECK(header.find("MET_FLOAT") != std::string::npos);
    CHECK(read_field(tmp("u.mha")) == f);
}

TEST_CASE("errors") {
    CHECK_THROWS_AS(read_image(tmp("missing.mha")), IoError);
    std::ofstream(tmp("bad.mha")) << "ObjectType = Image\nNDims = 2\nDimSize = 2 2\nElementType = MET_FLOAT\n"
                                     "ElementDataFile = LOCAL\n";
    CHECK_THROWS(read_image(tmp("bad.mha")));
    std::ofstream(tmp("short.mha")) << "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\nElementType = MET_FLOAT\n"
                                       "ElementDataFile = LOCAL\nabc";
    CHECK_THROWS(read_image(tmp("short.mha")));
}
