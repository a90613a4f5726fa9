// metaimage.hpp - single-file MetaImage (.mha) reader/writer.
#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "blendreg/image.hpp"

namespace blendreg {

enum class MetaElementType { uchar, short_, float_, double_ };

struct DeformationField;

/// Reads a scalar .mha; 16-bit and 8-bit voxels are widened to double.
Image3D read_image(const std::filesystem::path &path);
Mask3D read_mask(const std::filesystem::path &path);

void write_image(const std::filesystem::path &path, const Image3D &img,
                 MetaElementType type = MetaElementType::float_);
void write_mask(const std::filesystem::path &path, const Mask3D &mask);

/// Three-channel MET_FLOAT field with ElementNumberOfChannels = 3.
void write_field(const std::filesystem::path &path, const DeformationField &field);
DeformationField read_field(const std::filesystem::path &path);

const char *meta_type_name(MetaElementType t);

} // namespace blendreg
