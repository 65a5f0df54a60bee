#pragma once

#include <filesystem>
#include <string>

#include "mechreg/grid.hpp"

namespace mechreg {

enum class VolumeDtype { f32, u16 };

/// On disk: "BMRV1\n", a little-endian u64 header length, the JSON header,
/// then the payload (little-endian, x fastest, channels interleaved per voxel).
struct VolumeHeader {
  Dims dims;
  Spacing spacing{1.0, 1.0, 1.0};
  VolumeDtype dtype = VolumeDtype::f32;
  int channels = 1;
};

inline constexpr char kVolumeMagic[] = "BMRV1";

/// u16 requires integer values in [0, 65535]; throws DataError otherwise.
void write_volume(const std::filesystem::path& path, const ScalarVolume& v, VolumeDtype dtype = VolumeDtype::f32);
void write_volume(const std::filesystem::path& path, const VectorField& f);

VolumeHeader read_volume_header(const std::filesystem::path& path);
/// Throws DataError when the file holds 3 channels.
ScalarVolume read_scalar_volume(const std::filesystem::path& path);
/// Throws DataError when the file holds 1 channel.
VectorField read_vector_volume(const std::filesystem::path& path);

}  // namespace mechreg
