#include "mechreg/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "mechreg/error.hpp"

namespace mechreg {

namespace {

static_assert(std::endian::native == std::endian::little, "volume files are written on little-endian hosts only");

using nlohmann::json;

std::string header_json(const VolumeHeader& h) {
  json j;
  j["dims"] = {h.dims.nx, h.dims.ny, h.dims.nz};
  j["spacing"] = {h.spacing[0], h.spacing[1], h.spacing[2]};
  j["dtype"] = h.dtype == VolumeDtype::f32 ? "f32" : "u16";
  j["channels"] = h.channels;
  j["byte_order"] = "little";
  j["layout"] = "x-fastest";
  return j.dump();
}

std::size_t element_size(VolumeDtype t) { return t == VolumeDtype::f32 ? 4 : 2; }

void write_file(const std::filesystem::path& path, const VolumeHeader& h, const std::string& payload) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::string hj = header_json(h);
  const std::uint64_t len = hj.size();
  os.write(kVolumeMagic, 5);
  os.put('\n');
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(hj.data(), static_cast<std::streamsize>(hj.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

template <class T>
void append(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

struct RawVolume {
  VolumeHeader header;
  std::string payload;
};

RawVolume read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, kVolumeMagic, 5) != 0 || magic[5] != '\n')
    throw DataError(path.string() + ": not a BMRV1 volume");
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!is || len > (1u << 20)) throw DataError(path.string() + ": bad header length");
  std::string hj(len, '\0');
  is.read(hj.data(), static_cast<std::streamsize>(len));
  if (!is) throw DataError(path.string() + ": truncated header");

  RawVolume r;
  try {
    const json j = json::parse(hj);
    const auto dims = j.at("dims").get<std::vector<int>>();
    const auto sp = j.at("spacing").get<std::vector<double>>();
    if (dims.size() != 3 || sp.size() != 3) throw DataError(path.string() + ": dims and spacing need 3 entries");
    r.header.dims = {dims[0], dims[1], dims[2]};
    r.header.spacing = {sp[0], sp[1], sp[2]};
    const std::string dt = j.at("dtype").get<std::string>();
    if (dt == "f32")
      r.header.dtype = VolumeDtype::f32;
    else if (dt == "u16")
      r.header.dtype = VolumeDtype::u16;
    else
      throw DataError(path.string() + ": unsupported dtype " + dt);
    r.header.channels = j.at("channels").get<int>();
    if (j.contains("byte_order") && j["byte_order"] != "little")
      throw DataError(path.string() + ": only little-endian payloads are supported");
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed header: " + e.what());
  }
  const Dims& d = r.header.dims;
  if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0) throw DataError(path.string() + ": nonpositive dims");
  if (r.header.channels != 1 && r.header.channels != 3) throw DataError(path.string() + ": channels must be 1 or 3");
  const std::size_t expect = d.count() * r.header.channels * element_size(r.header.dtype);
  r.payload.resize(expect);
  is.read(r.payload.data(), static_cast<std::streamsize>(expect));
  if (!is) throw DataError(path.string() + ": payload shorter than the header declares");
  is.peek();
  if (!is.eof()) throw DataError(path.string() + ": trailing bytes after the payload");
  return r;
}

double element(const RawVolume& r, std::size_t k) {
  if (r.header.dtype == VolumeDtype::f32) {
    float f;
    std::memcpy(&f, r.payload.data() + 4 * k, 4);
    return f;
  }
  std::uint16_t u;
  std::memcpy(&u, r.payload.data() + 2 * k, 2);
  return u;
}

}  // namespace

void write_volume(const std::filesystem::path& path, const ScalarVolume& v, VolumeDtype dtype) {
  VolumeHeader h{v.dims(), v.spacing(), dtype, 1};
  std::string payload;
  payload.reserve(v.size() * element_size(dtype));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    if (dtype == VolumeDtype::f32) {
      if (!std::isfinite(x)) throw DataError("refusing to write a non-finite value to " + path.string());
      append(payload, static_cast<float>(x));
    } else {
      if (!(x >= 0.0 && x <= 65535.0) || x != std::floor(x))
        throw DataError("u16 volumes need integer values in [0, 65535]: " + path.string());
      append(payload, static_cast<std::uint16_t>(x));
    }
  }
  write_file(path, h, payload);
}

void write_volume(const std::filesystem::path& path, const VectorField& f) {
  VolumeHeader h{f.dims(), f.spacing(), VolumeDtype::f32, 3};
  std::string payload;
  payload.reserve(f.size() * 12);
  for (std::size_t i = 0; i < f.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      if (!std::isfinite(f[i][c])) throw DataError("refusing to write a non-finite value to " + path.string());
      append(payload, static_cast<float>(f[i][c]));
    }
  write_file(path, h, payload);
}

VolumeHeader read_volume_header(const std::filesystem::path& path) { return read_file(path).header; }

ScalarVolume read_scalar_volume(const std::filesystem::path& path) {
  const RawVolume r = read_file(path);
  if (r.header.channels != 1) throw DataError(path.string() + ": expected a 1-channel volume");
  ScalarVolume v(r.header.dims, r.header.spacing);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = element(r, i);
  return v;
}

VectorField read_vector_volume(const std::filesystem::path& path) {
  const RawVolume r = read_file(path);
  if (r.header.channels != 3) throw DataError(path.string() + ": expected a 3-channel volume");
  VectorField f(r.header.dims, r.header.spacing);
  for (std::size_t i = 0; i < f.size(); ++i)
    for (int c = 0; c < 3; ++c) f[i][c] = element(r, 3 * i + c);
  return f;
}

}  // namespace mechreg
