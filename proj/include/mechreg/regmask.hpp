#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mechreg/grid.hpp"

namespace mechreg {

/// Which regularizer applies at a voxel: pseudo-elastic (J), rigid (R) or sliding (S).
enum class RegLabel : std::uint8_t { J = 0, R = 1, S = 2 };

char to_char(RegLabel l);

class RegMask {
 public:
  RegMask() = default;
  explicit RegMask(Dims dims, Spacing spacing = {1.0, 1.0, 1.0}, RegLabel fill = RegLabel::J);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return labels_.size(); }

  RegLabel& operator[](std::size_t i) { return labels_[i]; }
  RegLabel operator[](std::size_t i) const { return labels_[i]; }

  /// Linear indices carrying `l`, ascending.
  std::vector<std::size_t> region(RegLabel l) const;
  /// Indices whose label differs from `l`, ascending.
  std::vector<std::size_t> complement(RegLabel l) const;
  /// Voxel counts indexed by the RegLabel value.
  std::array<std::size_t, 3> counts() const;

  /// Encodes labels as 0 (J), 1 (R), 2 (S).
  ScalarVolume to_volume() const;
  /// Throws DataError for values outside {0, 1, 2}.
  static RegMask from_volume(const ScalarVolume& v);

  /// Free-form provenance string, e.g. the hash of the config that built the mask.
  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string p) { provenance_ = std::move(p); }

  bool operator==(const RegMask& o) const { return dims_ == o.dims_ && labels_ == o.labels_; }

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<RegLabel> labels_;
  std::string provenance_;
};

/// Unit interface normals on the S region, zero vectors elsewhere.
class DirectionField : public VectorField {
 public:
  using VectorField::VectorField;
  DirectionField() = default;
  explicit DirectionField(VectorField f) : VectorField(std::move(f)) {}
};

}  // namespace mechreg
