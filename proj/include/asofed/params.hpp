#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace asofed {

struct LayerShape {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  bool operator==(const LayerShape&) const = default;
};

/// Ordered set of dense parameter layers shared by the server and the
/// clients. The layer at `first_layer_index` is the one the server may
/// re-weight after aggregation. Two ParamSets may be combined only when
/// their shape signatures match exactly.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<Eigen::MatrixXd> layers, int first_layer_index = 0);

  int layer_count() const { return static_cast<int>(layers_.size()); }
  const Eigen::MatrixXd& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }
  Eigen::MatrixXd& layer(int i) { return layers_.at(static_cast<std::size_t>(i)); }
  const std::vector<Eigen::MatrixXd>& layers() const { return layers_; }

  int first_layer_index() const { return first_layer_index_; }

  std::vector<LayerShape> shape_signature() const;
  bool same_signature(const ParamSet& other) const;
  std::string signature_string() const;

  std::size_t value_count() const;
  bool all_finite() const;

  void set_zero();
  static ParamSet zeros_like(const ParamSet& ref);

  double dot(const ParamSet& other) const;
  double squared_norm() const;
  double norm() const;

  bool operator==(const ParamSet& other) const;

  // Snapshot format: u32 layer count, then u32 rows / u32 cols per layer,
  // then every entry as a little-endian IEEE-754 double in row-major order.
  void serialize(std::ostream& out) const;
  static ParamSet deserialize(std::istream& in, int first_layer_index = 0);

 private:
  std::vector<Eigen::MatrixXd> layers_;
  int first_layer_index_ = 0;
};

/// dst += scale * src, elementwise. Throws std::invalid_argument on a
/// signature mismatch. Returns dst.
ParamSet& axpy(ParamSet& dst, double scale, const ParamSet& src);

/// dst = a * dst + b * src (same shape rules as axpy).
ParamSet& scale_add(ParamSet& dst, double a, double b, const ParamSet& src);

}  // namespace asofed
