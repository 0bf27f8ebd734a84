#include "asofed/params.hpp"

#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace asofed {

namespace {

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  b[0] = static_cast<unsigned char>(v & 0xff);
  b[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  b[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  b[3] = static_cast<unsigned char>((v >> 24) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("param snapshot truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64_le(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("param snapshot truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

ParamSet::ParamSet(std::vector<Eigen::MatrixXd> layers, int first_layer_index)
    : layers_(std::move(layers)), first_layer_index_(first_layer_index) {
  if (!layers_.empty() &&
      (first_layer_index_ < 0 || first_layer_index_ >= static_cast<int>(layers_.size()))) {
    throw std::invalid_argument("first_layer_index out of range");
  }
}

std::vector<LayerShape> ParamSet::shape_signature() const {
  std::vector<LayerShape> sig;
  sig.reserve(layers_.size());
  for (const auto& l : layers_) {
    sig.push_back({static_cast<std::uint32_t>(l.rows()), static_cast<std::uint32_t>(l.cols())});
  }
  return sig;
}

bool ParamSet::same_signature(const ParamSet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].rows() != other.layers_[i].rows() ||
        layers_[i].cols() != other.layers_[i].cols()) {
      return false;
    }
  }
  return true;
}

std::string ParamSet::signature_string() const {
  std::ostringstream os;
  for (const auto& l : layers_) os << l.rows() << "x" << l.cols() << ";";
  return os.str();
}

std::size_t ParamSet::value_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.size());
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.allFinite()) return false;
  }
  return true;
}

void ParamSet::set_zero() {
  for (auto& l : layers_) l.setZero();
}

ParamSet ParamSet::zeros_like(const ParamSet& ref) {
  std::vector<Eigen::MatrixXd> layers;
  layers.reserve(ref.layers_.size());
  for (const auto& l : ref.layers_) layers.emplace_back(Eigen::MatrixXd::Zero(l.rows(), l.cols()));
  return ParamSet(std::move(layers), ref.first_layer_index_);
}

double ParamSet::dot(const ParamSet& other) const {
  if (!same_signature(other)) throw std::invalid_argument("ParamSet::dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    acc += layers_[i].cwiseProduct(other.layers_[i]).sum();
  }
  return acc;
}

double ParamSet::squared_norm() const {
  double acc = 0.0;
  for (const auto& l : layers_) acc += l.squaredNorm();
  return acc;
}

double ParamSet::norm() const { return std::sqrt(squared_norm()); }

bool ParamSet::operator==(const ParamSet& other) const {
  if (!same_signature(other)) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i] != other.layers_[i]) return false;
  }
  return true;
}

void ParamSet::serialize(std::ostream& out) const {
  write_u32_le(out, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    write_u32_le(out, static_cast<std::uint32_t>(l.rows()));
    write_u32_le(out, static_cast<std::uint32_t>(l.cols()));
  }
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.cols(); ++c) write_f64_le(out, l(r, c));
    }
  }
}

ParamSet ParamSet::deserialize(std::istream& in, int first_layer_index) {
  const std::uint32_t n_layers = read_u32_le(in);
  std::vector<LayerShape> shapes(n_layers);
  for (auto& s : shapes) {
    s.rows = read_u32_le(in);
    s.cols = read_u32_le(in);
  }
  std::vector<Eigen::MatrixXd> layers;
  layers.reserve(n_layers);
  for (const auto& s : shapes) {
    Eigen::MatrixXd l(s.rows, s.cols);
    for (std::uint32_t r = 0; r < s.rows; ++r) {
      for (std::uint32_t c = 0; c < s.cols; ++c) l(r, c) = read_f64_le(in);
    }
    layers.push_back(std::move(l));
  }
  return ParamSet(std::move(layers), first_layer_index);
}

ParamSet& axpy(ParamSet& dst, double scale, const ParamSet& src) {
  if (!dst.same_signature(src)) throw std::invalid_argument("axpy: shape mismatch");
  for (int i = 0; i < dst.layer_count(); ++i) dst.layer(i) += scale * src.layer(i);
  return dst;
}

ParamSet& scale_add(ParamSet& dst, double a, double b, const ParamSet& src) {
  if (!dst.same_signature(src)) throw std::invalid_argument("scale_add: shape mismatch");
  for (int i = 0; i < dst.layer_count(); ++i) {
    dst.layer(i) = a * dst.layer(i) + b * src.layer(i);
  }
  return dst;
}

}  // namespace asofed
