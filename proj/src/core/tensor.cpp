#include "maldistill/core/tensor.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "maldistill/core/binio.hpp"

namespace maldistill::core {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

void write_tensor(std::ostream& out, const TensorF& t) {
  out.write("MDT1", 4);
  binio::put_u64(out, t.rank());
  for (auto e : t.shape()) binio::put_u64(out, e);
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

TensorF read_tensor(std::istream& in, std::uint64_t base_offset) {
  binio::Reader r(in, base_offset);
  r.magic("MDT1");
  const auto rank_at = r.offset();
  const auto rank = r.u64("rank");
  if (rank == 0 || rank > 8) throw FormatError("unsupported tensor rank", rank_at);
  Shape shape(rank);
  for (auto& e : shape) {
    const auto at = r.offset();
    e = r.u64("extent");
    if (e == 0 || e > (std::uint64_t{1} << 40)) {
      throw FormatError("invalid tensor extent", at);
    }
  }
  const auto n = shape_numel(shape);
  std::vector<float> data(n);
  r.bytes(reinterpret_cast<char*>(data.data()), n * sizeof(float), "tensor payload");
  return TensorF(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const TensorF& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_tensor(out, t);
  if (!out) throw std::runtime_error("write failed: " + path);
}

TensorF load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return read_tensor(in);
}

}  // namespace maldistill::core
