#include "avp/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "avp/errors.hpp"

namespace avp {

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'V', 'T', 'N', 'S', 'R', '1', '\0'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const std::string& context, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ParseError(context + ": truncated tensor blob while reading " + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
  for (double v : t.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

Tensor read_tensor(std::istream& in, const std::string& context) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    throw ParseError(context + ": bad tensor magic at offset " + std::to_string(static_cast<long long>(in.tellg())));
  }
  const auto rank = get_le<std::uint32_t>(in, context, "rank");
  if (rank > 16) throw ParseError(context + ": implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = static_cast<std::size_t>(get_le<std::uint64_t>(in, context, "dims"));
    if (d == 0) throw ParseError(context + ": zero-sized dimension");
  }
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = std::bit_cast<float>(get_le<std::uint32_t>(in, context, "payload"));
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in, path.string());
}

Tensor to_tensor(const RealMatrix& m) { return Tensor({m.rows(), m.cols()}, m.data()); }

RealMatrix to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("to_matrix: expected 2-D tensor, got " + shape_str(t.shape()));
  RealMatrix m(t.dim(0), t.dim(1));
  std::copy(t.values().begin(), t.values().end(), m.data().begin());
  return m;
}

}  // namespace avp
