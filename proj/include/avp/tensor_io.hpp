#pragma once

// Binary tensor blobs:
//   8 bytes  magic "AVTNSR1\0"
//   u32 LE   rank
//   u64 LE   dims[rank]
//   f32 LE   payload, row-major
//
// Values are stored in single precision; reading widens to double.

#include <filesystem>
#include <iosfwd>

#include "avp/matrix.hpp"
#include "avp/tensor.hpp"

namespace avp {

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in, const std::string& context = "stream");

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

Tensor to_tensor(const RealMatrix& m);
RealMatrix to_matrix(const Tensor& t);

}  // namespace avp
