#include "milg/feature_store.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include "milg/binary_io.hpp"

namespace milg {

std::string encode_features(const Tensor<float>& features) {
  if (features.rank() != 2) throw DimensionError("feature matrix must be rank 2, got " + shape_str(features.shape()));
  if (features.dim(0) > std::numeric_limits<std::uint32_t>::max() ||
      features.dim(1) > std::numeric_limits<std::uint32_t>::max())
    throw DimensionError("feature matrix too large for the feature-store format");
  std::ostringstream os(std::ios::binary);
  os.write(kFeatureMagic.data(), static_cast<std::streamsize>(kFeatureMagic.size()));
  binio::write_u32(os, static_cast<std::uint32_t>(features.dim(0)));
  binio::write_u32(os, static_cast<std::uint32_t>(features.dim(1)));
  binio::write_f32(os, features.data());
  return os.str();
}

Tensor<float> decode_features(std::string_view bytes) {
  std::istringstream is(std::string(bytes), std::ios::binary);
  char magic[8];
  if (!is.read(magic, 8) || std::string_view(magic, 8) != kFeatureMagic)
    throw UserError("not a MILF0001 feature file (bad magic)");
  const std::uint32_t m = binio::read_u32(is);
  const std::uint32_t d = binio::read_u32(is);
  if (16 + std::uint64_t{m} * d * 4 != bytes.size())
    throw UserError("feature file size does not match its " + std::to_string(m) + "x" + std::to_string(d) +
                    " header");
  Tensor<float> out({m, d});
  binio::read_f32(is, out.data());
  return out;
}

void write_features(const std::filesystem::path& path, const Tensor<float>& features) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw UserError("cannot write " + path.string());
  const std::string bytes = encode_features(features);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Tensor<float> read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UserError("missing feature file " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  try {
    return decode_features(buf.str());
  } catch (const UserError& e) {
    throw UserError(path.string() + ": " + e.what());
  }
}

}  // namespace milg
