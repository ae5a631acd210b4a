#include "milg/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "milg/binary_io.hpp"

namespace milg {

bool Checkpoint::contains(std::string_view name) const {
  for (const auto& [n, t] : tensors_)
    if (n == name) return true;
  return false;
}

const Tensor<float>& Checkpoint::get(std::string_view name) const {
  for (const auto& [n, t] : tensors_)
    if (n == name) return t;
  throw UserError("checkpoint has no tensor named '" + std::string(name) + "'");
}

std::string Checkpoint::serialize() const {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    manifest["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel() * 4;
  }
  const std::string text = manifest.dump();

  std::ostringstream os(std::ios::binary);
  os.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  binio::write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : tensors_) binio::write_f32(os, t.data());
  return os.str();
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  std::istringstream is(std::string(bytes), std::ios::binary);
  char magic[8];
  if (!is.read(magic, 8) || std::string_view(magic, 8) != kCheckpointMagic)
    throw UserError("not a MILCKPT1 checkpoint (bad magic)");
  const std::uint64_t len = binio::read_u64(is);
  if (len > bytes.size()) throw UserError("checkpoint manifest length exceeds file size");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw UserError("truncated checkpoint manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("malformed checkpoint manifest: ") + e.what());
  }

  Checkpoint ck;
  ck.meta = manifest.value("meta", nlohmann::json::object());
  const std::streamoff data_start = is.tellg();
  for (const auto& entry : manifest.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    Tensor<float> t(shape);
    is.seekg(data_start + static_cast<std::streamoff>(offset));
    binio::read_f32(is, t.data());
    ck.tensors_.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw UserError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UserError("missing checkpoint " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return deserialize(buf.str());
}

}  // namespace milg
