#include "ssa/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "ssa/error.hpp"

namespace ssa {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::ifstream& in, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail(ErrorKind::Data, "truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto extent : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(extent));
    const auto data = tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  }
  if (!out) fail(ErrorKind::Data, "failed writing checkpoint " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    fail(ErrorKind::Data, path.string() + " is not an SSACKPT1 checkpoint");
  }
  const auto version = get_u32(in, path);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::Data, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_u32(in, path);
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_u32(in, path), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      fail(ErrorKind::Data, "truncated checkpoint " + path.string());
    }
    Shape shape(get_u32(in, path));
    for (auto& extent : shape) extent = get_u32(in, path);
    std::vector<float> values(shape_numel(shape));
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)))) {
      fail(ErrorKind::Data, "truncated tensor '" + name + "' in " + path.string());
    }
    tensors.push_back({std::move(name), Tensor::from_data(std::move(shape), std::move(values))});
  }
  return tensors;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  write_checkpoint(path, model.named_parameters());
}

void load_model(const std::filesystem::path& path, Model& model) {
  const auto stored = read_checkpoint(path);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : stored) by_name[t.name] = &t.tensor;
  std::vector<std::string> problems;
  auto params = model.named_parameters();
  for (auto& [name, param] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      problems.push_back(name + " (missing)");
    } else if (it->second->shape() != param.shape()) {
      problems.push_back(name + " (stored " + shape_string(it->second->shape()) + ", model " +
                         shape_string(param.shape()) + ")");
    }
  }
  for (const auto& t : stored) {
    const bool known = std::any_of(params.begin(), params.end(), [&](const NamedTensor& p) { return p.name == t.name; });
    if (!known) problems.push_back(t.name + " (unexpected)");
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint " + path.string() + " is incompatible with the model:";
    for (const auto& p : problems) msg += " " + p + ";";
    fail(ErrorKind::Compatibility, msg);
  }
  for (auto& [name, param] : params) {
    const auto src = by_name[name]->data();
    std::copy(src.begin(), src.end(), param.mutable_data().begin());
  }
}

}  // namespace ssa
