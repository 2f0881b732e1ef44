#include "brakenet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "brakenet/errors.hpp"

namespace brakenet {

namespace {

constexpr char kMagic[8] = {'B', 'R', 'K', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &value, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&value, b, sizeof(T));
  }
  return value;
}

template <typename T>
void put(std::ostream& out, T value) {
  value = to_little(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw DataError(path.string() + ": truncated checkpoint");
  }
  return to_little(value);
}

struct Slot {
  std::string name;
  Shape shape;
  std::span<double> values;
};

// Every serialized array of a model, in file order.
std::vector<Slot> slots(Model& model) {
  std::vector<Slot> out;
  for (auto& p : model.named_parameters()) {
    Tensor t = p.tensor;
    out.push_back({p.name, t.shape(), t.data()});
  }
  auto bns = model.bn_states();
  for (std::size_t i = 0; i < bns.size(); ++i) {
    const std::string prefix =
        "block" + std::to_string(i / 2 + 1) + ".bn" + std::to_string(i % 2 + 1);
    out.push_back({prefix + ".running_mean", {bns[i]->channels()}, bns[i]->running_mean});
    out.push_back({prefix + ".running_var", {bns[i]->channels()}, bns[i]->running_var});
  }
  return out;
}

}  // namespace

nlohmann::json spec_to_json(const ModelSpec& spec) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : spec.blocks) {
    blocks.push_back({{"kernel1", b.kernel1},
                      {"padding1", b.padding1},
                      {"kernel2", b.kernel2},
                      {"padding2", b.padding2},
                      {"channels", b.channels}});
  }
  return {{"kind", std::string(to_string(spec.kind))},
          {"in_channels", spec.in_channels},
          {"input_dims", spec.input_dims},
          {"blocks", blocks},
          {"pool_kernel", spec.pool_kernel},
          {"pool_stride", spec.pool_stride},
          {"init_seed", spec.init_seed}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec spec;
    spec.kind = parse_model_kind(j.at("kind").get<std::string>());
    spec.in_channels = j.at("in_channels").get<std::size_t>();
    spec.input_dims = j.at("input_dims").get<std::vector<std::size_t>>();
    const auto& blocks = j.at("blocks");
    if (blocks.size() != spec.blocks.size()) throw ConfigError("checkpoint spec needs 2 blocks");
    for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
      const auto& b = blocks.at(i);
      spec.blocks[i] = {b.at("kernel1").get<std::size_t>(), b.at("padding1").get<std::size_t>(),
                        b.at("kernel2").get<std::size_t>(), b.at("padding2").get<std::size_t>(),
                        b.at("channels").get<std::size_t>()};
    }
    spec.pool_kernel = j.at("pool_kernel").get<std::size_t>();
    spec.pool_stride = j.at("pool_stride").get<std::size_t>();
    spec.init_seed = j.at("init_seed").get<std::uint64_t>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model spec: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const nlohmann::json& metadata) {
  Model view = model;  // shares tensors; slots() needs a mutable handle
  auto all = slots(view);
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["spec"] = spec_to_json(model.spec());
  header["tensors"] = nlohmann::json::array();
  for (const auto& s : all) header["tensors"].push_back({{"name", s.name}, {"shape", s.shape}});
  header["metadata"] = metadata;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& s : all) {
    for (double v : s.values) put<double>(out, v);
  }
  if (!out) throw DataError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + ": not a brakenet checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = get<std::uint64_t>(in, path);
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw DataError(path.string() + ": truncated checkpoint header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint header: " + e.what());
  }

  Model model(spec_from_json(header.at("spec")));
  auto all = slots(model);
  const auto& listed = header.at("tensors");
  if (listed.size() != all.size()) {
    throw DataError(path.string() + ": tensor count does not match the model spec");
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (listed[i].at("name").get<std::string>() != all[i].name ||
        listed[i].at("shape").get<Shape>() != all[i].shape) {
      throw DataError(path.string() + ": tensor '" + all[i].name + "' does not match the spec");
    }
    for (auto& v : all[i].values) v = get<double>(in, path);
  }
  return {std::move(model), header.value("metadata", nlohmann::json::object())};
}

}  // namespace brakenet
