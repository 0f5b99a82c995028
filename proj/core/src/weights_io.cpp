#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "oodrecon/error.hpp"
#include "oodrecon/generator.hpp"
#include "oodrecon/io_util.hpp"
#include "oodrecon/version.hpp"

namespace oodrecon::generator {

namespace {
constexpr char kMagic[4] = {'R', 'G', 'E', 'N'};
}

void save_weights(const GeneratorParams& params, const std::filesystem::path& path,
                  const WeightMetadata& meta) {
  const auto layout = param_layout(params.config);
  const std::size_t expected = layout.back().offset + layout.back().count;
  if (params.data.size() != expected)
    fail(ErrorKind::invalid_input, "parameter vector does not match the config layout");
  for (float v : params.data)
    if (!std::isfinite(v)) fail(ErrorKind::invalid_input, "non-finite parameter");

  nlohmann::json header;
  header["config"] = {
      {"latent_dim", params.config.latent_dim},
      {"base_resolution", params.config.base_resolution},
      {"output_resolution", params.config.output_resolution},
      {"channels", params.config.channels},
      {"activation_slope", params.config.activation_slope},
  };
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& t : layout) tensors.push_back({{"name", t.name}, {"dims", t.dims}});
  header["seed"] = meta.seed;
  header["training"] = {
      {"epochs", meta.epochs},
      {"best_val_loss", meta.best_val_loss},
      {"note", meta.note},
  };
  header["tool_version"] = std::string(kToolVersion);
  const std::string header_bytes = header.dump();

  std::string bytes;
  bytes.reserve(4 + 2 + 4 + header_bytes.size() + params.data.size() * 4);
  bytes.append(kMagic, 4);
  append_u16le(bytes, kWeightFormatVersion);
  append_u32le(bytes, static_cast<std::uint32_t>(header_bytes.size()));
  bytes += header_bytes;
  append_f32le_array(bytes, params.data.data(), params.data.size());
  atomic_write_file(path, bytes);
}

LoadedWeights load_weights(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader reader(bytes);
  if (reader.take(4) != std::string_view(kMagic, 4))
    fail(ErrorKind::format, "bad weight-file magic: " + path.string());
  const std::uint16_t version = reader.u16le();
  if (version != kWeightFormatVersion)
    fail(ErrorKind::format,
         "unsupported weight format version " + std::to_string(version) + ": " +
             path.string());
  const std::uint32_t header_len = reader.u32le();
  const auto header_bytes = reader.take(header_len);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, "bad weight header JSON: " + std::string(e.what()));
  }

  LoadedWeights loaded;
  try {
    const auto& cfg = header.at("config");
    loaded.params.config.latent_dim = cfg.at("latent_dim").get<int>();
    loaded.params.config.base_resolution = cfg.at("base_resolution").get<int>();
    loaded.params.config.output_resolution = cfg.at("output_resolution").get<int>();
    loaded.params.config.channels = cfg.at("channels").get<std::vector<int>>();
    loaded.params.config.activation_slope = cfg.at("activation_slope").get<float>();
    loaded.meta.seed = header.value("seed", std::uint64_t{0});
    if (header.contains("training")) {
      const auto& tr = header.at("training");
      loaded.meta.epochs = tr.value("epochs", 0);
      loaded.meta.best_val_loss = tr.value("best_val_loss", 0.0);
      loaded.meta.note = tr.value("note", std::string{});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, "incomplete weight header: " + std::string(e.what()));
  }

  std::vector<TensorSpec> layout;
  try {
    layout = param_layout(loaded.params.config);
  } catch (const Error&) {
    fail(ErrorKind::format, "weight header declares an invalid config: " + path.string());
  }

  // The declared tensor table must match the layout the config implies.
  const auto& tensors = header.at("tensors");
  if (!tensors.is_array() || tensors.size() != layout.size())
    fail(ErrorKind::format, "weight header tensor table is inconsistent: " + path.string());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors[i].value("name", std::string{}) != layout[i].name ||
        tensors[i].value("dims", std::vector<int>{}) != layout[i].dims)
      fail(ErrorKind::format,
           "weight header tensor '" + layout[i].name + "' is inconsistent: " +
               path.string());
  }

  const std::size_t count = layout.back().offset + layout.back().count;
  if (reader.remaining() != count * 4)
    fail(ErrorKind::format,
         "weight payload size mismatch (expected " + std::to_string(count * 4) +
             " bytes, found " + std::to_string(reader.remaining()) + "): " +
             path.string());
  loaded.params.data.resize(count);
  reader.f32le_array(loaded.params.data.data(), count);
  for (float v : loaded.params.data)
    if (!std::isfinite(v))
      fail(ErrorKind::format, "non-finite weight value: " + path.string());
  return loaded;
}

}  // namespace oodrecon::generator
