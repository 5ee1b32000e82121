#include "qrrec/model/checkpoint.hpp"

#include "qrrec/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace qrrec::model {

namespace {

constexpr char kMagic[8] = {'Q', 'R', 'R', 'E', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"dim", c.dim},
          {"seq_len", c.seq_len},
          {"scales", c.scales},
          {"num_layers", c.num_layers},
          {"use_output_gate", c.use_output_gate},
          {"use_user_profile", c.use_user_profile},
          {"aggregation", to_string(c.aggregation)},
          {"dropout", c.dropout},
          {"conv_bias", c.conv_bias},
          {"num_items", c.num_items},
          {"num_users", c.num_users}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.dim = j.at("dim").get<int>();
    c.seq_len = j.at("seq_len").get<int>();
    c.scales = j.at("scales").get<std::vector<int>>();
    c.num_layers = j.at("num_layers").get<int>();
    c.use_output_gate = j.at("use_output_gate").get<bool>();
    c.use_user_profile = j.at("use_user_profile").get<bool>();
    c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    c.dropout = j.at("dropout").get<double>();
    c.conv_bias = j.at("conv_bias").get<bool>();
    c.num_items = j.at("num_items").get<int>();
    c.num_users = j.at("num_users").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParameterStore& store, const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format"] = "qrrec-checkpoint";
  header["format_version"] = kCheckpointFormatVersion;
  header["config"] = config_to_json(config);
  header["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
  header["arrays"] = nlohmann::json::array();
  store.for_each([&](const std::string& name, const Slot& s) {
    header["arrays"].push_back({{"name", name}, {"rows", s.value.rows()}, {"cols", s.value.cols()}});
  });
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, static_cast<std::uint32_t>(kCheckpointFormatVersion));
  write_pod(os, static_cast<std::uint64_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  store.for_each([&](const std::string&, const Slot& s) {
    os.write(reinterpret_cast<const char*>(s.value.data()),
             static_cast<std::streamsize>(s.value.size() * sizeof(double)));
  });
  if (!os) throw IoError("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path.string() + "'");
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("checkpoint: '" + path.string() + "' is not a checkpoint file");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointFormatVersion)
    throw CompatibilityError("checkpoint: unsupported format version " + std::to_string(version));
  const auto header_len = read_pod<std::uint64_t>(is);
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw IoError("checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  ck.metadata = header.value("metadata", nlohmann::json::object());
  // Shapes come from a fresh store; the header must agree with them.
  Rng unused(0);
  ck.store = ParameterStore::initialize(ck.config, unused, 0.0);
  const auto& arrays = header.at("arrays");
  std::size_t index = 0;
  ck.store.for_each([&](const std::string& name, Slot& s) {
    if (index >= arrays.size() || arrays[index].at("name") != name ||
        arrays[index].at("rows").get<Eigen::Index>() != s.value.rows() ||
        arrays[index].at("cols").get<Eigen::Index>() != s.value.cols())
      throw CompatibilityError("checkpoint: array '" + name + "' missing or misshapen");
    is.read(reinterpret_cast<char*>(s.value.data()),
            static_cast<std::streamsize>(s.value.size() * sizeof(double)));
    if (!is) throw IoError("checkpoint: truncated array '" + name + "'");
    s.zero_grad();
    ++index;
  });
  if (index != arrays.size()) throw CompatibilityError("checkpoint: unexpected extra arrays");
  return ck;
}

}  // namespace qrrec::model
