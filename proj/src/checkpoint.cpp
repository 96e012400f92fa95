#include "hprobe/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "hprobe/binary.hpp"
#include "hprobe/error.hpp"
#include "json.hpp"

namespace hprobe {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const ProbeParams& params,
                     const CheckpointInfo& info) {
  const auto& a = params.arch;
  json header = {{"arch",
                  {{"kind", to_string(a.kind)},
                   {"layer_dims", a.layer_dims},
                   {"activation", to_string(a.activation)},
                   {"use_layer_norm", a.use_layer_norm}}},
                 {"seed", info.seed},
                 {"layer", info.layer},
                 {"fingerprint", info.fingerprint},
                 {"num_parameters", params.num_parameters()}};
  const std::string text = header.dump();

  std::string bytes(kCheckpointMagic, 4);
  binary::put_u32(bytes, kCheckpointVersion);
  binary::put_u64(bytes, text.size());
  bytes += text;
  for (double v : params.flatten()) binary::put_f32(bytes, static_cast<float>(v));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  if (bytes.size() < 16 || bytes.compare(0, 4, kCheckpointMagic, 4) != 0) {
    throw BadMagicError("checkpoint: bad magic, expected 'TPCK'");
  }
  const std::uint32_t version = binary::get_u32(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) +
                               ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::uint64_t header_len = binary::get_u64(bytes.data() + 8);
  if (16 + header_len > bytes.size()) {
    throw TruncatedBlobError("checkpoint: header truncated", "");
  }
  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }

  ProbeArch arch;
  const auto& ja = header.at("arch");
  arch.kind = probe_kind_from_string(ja.at("kind").get<std::string>());
  arch.layer_dims = ja.at("layer_dims").get<std::vector<int>>();
  arch.activation = activation_from_string(ja.at("activation").get<std::string>());
  arch.use_layer_norm = ja.at("use_layer_norm").get<bool>();

  Checkpoint ck;
  ck.params = init_probe(arch, 0);
  ck.info.seed = header.at("seed").get<std::uint64_t>();
  ck.info.layer = header.at("layer").get<int>();
  ck.info.fingerprint = header.at("fingerprint").get<std::string>();

  const std::size_t n = ck.params.num_parameters();
  if (header.at("num_parameters").get<std::size_t>() != n) {
    throw FormatError("checkpoint: parameter count does not match arch");
  }
  const std::size_t payload = 16 + header_len;
  if (bytes.size() < payload + 4 * n) {
    throw TruncatedBlobError("checkpoint: parameter payload truncated", "");
  }
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = binary::get_f32(bytes.data() + payload + 4 * i);
  }
  ck.params.assign(values);
  return ck;
}

}  // namespace hprobe
