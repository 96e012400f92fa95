#include "hprobe/dataset_io.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "hprobe/binary.hpp"
#include "hprobe/error.hpp"
#include "json.hpp"

namespace hprobe {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kHeaderBytes = 8;

std::uint64_t matrix_bytes(std::int64_t rows, std::int64_t cols) {
  return static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 4;
}

void append_matrix(std::string& blob, const FloatMatrix& m) {
  const float* data = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) binary::put_f32(blob, data[i]);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + p.string());
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw FormatError("manifest: " + where + " lacks field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw FormatError("manifest: " + where + " field '" + key +
                      "' has the wrong type: " + e.what());
  }
}

}  // namespace

DatasetMeta save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);

  std::uint64_t total = kHeaderBytes;
  for (const auto& seq : ds.sequences) {
    for (const auto& [l, m] : seq.states) total += matrix_bytes(m.rows(), m.cols());
    if (seq.dist_base) total += matrix_bytes(seq.dist_base->rows(), seq.dist_base->cols());
    if (seq.dist_adapted) total += matrix_bytes(seq.dist_adapted->rows(), seq.dist_adapted->cols());
  }
  std::string blob;
  blob.reserve(total);
  blob.append(kDatasetMagic, 4);
  binary::put_u32(blob, kDatasetVersion);

  DatasetMeta meta = ds.meta;
  meta.index.clear();
  json seqs = json::array();
  for (const auto& seq : ds.sequences) {
    SequenceIndex idx;
    idx.id = seq.id;
    json layer_offsets = json::object();
    for (const auto& [l, m] : seq.states) {
      idx.layer_offsets[l] = blob.size();
      layer_offsets[std::to_string(l)] = blob.size();
      append_matrix(blob, m);
    }
    json offsets = {{"layers", layer_offsets},
                    {"dist_base", nullptr},
                    {"dist_adapted", nullptr}};
    if (seq.dist_base) {
      idx.dist_base_offset = blob.size();
      offsets["dist_base"] = blob.size();
      append_matrix(blob, *seq.dist_base);
    }
    if (seq.dist_adapted) {
      idx.dist_adapted_offset = blob.size();
      offsets["dist_adapted"] = blob.size();
      append_matrix(blob, *seq.dist_adapted);
    }

    json spans = json::array();
    for (const auto& s : seq.spans) {
      spans.push_back({{"start", s.start}, {"end", s.end}, {"label", s.label}});
    }
    json entry = {{"id", seq.id},
                  {"num_tokens", seq.num_tokens},
                  {"mask", seq.mask},
                  {"spans", spans},
                  {"token_labels", seq.token_labels},
                  {"nll", nullptr},
                  {"offsets", offsets}};
    if (seq.nll) entry["nll"] = *seq.nll;
    seqs.push_back(std::move(entry));
    meta.index.push_back(std::move(idx));
  }

  json manifest = {{"magic", std::string(kDatasetMagic, 4)},
                   {"version", kDatasetVersion},
                   {"blob", kBlobName},
                   {"blob_bytes", blob.size()},
                   {"hidden_dim", meta.hidden_dim},
                   {"num_layers", meta.num_layers},
                   {"vocab_size", nullptr},
                   {"layers", meta.layers},
                   {"fingerprint", meta.fingerprint},
                   {"sequences", seqs}};
  if (meta.vocab_size) manifest["vocab_size"] = *meta.vocab_size;

  write_file(dir / kBlobName, blob);
  write_file(dir / kManifestName, manifest.dump(1) + "\n");
  return meta;
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  if (!fs::exists(manifest_path)) {
    throw FormatError("no " + std::string(kManifestName) + " in " + dir.string());
  }
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }

  const std::string expected_magic(kDatasetMagic, 4);
  if (field<std::string>(manifest, "magic", "manifest") != expected_magic) {
    throw BadMagicError("manifest: bad magic, expected '" + expected_magic + "'");
  }
  const auto manifest_version = field<std::uint32_t>(manifest, "version", "manifest");
  if (manifest_version != kDatasetVersion) {
    throw VersionMismatchError("manifest version " + std::to_string(manifest_version) +
                               ", expected " + std::to_string(kDatasetVersion));
  }

  const std::string blob_name = field<std::string>(manifest, "blob", "manifest");
  const std::string blob = read_file(dir / blob_name);
  if (blob.size() < kHeaderBytes) {
    throw BadMagicError("blob too short for header, expected magic '" +
                        expected_magic + "'");
  }
  if (blob.compare(0, 4, expected_magic) != 0) {
    throw BadMagicError("blob: bad magic, expected '" + expected_magic + "'");
  }
  const std::uint32_t blob_version = binary::get_u32(blob.data() + 4);
  if (blob_version != kDatasetVersion) {
    throw VersionMismatchError("blob version " + std::to_string(blob_version) +
                               ", expected " + std::to_string(kDatasetVersion));
  }
  const auto declared = field<std::uint64_t>(manifest, "blob_bytes", "manifest");

  Dataset ds;
  auto& meta = ds.meta;
  meta.hidden_dim = field<int>(manifest, "hidden_dim", "manifest");
  meta.num_layers = field<int>(manifest, "num_layers", "manifest");
  if (!manifest.at("vocab_size").is_null()) {
    meta.vocab_size = field<int>(manifest, "vocab_size", "manifest");
  }
  meta.layers = field<std::vector<int>>(manifest, "layers", "manifest");
  meta.fingerprint = field<std::string>(manifest, "fingerprint", "manifest");

  std::uint64_t last_offset = 0;
  bool have_last = false;
  // Resolves one payload: offsets must increase strictly, lie inside the
  // declared blob, and the actual file must hold the full matrix.
  auto read_matrix = [&](const std::string& id, std::uint64_t offset,
                         std::int64_t rows, std::int64_t cols) {
    const std::uint64_t bytes = matrix_bytes(rows, cols);
    if (offset < kHeaderBytes || (have_last && offset <= last_offset) ||
        offset + bytes > declared) {
      throw OffsetOutOfBoundsError(
          "sequence '" + id + "': offset " + std::to_string(offset) +
              " out of bounds (blob_bytes " + std::to_string(declared) + ")",
          id);
    }
    if (offset + bytes > blob.size()) {
      throw TruncatedBlobError("sequence '" + id + "': blob truncated at byte " +
                                   std::to_string(blob.size()) + ", payload needs " +
                                   std::to_string(offset + bytes),
                               id);
    }
    last_offset = offset;
    have_last = true;
    FloatMatrix m(rows, cols);
    const char* p = blob.data() + offset;
    float* out = m.data();
    for (std::int64_t i = 0; i < rows * cols; ++i) out[i] = binary::get_f32(p + 4 * i);
    return m;
  };

  for (const auto& entry : field<json>(manifest, "sequences", "manifest")) {
    TokenSequence seq;
    seq.id = field<std::string>(entry, "id", "sequence");
    const std::string where = "sequence '" + seq.id + "'";
    seq.num_tokens = field<int>(entry, "num_tokens", where);
    seq.mask = field<std::vector<std::uint8_t>>(entry, "mask", where);
    seq.token_labels = field<std::vector<std::uint8_t>>(entry, "token_labels", where);
    for (const auto& s : field<json>(entry, "spans", where)) {
      seq.spans.push_back({field<int>(s, "start", where), field<int>(s, "end", where),
                           field<int>(s, "label", where)});
    }
    if (!entry.at("nll").is_null()) {
      seq.nll = field<std::vector<double>>(entry, "nll", where);
    }

    SequenceIndex idx;
    idx.id = seq.id;
    const json offsets = field<json>(entry, "offsets", where);
    std::map<int, std::uint64_t> layer_offsets;
    const json layer_entries = field<json>(offsets, "layers", where);
    for (const auto& [key, value] : layer_entries.items()) {
      layer_offsets[std::stoi(key)] = value.get<std::uint64_t>();
    }
    for (const auto& [l, off] : layer_offsets) {
      seq.states.emplace(l, read_matrix(seq.id, off, seq.num_tokens, meta.hidden_dim));
    }
    idx.layer_offsets = layer_offsets;
    const int vocab = meta.vocab_size.value_or(0);
    if (!offsets.at("dist_base").is_null()) {
      idx.dist_base_offset = offsets.at("dist_base").get<std::uint64_t>();
      seq.dist_base = read_matrix(seq.id, *idx.dist_base_offset, seq.num_tokens, vocab);
    }
    if (!offsets.at("dist_adapted").is_null()) {
      idx.dist_adapted_offset = offsets.at("dist_adapted").get<std::uint64_t>();
      seq.dist_adapted =
          read_matrix(seq.id, *idx.dist_adapted_offset, seq.num_tokens, vocab);
    }
    meta.index.push_back(std::move(idx));
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace hprobe
