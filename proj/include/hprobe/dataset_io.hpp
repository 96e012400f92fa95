#ifndef HPROBE_DATASET_IO_HPP_
#define HPROBE_DATASET_IO_HPP_

#include <cstdint>
#include <filesystem>

#include "hprobe/dataset.hpp"

namespace hprobe {

inline constexpr char kDatasetMagic[4] = {'T', 'P', 'H', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kBlobName = "states.bin";

// Writes <dir>/manifest.json and <dir>/states.bin (see FORMAT.md). Returns
// the meta with the sequence index filled in.
DatasetMeta save_dataset(const Dataset& ds, const std::filesystem::path& dir);

// Throws BadMagicError, VersionMismatchError, OffsetOutOfBoundsError or
// TruncatedBlobError; other malformed manifests raise FormatError.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace hprobe

#endif  // HPROBE_DATASET_IO_HPP_
