#pragma once

// RVOL: a JSON header `<name>.rvol.json` next to a headerless little-endian
// raw file `<name>.raw` (x fastest, then y, then z).
//
//   {"dims":[nx,ny,nz],"spacing_mm":[sx,sy,sz],"dtype":"int16",
//    "byte_order":"little","data_file":"<name>.raw"}
//
// Volumes are int16 HU; masks and classification maps are uint8.

#include <filesystem>

#include "core/volume.hpp"

namespace lungtex {

// `<stem>.rvol.json` for either a header path or a bare stem.
std::filesystem::path rvol_header_path(const std::filesystem::path& path);

Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& volume, const std::filesystem::path& path);

LabelMask load_label_mask(const std::filesystem::path& path);
void save_label_mask(const LabelMask& mask, const std::filesystem::path& path);

LungMask load_lung_mask(const std::filesystem::path& path);
void save_lung_mask(const LungMask& mask, const std::filesystem::path& path);

ClassificationMap load_classification_map(const std::filesystem::path& path);
void save_classification_map(const ClassificationMap& map, const std::filesystem::path& path);

}  // namespace lungtex
