#include "core/rvol.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <string>

namespace lungtex {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kSuffix = ".rvol.json";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
T swap_bytes(T v) {
  auto u = static_cast<std::make_unsigned_t<T>>(v);
  std::make_unsigned_t<T> r = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) r = static_cast<decltype(r)>((r << 8) | ((u >> (8 * b)) & 0xFF));
  return static_cast<T>(r);
}

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, std::int16_t>) return "int16";
  else return "uint8";
}

template <typename T>
void write_image(const std::span<const T> data, const Grid& grid, const fs::path& path) {
  const fs::path header = rvol_header_path(path);
  std::string stem = header.filename().string();
  stem.resize(stem.size() - kSuffix.size());
  const std::string raw_name = stem + ".raw";

  ordered_json h;
  h["dims"] = grid.dims;
  h["spacing_mm"] = grid.spacing_mm;
  h["dtype"] = dtype_name<T>();
  h["byte_order"] = "little";
  h["data_file"] = raw_name;

  if (header.has_parent_path()) fs::create_directories(header.parent_path());
  {
    std::ofstream out(header, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + header.string());
    out << h.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + header.string());
  }

  const fs::path raw = header.parent_path() / raw_name;
  std::ofstream out(raw, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + raw.string());
  if constexpr (sizeof(T) > 1 && std::endian::native != std::endian::little) {
    for (T v : data) {
      const T u = swap_bytes(v);
      out.write(reinterpret_cast<const char*>(&u), sizeof u);
    }
  } else {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
  }
  if (!out) throw IoError("write failed: " + raw.string());
}

template <typename T>
std::pair<Grid, std::vector<T>> read_image(const fs::path& path) {
  const fs::path header = rvol_header_path(path);
  std::ifstream in(header, std::ios::binary);
  if (!in) throw IoError("missing RVOL header " + header.string());

  ordered_json h;
  try {
    h = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed RVOL header " + header.string() + ": " + e.what());
  }
  static constexpr std::array<std::string_view, 5> kKeys = {"dims", "spacing_mm", "dtype", "byte_order",
                                                            "data_file"};
  for (const auto& [key, _] : h.items())
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end())
      throw FormatError("unknown RVOL header key '" + key + "'");

  Grid grid;
  std::string data_file;
  try {
    grid.dims = h.at("dims").get<std::array<int, 3>>();
    grid.spacing_mm = h.at("spacing_mm").get<std::array<double, 3>>();
    if (h.at("dtype").get<std::string>() != dtype_name<T>())
      throw FormatError("RVOL dtype must be " + std::string(dtype_name<T>()) + " in " + header.string());
    if (h.at("byte_order").get<std::string>() != "little")
      throw FormatError("RVOL byte_order must be little in " + header.string());
    data_file = h.at("data_file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad RVOL header " + header.string() + ": " + e.what());
  }
  grid.validate();

  const fs::path raw = header.parent_path() / data_file;
  std::ifstream rin(raw, std::ios::binary | std::ios::ate);
  if (!rin) throw IoError("missing RVOL data file " + raw.string());
  const auto bytes = static_cast<std::int64_t>(rin.tellg());
  const std::int64_t expected = grid.voxel_count() * static_cast<std::int64_t>(sizeof(T));
  if (bytes != expected)
    throw FormatError("RVOL size mismatch: " + raw.string() + " has " + std::to_string(bytes) +
                      " bytes, header implies " + std::to_string(expected));
  rin.seekg(0);
  std::vector<T> data(static_cast<std::size_t>(grid.voxel_count()));
  rin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected));
  if (!rin) throw IoError("read failed: " + raw.string());
  if constexpr (sizeof(T) > 1 && std::endian::native != std::endian::little)
    for (T& v : data) v = swap_bytes(v);
  return {grid, std::move(data)};
}

template <typename Image>
Image load_as(const fs::path& path) {
  auto [grid, data] = read_image<typename Image::value_type>(path);
  Image img(grid, std::move(data));
  if constexpr (!std::is_same_v<Image, Volume>) {
    try {
      validate_codes(img);
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string(e.what()) + ": " + path.string());
    }
  }
  return img;
}

}  // namespace

fs::path rvol_header_path(const fs::path& path) {
  const std::string s = path.string();
  if (ends_with(s, kSuffix)) return path;
  return fs::path(s + std::string(kSuffix));
}

Volume load_volume(const fs::path& path) { return load_as<Volume>(path); }
void save_volume(const Volume& v, const fs::path& path) { write_image(v.data(), v.grid(), path); }

LabelMask load_label_mask(const fs::path& path) { return load_as<LabelMask>(path); }
void save_label_mask(const LabelMask& m, const fs::path& path) {
  validate_codes(m);
  write_image(m.data(), m.grid(), path);
}

LungMask load_lung_mask(const fs::path& path) { return load_as<LungMask>(path); }
void save_lung_mask(const LungMask& m, const fs::path& path) {
  validate_codes(m);
  write_image(m.data(), m.grid(), path);
}

ClassificationMap load_classification_map(const fs::path& path) { return load_as<ClassificationMap>(path); }
void save_classification_map(const ClassificationMap& m, const fs::path& path) {
  validate_codes(m);
  write_image(m.data(), m.grid(), path);
}

}  // namespace lungtex
