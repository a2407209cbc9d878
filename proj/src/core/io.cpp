#include "core/io.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "core/csv.hpp"
#include "core/error.hpp"

namespace lungtex {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& bytes, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

class Cursor {
 public:
  Cursor(const std::string& bytes, std::size_t end) : p_(reinterpret_cast<const unsigned char*>(bytes.data())), end_(end) {}
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = get_u32(p_ + pos_);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw FormatError("weight file: unexpected end of data");
  }
  const unsigned char* p_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

fs::path with_suffix(const fs::path& base, const std::string& suffix) { return fs::path(base.string() + suffix); }

}  // namespace

std::string serialize_model(const Model& model) {
  std::string out = "TQWT";
  put_u32(out, kWeightFileVersion);
  const std::string cfg = to_json(model.config()).dump();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  const auto& tensors = model.tensors();
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) put_f32(out, v);
  }
  put_u32(out, crc_of(out.data(), out.size()));
  return out;
}

Model deserialize_model(const std::string& bytes) {
  if (bytes.size() < 12) throw ChecksumError("weight file: truncated");
  if (bytes.compare(0, 4, "TQWT") != 0) throw FormatError("weight file: bad magic (not a TQWT file)");
  const std::uint32_t version = get_u32(reinterpret_cast<const unsigned char*>(bytes.data()) + 4);
  if (version != kWeightFileVersion)
    throw FormatError("weight file: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kWeightFileVersion) + ")");
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = get_u32(reinterpret_cast<const unsigned char*>(bytes.data()) + body);
  if (stored != crc_of(bytes.data(), body)) throw ChecksumError("weight file: checksum mismatch (corrupt or truncated)");

  Cursor cur(bytes, body);
  cur.str(8);
  const std::string cfg_text = cur.str(cur.u32());
  Json cfg_json;
  try {
    cfg_json = Json::parse(cfg_text);
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("weight file: config block is not JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(cfg_json, "model");
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("weight file: ") + e.what());
  }
  Model model(cfg);
  auto& tensors = model.tensors();
  const std::uint32_t count = cur.u32();
  if (count != tensors.size())
    throw FormatError("weight file: " + std::to_string(count) + " tensors, model expects " + std::to_string(tensors.size()));
  for (auto& t : tensors) {
    const std::string name = cur.str(cur.u32());
    if (name != t.name) throw FormatError("weight file: tensor '" + name + "' where '" + t.name + "' was expected");
    const std::uint32_t rank = cur.u32();
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(cur.u32());
    if (shape != t.shape) throw FormatError("weight file: shape mismatch for tensor '" + name + "'");
    for (auto& v : t.values) v = cur.f32();
  }
  if (cur.remaining() != 0) throw FormatError("weight file: trailing bytes after the last tensor");
  return model;
}

void save_model(const Model& model, const fs::path& path) { write_file(serialize_model(model), path); }

Model load_model(const fs::path& path) { return deserialize_model(read_file(path)); }

void save_patchset(const PatchSet& set, const fs::path& base) {
  const fs::path header = with_suffix(base, ".json");
  const fs::path tensor_file = with_suffix(base, ".f32");
  const fs::path records_file = with_suffix(base, ".records.csv");
  const PatchShape shape = set.shape();
  Json counts = Json::object();
  const auto cc = set.class_counts();
  for (TextureLabel l : kAllLabels) counts[std::string(name_of(l))] = cc[index_of(l)];
  const Json h{{"format", "lungtex-patchset"},
               {"version", 1},
               {"split_tag", set.split_tag},
               {"spec", to_json(set.spec)},
               {"shape", {shape.depth, shape.height, shape.width}},
               {"count", set.size()},
               {"class_counts", counts},
               {"scan_ids", set.scan_ids()},
               {"tensor_file", tensor_file.filename().string()},
               {"records_file", records_file.filename().string()}};
  write_json(h, header);

  std::string raw;
  raw.reserve(set.tensors.size() * 4);
  for (float v : set.tensors) put_f32(raw, v);
  write_file(raw, tensor_file);

  std::ostringstream csv;
  csv << "label,i,j,k,scan_id,fill\n";
  char buf[64];
  for (const auto& r : set.records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.fill);
    csv << name_of(r.label) << "," << r.origin.i << "," << r.origin.j << "," << r.origin.k << "," << r.scan_id << ","
        << buf << "\n";
  }
  write_file(csv.str(), records_file);
}

PatchSet load_patchset(const fs::path& base) {
  const fs::path header = with_suffix(base, ".json");
  const Json h = read_json(header);
  JsonFields f(h, "patchset");
  std::string format;
  int version = 0;
  f.require("format", format);
  f.require("version", version);
  if (format != "lungtex-patchset") throw FormatError("patch set header has format '" + format + "'");
  if (version != 1) throw FormatError("patch set version " + std::to_string(version) + " is not supported");
  PatchSet set;
  f.require("split_tag", set.split_tag);
  const Json* spec = f.get("spec");
  if (!spec) throw FormatError("patch set header lacks 'spec'");
  set.spec = patch_spec_from_json(*spec, "patchset.spec");
  std::array<int, 3> shape{};
  std::int64_t count = 0;
  std::string tensor_name, records_name;
  std::vector<std::string> scan_ids;
  f.require("shape", shape);
  f.require("count", count);
  f.get("class_counts");
  f.read("scan_ids", scan_ids);
  f.require("tensor_file", tensor_name);
  f.require("records_file", records_name);
  f.done();
  const PatchShape ps = set.shape();
  if (shape != std::array<int, 3>{ps.depth, ps.height, ps.width})
    throw FormatError("patch set shape does not match its spec");

  const fs::path dir = header.parent_path();
  std::ifstream rin(dir / records_name);
  if (!rin) throw IoError("cannot open '" + (dir / records_name).string() + "'");
  const CsvTable table = read_csv(rin);
  const std::size_t c_label = table.column("label"), c_i = table.column("i"), c_j = table.column("j"),
                    c_k = table.column("k"), c_scan = table.column("scan_id"), c_fill = table.column("fill");
  for (const auto& row : table.rows) {
    PatchRecord r;
    const auto label = label_from_name(row[c_label]);
    if (!label) throw FormatError("patch records: unknown label '" + row[c_label] + "'");
    r.label = *label;
    r.origin = Voxel{static_cast<int>(parse_int(row[c_i], "i")), static_cast<int>(parse_int(row[c_j], "j")),
                     static_cast<int>(parse_int(row[c_k], "k"))};
    r.scan_id = row[c_scan];
    r.fill = parse_double(row[c_fill], "fill");
    set.records.push_back(std::move(r));
  }
  if (static_cast<std::int64_t>(set.records.size()) != count)
    throw FormatError("patch set header declares " + std::to_string(count) + " records, found " +
                      std::to_string(set.records.size()));

  const std::string raw = read_file(dir / tensor_name);
  const std::size_t expected = set.records.size() * static_cast<std::size_t>(ps.elements());
  if (raw.size() != expected * 4)
    throw FormatError("patch tensor file holds " + std::to_string(raw.size()) + " bytes, expected " +
                      std::to_string(expected * 4));
  set.tensors.resize(expected);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  for (std::size_t i = 0; i < expected; ++i) set.tensors[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  return set;
}

const ManifestEntry& Manifest::entry(const std::string& scan_id) const {
  for (const auto& e : scans)
    if (e.scan_id == scan_id) return e;
  throw InvalidArgument("manifest has no scan '" + scan_id + "'");
}

const std::vector<std::string>& Manifest::split(const std::string& name) const {
  for (const auto& [n, ids] : splits)
    if (n == name) return ids;
  throw InvalidArgument("manifest has no split '" + name + "'");
}

Manifest load_manifest(const fs::path& path) {
  const Json j = read_json(path);
  const fs::path dir = fs::absolute(path).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : dir / p; };
  JsonFields f(j, "manifest");
  Manifest m;
  const Json* scans = f.get("scans");
  if (!scans || !scans->is_array()) throw InvalidArgument("manifest: 'scans' must be an array");
  for (std::size_t i = 0; i < scans->size(); ++i) {
    JsonFields sf((*scans)[i], "manifest.scans[" + std::to_string(i) + "]");
    ManifestEntry e;
    std::string volume, labels, lung;
    sf.require("scan_id", e.scan_id);
    sf.require("volume", volume);
    sf.require("labels", labels);
    sf.read("lung", lung);
    sf.done();
    e.volume = resolve(volume);
    e.labels = resolve(labels);
    if (!lung.empty()) e.lung = resolve(lung);
    for (const auto& other : m.scans)
      if (other.scan_id == e.scan_id) throw InvalidArgument("manifest: duplicate scan_id '" + e.scan_id + "'");
    m.scans.push_back(std::move(e));
  }
  if (const Json* splits = f.get("splits")) {
    if (!splits->is_object()) throw InvalidArgument("manifest: 'splits' must be an object");
    for (auto it = splits->begin(); it != splits->end(); ++it) {
      std::vector<std::string> ids;
      from_json_value(it.value(), "manifest.splits." + it.key(), ids);
      for (const auto& id : ids) m.entry(id);
      m.splits.emplace_back(it.key(), std::move(ids));
    }
  }
  f.done();
  return m;
}

void save_manifest(const Manifest& m, const fs::path& path) {
  const fs::path dir = fs::absolute(path).parent_path();
  auto rel = [&](const fs::path& p) { return fs::absolute(p).lexically_normal().lexically_relative(dir).string(); };
  Json scans = Json::array();
  for (const auto& e : m.scans) {
    Json s{{"scan_id", e.scan_id}, {"volume", rel(e.volume)}, {"labels", rel(e.labels)}};
    if (e.lung) s["lung"] = rel(*e.lung);
    scans.push_back(s);
  }
  Json j{{"scans", scans}};
  if (!m.splits.empty()) {
    Json splits = Json::object();
    for (const auto& [name, ids] : m.splits) splits[name] = ids;
    j["splits"] = splits;
  }
  write_json(j, path);
}

Json to_json(const PhantomCensus& census) {
  Json counts = Json::object(), fractions = Json::object();
  for (TextureLabel l : kAllLabels) {
    counts[std::string(name_of(l))] = census.counts[index_of(l)];
    fractions[std::string(name_of(l))] = census.fraction(l);
  }
  return Json{{"lung_voxels", census.lung_voxels}, {"counts", counts}, {"fractions", fractions}};
}

Json to_json(const QuantReport& r) {
  Json classes = Json::object();
  for (TextureLabel l : kAllLabels) {
    const auto& c = r.of(l);
    classes[std::string(name_of(l))] = Json{{"voxels", c.voxels}, {"volume_ml", c.volume_ml}, {"pct", c.pct}};
  }
  return Json{{"scan_id", r.scan_id},
              {"lung_voxels", r.lung_voxels},
              {"total_lung_ml", r.total_lung_ml},
              {"classes", classes},
              {"fibrosis_pct", r.fibrosis_pct}};
}

Json to_json(const SplitEvaluation& e) {
  Json per_class = Json::object(), counts = Json::object();
  for (TextureLabel l : kAllLabels) {
    const auto& v = e.auc.per_class[index_of(l)];
    per_class[std::string(name_of(l))] = v ? Json(*v) : Json(nullptr);
    counts[std::string(name_of(l))] = e.class_counts[index_of(l)];
  }
  return Json{{"split", e.split},          {"n", e.n},
              {"class_counts", counts},    {"accuracy", e.accuracy},
              {"auc_per_class", per_class}, {"auc_micro", e.auc.micro},
              {"auc_macro", e.auc.macro}};
}

Json to_json(const SearchResult& r) {
  Json board = Json::array();
  int rank = 1;
  for (const auto& e : r.leaderboard)
    board.push_back(Json{{"rank", rank++},
                         {"point", to_json(e.point)},
                         {"score", e.score},
                         {"fold_scores", e.fold_scores},
                         {"infeasible", e.infeasible},
                         {"note", e.note}});
  return Json{{"best", to_json(r.best)}, {"best_spec", to_json(r.best_spec)}, {"best_model", to_json(r.best_model)},
              {"leaderboard", board}};
}

Json to_json(const TestResult& t) {
  return Json{{"statistic", t.statistic}, {"p_value", t.p_value}, {"method", t.method}, {"n", t.n}, {"df", t.df}};
}

Json to_json(const SeveritySummary& s) {
  Json features = Json::array();
  for (const auto& f : s.features) {
    Json grades = Json::array();
    for (const auto& g : f.grades)
      grades.push_back(Json{{"grade", std::string(name_of(g.grade))},
                            {"n", g.n},
                            {"median", g.median},
                            {"q1", g.q1},
                            {"q3", g.q3}});
    features.push_back(Json{{"feature", feature_name(f.feature)}, {"grades", grades},
                            {"kruskal_wallis", to_json(f.kruskal_wallis)}});
  }
  return Json{{"features", features}, {"warnings", s.warnings}};
}

Json to_json(const ClinicalCorrelation& r) {
  Json dlco = Json::array();
  for (const auto& fc : r.dlco) {
    Json row{{"feature", feature_name(fc.feature)},
             {"rho", fc.spearman.rho},
             {"p_value", fc.spearman.p_value},
             {"n", fc.spearman.n}};
    if (!fc.note.empty()) row["note"] = fc.note;
    dlco.push_back(row);
  }
  return Json{{"n", r.n},
              {"spearman_vs_dlco", dlco},
              {"emphysema_by_emphysema_grade", to_json(r.by_emphysema_grade)},
              {"fibrosis_by_fibrosis_grade", to_json(r.by_fibrosis_grade)}};
}

Json to_json(const TrainResult& r) {
  return Json{{"epochs", r.history.size()},
              {"best_epoch", r.best_epoch},
              {"best_val_acc", r.best_val_acc},
              {"stopped_early", r.stopped_early}};
}

void write_json(const Json& j, const fs::path& path) { write_file(j.dump(2) + "\n", path); }

Json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const std::string& text, const fs::path& path) { write_file(text, path); }

}  // namespace lungtex
