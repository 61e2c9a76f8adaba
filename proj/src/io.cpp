#include "connectoflow/io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "connectoflow/errors.hpp"

namespace connectoflow {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw StateError("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_text(path)); }

void write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << content;
    if (!out) throw InputError("write failed for " + path);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw InputError("cannot write " + path + ": " + ec.message());
}

namespace {

void check_id(const std::string& id) {
  if (id.empty()) throw InputError("empty subject id");
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      throw InputError("subject id '" + id + "' is not file-name safe");
}

json parse_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw InputError("malformed JSON " + path + ": " + e.what());
  }
}

json nan_as_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

json truth_to_json(const GroundTruth& t) {
  json months = json::array(), phase = json::array(), conversion = json::array();
  for (const auto& m : t.visit_months) months.push_back(m);
  for (const auto& p : t.progression_phase) phase.push_back(p);
  for (double c : t.conversion_month) conversion.push_back(nan_as_null(c));
  return {{"planted_rois", t.planted_rois}, {"planted_edges", t.planted_edges},
          {"subject_ids", t.subject_ids},   {"visit_months", months},
          {"progression_phase", phase},     {"conversion_month", conversion}};
}

GroundTruth truth_from_json(const json& j) {
  GroundTruth t;
  try {
    t.planted_rois = j.at("planted_rois").get<std::vector<std::size_t>>();
    t.planted_edges = j.at("planted_edges").get<std::vector<NodePair>>();
    t.subject_ids = j.value("subject_ids", std::vector<std::string>{});
    t.visit_months = j.value("visit_months", std::vector<std::vector<double>>{});
    t.progression_phase = j.value("progression_phase", std::vector<std::vector<double>>{});
    for (const json& c : j.value("conversion_month", json::array()))
      t.conversion_month.push_back(c.is_null() ? std::numeric_limits<double>::quiet_NaN() : c.get<double>());
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed ground truth: ") + e.what());
  }
  return t;
}

json write_cohort(const std::string& dir, const std::vector<SubjectRecord>& subjects, const GroundTruth* truth,
                  const json& meta) {
  fs::path root = fs::absolute(dir).lexically_normal();
  if (root.filename().empty()) root = root.parent_path();
  std::error_code ec;
  if (!fs::is_directory(root.parent_path()))
    throw InputError("parent of output directory does not exist: " + root.parent_path().string());
  fs::create_directory(root, ec);
  fs::create_directory(root / "subjects", ec);
  if (ec || !fs::is_directory(root / "subjects")) throw InputError("cannot create cohort directory " + dir);

  json files = json::array();
  auto record = [&](const std::string& rel, const std::string& content) {
    write_text((root / rel).string(), content);
    files.push_back({{"path", rel}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
  };

  json listing = json::array();
  for (const SubjectRecord& s : subjects) {
    check_id(s.id);
    validate_subject(s);
    fs::create_directory(root / "subjects" / s.id, ec);
    json visits = json::array();
    for (std::size_t k = 0; k < s.visits.size(); ++k) {
      const Visit& v = s.visits[k];
      Matrix stored = v.signals;
      for (std::size_t c = 0; c < stored.cols(); ++c)
        if (!v.present[c])
          for (std::size_t r = 0; r < stored.rows(); ++r) stored(r, c) = 0.0;
      const std::string rel = "subjects/" + s.id + "/v" + std::to_string(k) + ".csv";
      record(rel, to_csv(stored));
      std::vector<int> present(v.present.begin(), v.present.end());
      visits.push_back({{"month", v.month}, {"signals", rel}, {"present", present}});
    }
    const json doc = {{"id", s.id}, {"label", s.label}, {"group", s.group}, {"visits", visits}};
    const std::string rel = "subjects/" + s.id + ".json";
    record(rel, doc.dump(1) + "\n");
    listing.push_back(rel);
  }
  json manifest = {{"format", "connectoflow-cohort"}, {"version", 1}, {"meta", meta}, {"subjects", listing}};
  if (truth) {
    record("truth.json", truth_to_json(*truth).dump(1) + "\n");
    manifest["truth"] = "truth.json";
  }
  manifest["files"] = files;
  write_text((root / "manifest.json").string(), manifest.dump(1) + "\n");
  return manifest;
}

CohortFiles read_cohort(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) throw InputError("no cohort manifest at " + manifest_path.string());
  const json manifest = parse_json(manifest_path.string());
  if (manifest.value("format", "") != "connectoflow-cohort")
    throw InputError(manifest_path.string() + " is not a cohort manifest");

  CohortFiles out;
  try {
    for (const json& f : manifest.at("files")) {
      const std::string rel = f.at("path");
      const std::string actual = sha256_file((root / rel).string());
      if (actual != f.at("sha256").get<std::string>()) throw InputError("content hash mismatch for " + rel);
    }
    out.meta = manifest.value("meta", json::object());
    for (const json& rel : manifest.at("subjects")) {
      const json doc = parse_json((root / rel.get<std::string>()).string());
      SubjectRecord s;
      s.id = doc.at("id");
      s.label = doc.at("label");
      s.group = doc.value("group", "");
      if (s.label != stable && s.label != progressive) throw InputError("subject " + s.id + " has invalid label");
      for (const json& v : doc.at("visits")) {
        Visit visit;
        visit.month = v.at("month");
        visit.signals = read_csv((root / v.at("signals").get<std::string>()).string());
        for (int p : v.at("present").get<std::vector<int>>()) visit.present.push_back(p ? 1 : 0);
        s.visits.push_back(std::move(visit));
      }
      validate_subject(s);
      out.subjects.push_back(std::move(s));
    }
    if (manifest.contains("truth"))
      out.truth = truth_from_json(parse_json((root / manifest["truth"].get<std::string>()).string()));
  } catch (const json::exception& e) {
    throw InputError("malformed cohort " + dir + ": " + e.what());
  }
  if (out.subjects.empty()) throw InputError("cohort " + dir + " lists no subjects");
  return out;
}

void write_dynamic_graph(const std::string& dir, const DynamicGraph& graph) {
  check_id(graph.subject_id);
  const fs::path root(dir);
  fs::create_directories(root / graph.subject_id);
  json snaps = json::array();
  for (std::size_t t = 0; t < graph.snapshots.size(); ++t) {
    const GraphSnapshot& s = graph.snapshots[t];
    const std::string stem = graph.subject_id + "/t" + std::to_string(t);
    write_text((root / (stem + ".features.csv")).string(), to_csv(s.features));
    write_text((root / (stem + ".adjacency.csv")).string(), to_csv(s.adjacency));
    snaps.push_back({{"month", s.month}, {"features", stem + ".features.csv"}, {"adjacency", stem + ".adjacency.csv"}});
  }
  const json doc = {{"id", graph.subject_id},
                    {"label", graph.label},
                    {"snapshots", snaps},
                    {"zero_variance_nodes", graph.zero_variance_nodes},
                    {"repair_edges", graph.repair_edges},
                    {"sparsity_warning", graph.sparsity_warning}};
  write_text((root / (graph.subject_id + ".json")).string(), doc.dump(1) + "\n");
}

DynamicGraph read_dynamic_graph(const std::string& manifest_path) {
  const fs::path base = fs::path(manifest_path).parent_path();
  const json doc = parse_json(manifest_path);
  DynamicGraph g;
  try {
    g.subject_id = doc.at("id");
    g.label = doc.at("label");
    for (const json& s : doc.at("snapshots")) {
      GraphSnapshot snap;
      snap.month = s.at("month");
      snap.features = read_csv((base / s.at("features").get<std::string>()).string());
      snap.adjacency = read_csv((base / s.at("adjacency").get<std::string>()).string());
      g.snapshots.push_back(std::move(snap));
    }
    g.zero_variance_nodes = doc.value("zero_variance_nodes", std::vector<std::size_t>{});
    g.repair_edges = doc.value("repair_edges", std::size_t{0});
    g.sparsity_warning = doc.value("sparsity_warning", false);
  } catch (const json::exception& e) {
    throw InputError("malformed graph manifest " + manifest_path + ": " + e.what());
  }
  return g;
}

}  // namespace connectoflow
