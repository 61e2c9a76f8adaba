#include "connectoflow/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "connectoflow/errors.hpp"

namespace connectoflow {

namespace fs = std::filesystem;

namespace {

std::string file_stem(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (c == '/' || c == '\\') c = '_';
  return out;
}

}  // namespace

void save_checkpoint(const std::string& dir, const ParamStore& store, const nlohmann::json& meta) {
  fs::create_directories(dir);
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t k = 0; k < store.size(); ++k) {
    const Parameter& p = store[k];
    const std::string stem = file_stem(p.name);
    write_csv((fs::path(dir) / (stem + ".csv")).string(), p.value);
    nlohmann::json entry = {{"name", p.name},
                            {"rows", p.value.rows()},
                            {"cols", p.value.cols()},
                            {"file", stem + ".csv"},
                            {"step", p.step}};
    if (p.step > 0) {
      write_csv((fs::path(dir) / (stem + ".m1.csv")).string(), p.first_moment);
      write_csv((fs::path(dir) / (stem + ".m2.csv")).string(), p.second_moment);
      entry["moments"] = {stem + ".m1.csv", stem + ".m2.csv"};
    }
    params.push_back(std::move(entry));
  }
  nlohmann::json manifest = {{"format", "connectoflow-checkpoint"}, {"version", 1}, {"meta", meta},
                             {"params", params}};
  const fs::path path = fs::path(dir) / "manifest.json";
  const fs::path tmp = fs::path(dir) / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << manifest.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

nlohmann::json load_checkpoint(const std::string& dir, ParamStore& store) {
  const fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw InputError("checkpoint manifest not found: " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint manifest " + path.string() + ": " + e.what());
  }
  for (std::size_t k = 0; k < store.size(); ++k) {
    Parameter& p = store[k];
    const nlohmann::json* entry = nullptr;
    for (const auto& e : manifest.at("params"))
      if (e.at("name") == p.name) entry = &e;
    if (entry == nullptr) throw InputError("checkpoint lacks parameter " + p.name);
    const std::size_t rows = entry->at("rows"), cols = entry->at("cols");
    if (rows != p.value.rows() || cols != p.value.cols())
      throw InputError("checkpoint shape mismatch for " + p.name);
    Matrix value = read_csv((fs::path(dir) / entry->at("file").get<std::string>()).string());
    if (!value.same_shape(p.value)) throw InputError("checkpoint data shape mismatch for " + p.name);
    p.value = std::move(value);
    p.step = entry->at("step");
    p.grad = Matrix(rows, cols);
    if (entry->contains("moments")) {
      p.first_moment = read_csv((fs::path(dir) / (*entry)["moments"][0].get<std::string>()).string());
      p.second_moment = read_csv((fs::path(dir) / (*entry)["moments"][1].get<std::string>()).string());
    } else {
      p.first_moment = Matrix(rows, cols);
      p.second_moment = Matrix(rows, cols);
    }
  }
  return manifest.at("meta");
}

}  // namespace connectoflow
