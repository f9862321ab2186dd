#include "cno/library.hpp"

#include <json.hpp>
#include <string_view>

#include "cno/binary_io.hpp"
#include "cno/error.hpp"

namespace cno {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kIndexName = "library.json";

bool valid_name(const std::string& name) {
  if (name.empty() || name.size() > 128) return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) return false;
  }
  return name != "." && name != "..";
}

json to_json(const LibraryEntry& e) {
  return json{{"name", e.name},
              {"file", e.file},
              {"equation", std::string(to_string(e.kind))},
              {"config",
               {{"d_h", e.config.d_h},
                {"n_layers", e.config.n_layers},
                {"modes", e.config.modes},
                {"n_params", e.config.n_params}}},
              {"param_names", e.meta.param_names},
              {"training",
               {{"epochs", e.meta.epochs},
                {"seed", e.meta.seed},
                {"final_train_loss", e.meta.final_train_loss},
                {"final_test_loss", e.meta.final_test_loss}}},
              {"crc32", e.crc}};
}

LibraryEntry from_json(const json& j) {
  LibraryEntry e;
  e.name = j.at("name").get<std::string>();
  e.file = j.at("file").get<std::string>();
  e.kind = equation_from_string(j.at("equation").get<std::string>());
  const auto& c = j.at("config");
  e.config = PFNOConfig{c.at("d_h").get<int>(), c.at("n_layers").get<int>(), c.at("modes").get<int>(),
                        c.at("n_params").get<int>()};
  e.meta.param_names = j.at("param_names").get<std::vector<std::string>>();
  const auto& t = j.at("training");
  e.meta.epochs = t.at("epochs").get<int>();
  e.meta.seed = t.at("seed").get<std::uint64_t>();
  e.meta.final_train_loss = t.at("final_train_loss").get<double>();
  e.meta.final_test_loss = t.at("final_test_loss").get<double>();
  e.crc = j.at("crc32").get<std::uint32_t>();
  return e;
}

}  // namespace

FoundationLibrary::FoundationLibrary(fs::path root) : root_(std::move(root)) {
  const fs::path index = root_ / kIndexName;
  if (!fs::exists(index)) return;
  const auto bytes = read_file(index);
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    for (const auto& item : j.at("blocks")) {
      LibraryEntry e = from_json(item);
      if (!entries_.emplace(e.name, e).second) throw DataError("library: duplicate block name " + e.name);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("library: malformed index: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("library: malformed index: ") + e.what());
  }
}

const LibraryEntry& FoundationLibrary::save_block(const std::string& name, const PFNOModel& model, EquationKind kind,
                                                  const BlockMetadata& meta, bool overwrite) {
  if (!valid_name(name)) throw ConfigError("library: invalid block name '" + name + "'");
  if (contains(name) && !overwrite) {
    throw ConfigError("library: block '" + name + "' already exists (pass overwrite to replace it)");
  }
  const auto bytes = encode_block(model, kind);
  LibraryEntry e{name, name + ".cnoblock", kind, model.config, meta, sealed_crc(bytes)};
  write_file_atomic(root_ / e.file, bytes);
  entries_[name] = e;
  write_index();
  return entries_.at(name);
}

PFNOModel FoundationLibrary::load_block(const std::string& name, EquationKind expected) const {
  const LibraryEntry& e = entry(name);
  if (e.kind != expected) {
    throw MetadataMismatchError("library: block '" + name + "' is a " + std::string(to_string(e.kind)) +
                                " block, expected " + std::string(to_string(expected)));
  }
  auto bytes = read_file(root_ / e.file);
  if (sealed_crc(bytes) != e.crc) throw ChecksumError("library: block '" + name + "' does not match its recorded CRC");
  BlockCheckpoint cp = decode_block(std::move(bytes));
  if (cp.kind != expected) {
    throw MetadataMismatchError("library: checkpoint for '" + name + "' holds a " + std::string(to_string(cp.kind)) +
                                " block");
  }
  if (cp.model.config != e.config) throw MetadataMismatchError("library: checkpoint config differs from index");
  return std::move(cp.model);
}

const LibraryEntry& FoundationLibrary::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw DataError("library: no block named '" + name + "' in " + root_.string());
  return it->second;
}

std::vector<LibraryEntry> FoundationLibrary::list() const {
  std::vector<LibraryEntry> out;
  for (const auto& [_, e] : entries_) out.push_back(e);
  return out;
}

void FoundationLibrary::write_index() const {
  json blocks = json::array();
  for (const auto& [_, e] : entries_) blocks.push_back(to_json(e));
  const std::string text = json{{"version", 1}, {"blocks", blocks}}.dump(2) + "\n";
  write_file_atomic(root_ / kIndexName,
                    std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace cno
