#pragma once

// Foundation library: a directory of block checkpoints indexed by library.json.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cno/fd_solvers.hpp"
#include "cno/pfno.hpp"

namespace cno {

struct BlockMetadata {
  std::vector<std::string> param_names;  // e.g. {"beta"}
  int epochs = 0;
  std::uint64_t seed = 0;
  double final_train_loss = 0.0;
  double final_test_loss = 0.0;
};

struct LibraryEntry {
  std::string name;
  std::string file;  // relative to the library root
  EquationKind kind = EquationKind::Convection;
  PFNOConfig config;
  BlockMetadata meta;
  std::uint32_t crc = 0;  // sealed_crc of the checkpoint file
};

class FoundationLibrary {
 public:
  /// Opens the library at root, creating an empty one when library.json is absent.
  explicit FoundationLibrary(std::filesystem::path root);

  /// Throws ConfigError when name exists and overwrite is false.
  const LibraryEntry& save_block(const std::string& name, const PFNOModel& model, EquationKind kind,
                                 const BlockMetadata& meta, bool overwrite = false);
  /// Throws MetadataMismatchError when the stored equation differs from expected, and
  /// ChecksumError when the file no longer matches the recorded CRC.
  PFNOModel load_block(const std::string& name, EquationKind expected) const;

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const LibraryEntry& entry(const std::string& name) const;
  std::vector<LibraryEntry> list() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  void write_index() const;

  std::filesystem::path root_;
  std::map<std::string, LibraryEntry> entries_;
};

}  // namespace cno
