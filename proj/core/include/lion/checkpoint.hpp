#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lion/backbone.hpp"
#include "lion/prompt_model.hpp"
#include "lion/tensor.hpp"

namespace lion::ckpt {

// Layout (all integers unsigned 32-bit little-endian):
//   "LIONCKPT" | version | entry count |
//   per entry: name length | UTF-8 name | rank | dims... | f64 LE payload
inline constexpr std::string_view kMagic = "LIONCKPT";
inline constexpr std::uint32_t kVersion = 1;

struct Entry {
  std::string name;
  Tensor value;

  friend bool operator==(const Entry&, const Entry&) = default;
};

struct Checkpoint {
  std::vector<Entry> entries;

  bool contains(std::string_view name) const noexcept;
  /// Throws FormatError when absent.
  const Tensor& at(std::string_view name) const;
  /// Appends; throws StateError on a duplicate name.
  void add(std::string name, Tensor value);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode(const Checkpoint& c);
/// Rejects bad magic, unknown versions, truncation and trailing bytes with
/// FormatError before returning anything.
Checkpoint decode(std::string_view bytes);

/// Writes to a sibling temp file, then renames over `path`.
void save(const Checkpoint& c, const std::filesystem::path& path);
/// Throws ArtifactError when the file cannot be read.
Checkpoint load(const std::filesystem::path& path);

/// Writes `bytes` atomically (temp file then rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
/// Throws ArtifactError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

enum class ModelKind { classifier = 0, lion = 1 };

ModelKind kind_of(const Checkpoint& c);

/// Backbone plus its source head.
Checkpoint from_classifier(const Backbone& backbone, const Dense& head);
Backbone backbone_from(const Checkpoint& c);
/// The classifier head stored by from_classifier.
Dense head_from(const Checkpoint& c);

Checkpoint from_prompt_model(const PromptModel& m);
PromptModel prompt_model_from(const Checkpoint& c);

}  // namespace lion::ckpt
