#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "npst3/nn/sequential.hpp"

namespace npst3 {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

enum class CheckpointKind : std::uint32_t
{
  Autoencoder = 1,
  Policy      = 2,
};

// Binary container:
//   magic "NPST3CK\n" | u32 version | u32 kind | u64 header bytes | header JSON
//   | u64 array count | per array: u64 length, float64 values (little endian)
//   | u64 FNV-1a checksum of everything before it.
struct Checkpoint
{
  CheckpointKind                   kind = CheckpointKind::Autoencoder;
  nlohmann::json                   header = nlohmann::json::object();
  std::vector<std::vector<double>> arrays;

  // Records layer specs under header["networks"][name] and appends the
  // network's parameters followed by its buffers.
  void add_network(std::string const &name, nn::Sequential &net);

  // Rebuilds a network from its recorded specs and restores its state.
  nn::Sequential network(std::string const &name) const;

  // Stores `inner` under header[key], appending its arrays to this table.
  void       embed(std::string const &key, Checkpoint const &inner);
  Checkpoint extract(std::string const &key) const;
};

std::string serialize_checkpoint(Checkpoint const &ckpt);
Checkpoint  deserialize_checkpoint(std::string const &bytes, std::string const &source = "<memory>");

void       write_checkpoint(std::string const &path, Checkpoint const &ckpt);
Checkpoint read_checkpoint(std::string const &path);

std::uint64_t fnv1a(void const *data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace npst3
