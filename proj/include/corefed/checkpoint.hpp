#pragma once

#include <filesystem>
#include <vector>

#include "corefed/aggregation.hpp"
#include "corefed/model.hpp"

namespace corefed {

// Binary parameter blobs: a little-endian u64 element count followed by that
// many little-endian IEEE-754 doubles.
std::vector<unsigned char> encode_parameters(const ParameterVector& params);
ParameterVector decode_parameters(std::span<const unsigned char> bytes, std::size_t* consumed = nullptr);

void write_parameters(const std::filesystem::path& path, const ParameterVector& params);
ParameterVector read_parameters(const std::filesystem::path& path);

// Ledger checkpoint: ledger.json (history, last participation, similarities,
// SHA-256 digest and byte offset of every cached gradient) plus gradients.bin
// holding the cached gradients back to back in client-id order.
void save_ledger(const std::filesystem::path& dir, const ParticipationLedger& ledger);
ParticipationLedger load_ledger(const std::filesystem::path& dir);

/// {dir}/round_{t}/global.bin plus the ledger checkpoint files.
std::filesystem::path write_round_checkpoint(const std::filesystem::path& run_dir, Round t,
                                             const ParameterVector& global,
                                             const ParticipationLedger& ledger);

}  // namespace corefed
