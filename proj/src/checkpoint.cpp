#include "corefed/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

#include "corefed/digest.hpp"
#include "corefed/error.hpp"

namespace corefed {

namespace {

using nlohmann::json;

constexpr int kLedgerFormatVersion = 1;

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

std::uint64_t get_u64(std::span<const unsigned char> in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= std::uint64_t{in[offset + static_cast<std::size_t>(b)]} << (8 * b);
  return v;
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::vector<unsigned char> encode_parameters(const ParameterVector& params) {
  std::vector<unsigned char> out;
  out.reserve(8 + 8 * params.size());
  put_u64(out, params.size());
  for (double v : params) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ParameterVector decode_parameters(std::span<const unsigned char> bytes, std::size_t* consumed) {
  if (bytes.size() < 8) throw IoError("truncated parameter blob: missing length prefix");
  const std::uint64_t n = get_u64(bytes, 0);
  if ((bytes.size() - 8) / 8 < n) throw IoError("truncated parameter blob: expected " + std::to_string(n) + " values");
  ParameterVector out(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<double>(get_u64(bytes, 8 + 8 * i));
  if (consumed != nullptr) *consumed = 8 + 8 * out.size();
  return out;
}

void write_parameters(const std::filesystem::path& path, const ParameterVector& params) {
  dump(path, encode_parameters(params));
}

ParameterVector read_parameters(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  std::size_t used = 0;
  ParameterVector out = decode_parameters(bytes, &used);
  if (used != bytes.size()) throw FormatError("trailing bytes after parameter blob in " + path.string());
  return out;
}

void save_ledger(const std::filesystem::path& dir, const ParticipationLedger& ledger) {
  std::filesystem::create_directories(dir);
  json doc;
  doc["format_version"] = kLedgerFormatVersion;
  doc["distinct_count"] = ledger.distinct_count();
  json history = json::array();
  for (const auto& [t, online] : ledger.history()) {
    history.push_back({{"round", t}, {"clients", std::vector<ClientId>(online.begin(), online.end())}});
  }
  doc["history"] = std::move(history);
  json last = json::object();
  for (const auto& [c, t] : ledger.last_participation_map()) last[std::to_string(c)] = t;
  doc["last_participation"] = std::move(last);
  json sims = json::object();
  for (const auto& [c, rho] : ledger.similarity_cache()) sims[std::to_string(c)] = rho;
  doc["last_similarity"] = std::move(sims);

  std::vector<unsigned char> blob;
  json grads = json::array();
  for (const auto& [c, g] : ledger.gradient_cache()) {
    const auto bytes = encode_parameters(g);
    grads.push_back({{"client", c},
                     {"offset", blob.size()},
                     {"length", g.size()},
                     {"sha256", sha256_hex(bytes)}});
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  doc["gradients"] = std::move(grads);
  doc["gradients_file"] = "gradients.bin";

  dump(dir / "gradients.bin", blob);
  std::ofstream out(dir / "ledger.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "ledger.json").string());
  out << doc.dump(2) << '\n';
}

ParticipationLedger load_ledger(const std::filesystem::path& dir) {
  json doc;
  {
    std::ifstream in(dir / "ledger.json");
    if (!in) throw IoError("cannot open " + (dir / "ledger.json").string());
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("ledger.json: ") + e.what());
    }
  }
  try {
    if (doc.at("format_version").get<int>() != kLedgerFormatVersion) {
      throw FormatError("unsupported ledger format version");
    }
    std::map<Round, std::set<ClientId>> history;
    for (const auto& entry : doc.at("history")) {
      const auto clients = entry.at("clients").get<std::vector<ClientId>>();
      history[entry.at("round").get<Round>()] = std::set<ClientId>(clients.begin(), clients.end());
    }
    std::map<ClientId, double> sims;
    for (const auto& [key, rho] : doc.at("last_similarity").items()) sims[std::stoi(key)] = rho.get<double>();

    const auto blob = slurp(dir / doc.at("gradients_file").get<std::string>());
    std::map<ClientId, ParameterVector> grads;
    for (const auto& entry : doc.at("gradients")) {
      const auto offset = entry.at("offset").get<std::size_t>();
      if (offset > blob.size()) throw IoError("gradients.bin is truncated");
      std::size_t used = 0;
      auto view = std::span(blob).subspan(offset);
      ParameterVector g = decode_parameters(view, &used);
      if (g.size() != entry.at("length").get<std::size_t>()) throw FormatError("cached gradient length mismatch");
      if (sha256_hex(view.first(used)) != entry.at("sha256").get<std::string>()) {
        throw FormatError("cached gradient digest mismatch for client " +
                          std::to_string(entry.at("client").get<int>()));
      }
      grads[entry.at("client").get<ClientId>()] = std::move(g);
    }
    ParticipationLedger ledger = ParticipationLedger::restore(std::move(history), std::move(grads), std::move(sims));
    if (ledger.distinct_count() != doc.at("distinct_count").get<int>()) {
      throw FormatError("ledger distinct_count disagrees with its history");
    }
    for (const auto& [key, t] : doc.at("last_participation").items()) {
      if (ledger.last_participation(std::stoi(key)) != t.get<Round>()) {
        throw FormatError("ledger last_participation disagrees with its history");
      }
    }
    return ledger;
  } catch (const json::exception& e) {
    throw FormatError(std::string("ledger.json: ") + e.what());
  }
}

std::filesystem::path write_round_checkpoint(const std::filesystem::path& run_dir, Round t,
                                             const ParameterVector& global,
                                             const ParticipationLedger& ledger) {
  const auto dir = run_dir / ("round_" + std::to_string(t));
  std::filesystem::create_directories(dir);
  write_parameters(dir / "global.bin", global);
  save_ledger(dir, ledger);
  return dir;
}

}  // namespace corefed
