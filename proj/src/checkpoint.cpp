#include "amenable/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "amenable/errors.hpp"

namespace amenable {

void write_checkpoint(const std::string& path, const nlohmann::json& header,
                      std::span<const float> weights) {
  std::string head = header.dump();
  std::uint32_t len = static_cast<std::uint32_t>(head.size());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError("cannot write checkpoint: " + path);
  unsigned char lenb[4] = {
      static_cast<unsigned char>(len & 0xff),
      static_cast<unsigned char>((len >> 8) & 0xff),
      static_cast<unsigned char>((len >> 16) & 0xff),
      static_cast<unsigned char>((len >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(lenb), 4);
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  f.write(reinterpret_cast<const char*>(weights.data()),
          static_cast<std::streamsize>(weights.size() * sizeof(float)));
  if (!f) throw ParseError("short write to checkpoint: " + path);
}

std::pair<nlohmann::json, std::vector<float>> read_checkpoint(
    const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw ParseError("cannot read checkpoint: " + path);
  auto total = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  if (total < 4) throw ParseError("checkpoint truncated: " + path);
  unsigned char lenb[4];
  f.read(reinterpret_cast<char*>(lenb), 4);
  std::uint32_t len = static_cast<std::uint32_t>(lenb[0]) |
                      (static_cast<std::uint32_t>(lenb[1]) << 8) |
                      (static_cast<std::uint32_t>(lenb[2]) << 16) |
                      (static_cast<std::uint32_t>(lenb[3]) << 24);
  if (4 + len > total) throw ParseError("checkpoint header truncated: " + path);
  std::string head(len, '\0');
  f.read(head.data(), len);
  std::size_t blob = total - 4 - len;
  if (blob % sizeof(float) != 0)
    throw ParseError("checkpoint weight blob misaligned: " + path);
  std::vector<float> weights(blob / sizeof(float));
  f.read(reinterpret_cast<char*>(weights.data()),
         static_cast<std::streamsize>(blob));
  if (!f) throw ParseError("short read from checkpoint: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint header: ") + e.what());
  }
  return {std::move(header), std::move(weights)};
}

}  // namespace amenable
