#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

// Binary container shared by datasets, latent files and checkpoints:
//
//   magic      8 bytes   ("LPDEDSET", "LPDELATN", "LPDECKPT")
//   version    uint32 LE
//   hlen       uint64 LE  length of the JSON header in bytes
//   header     hlen bytes UTF-8 JSON, must contain "payload_doubles"
//   payload    payload_doubles x float64 LE

namespace latentpde::io {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

namespace detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error(path + ": truncated file");
  return to_little(v);
}

}  // namespace detail

inline void write_container(const std::filesystem::path& path, const std::string& magic, nlohmann::json header,
                            const std::vector<double>& payload) {
  if (magic.size() != 8) throw std::invalid_argument("write_container: magic must be 8 bytes");
  header["payload_doubles"] = payload.size();
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os.write(magic.data(), 8);
  detail::put<std::uint32_t>(os, kFormatVersion);
  detail::put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(double)));
  } else {
    for (double v : payload) detail::put(os, v);
  }
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

inline Container read_container(const std::filesystem::path& path, const std::string& magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(path.string() + ": cannot open for reading");
  const std::string p = path.string();
  std::array<char, 8> m{};
  if (!is.read(m.data(), 8)) throw std::runtime_error(p + ": truncated file");
  if (std::string(m.data(), 8) != magic)
    throw std::runtime_error(p + ": not a " + magic + " file (magic " + std::string(m.data(), 8) + ")");
  const auto version = detail::get<std::uint32_t>(is, p);
  if (version != kFormatVersion)
    throw std::runtime_error(p + ": unsupported format version " + std::to_string(version));
  const auto hlen = detail::get<std::uint64_t>(is, p);
  std::string text(hlen, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(hlen))) throw std::runtime_error(p + ": truncated header");
  Container c;
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(p + ": malformed header: " + e.what());
  }
  const auto n = c.header.at("payload_doubles").get<std::size_t>();
  c.payload.resize(n);
  if (!is.read(reinterpret_cast<char*>(c.payload.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw std::runtime_error(p + ": truncated payload");
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : c.payload) v = detail::to_little(v);
  }
  return c;
}

/// Sequential reader over a payload.
class PayloadCursor {
 public:
  explicit PayloadCursor(const std::vector<double>& data) : data_(data) {}
  std::vector<double> take(std::size_t n) {
    if (pos_ + n > data_.size()) throw std::runtime_error("payload shorter than its header describes");
    std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                            data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  [[nodiscard]] bool done() const { return pos_ == data_.size(); }

 private:
  const std::vector<double>& data_;
  std::size_t pos_ = 0;
};

}  // namespace latentpde::io
