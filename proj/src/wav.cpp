#include "agm/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "agm/errors.hpp"

namespace agm {

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  f.write(b.data(), 4);
}
void put_u16(std::ofstream& f, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  f.write(b.data(), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::int16_t to_pcm16(double x) {
  const double c = std::clamp(x, -1.0, 1.0);
  return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

}  // namespace

double quantize_pcm16(double x) { return static_cast<double>(to_pcm16(x)) / 32767.0; }

void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               std::size_t sample_rate) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  f.write("RIFF", 4);
  put_u32(f, 36 + data_bytes);
  f.write("WAVEfmt ", 8);
  put_u32(f, 16);
  put_u16(f, 1);  // PCM
  put_u16(f, 1);  // mono
  put_u32(f, static_cast<std::uint32_t>(sample_rate));
  put_u32(f, static_cast<std::uint32_t>(sample_rate * 2));
  put_u16(f, 2);
  put_u16(f, 16);
  f.write("data", 4);
  put_u32(f, data_bytes);
  for (double x : samples) put_u16(f, static_cast<std::uint16_t>(to_pcm16(x)));
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

Audio read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open audio file '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  auto bad = [&path](const std::string& why) {
    return std::runtime_error("'" + path.string() + "': " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) || std::memcmp(bytes.data() + 8, "WAVE", 4))
    throw bad("not a RIFF/WAVE file");
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  for (std::size_t pos = 12; pos + 8 <= bytes.size();) {
    const std::uint32_t len = get_u32(bytes.data() + pos + 4);
    const unsigned char* body = bytes.data() + pos + 8;
    if (pos + 8 + len > bytes.size()) throw bad("truncated chunk");
    if (!std::memcmp(bytes.data() + pos, "fmt ", 4) && len >= 16) {
      format = get_u16(body);
      channels = get_u16(body + 2);
      rate = get_u32(body + 4);
      bits = get_u16(body + 14);
    } else if (!std::memcmp(bytes.data() + pos, "data", 4)) {
      data = body;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (!data || !rate) throw bad("missing fmt or data chunk");
  if (channels != 1) throw bad("only mono audio is supported");
  Audio a;
  a.sample_rate = rate;
  if (format == 1 && bits == 16) {
    a.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < a.samples.size(); ++i)
      a.samples[i] = static_cast<double>(static_cast<std::int16_t>(get_u16(data + 2 * i))) / 32767.0;
  } else if (format == 3 && bits == 32) {
    a.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      const std::uint32_t u = get_u32(data + 4 * i);
      float v;
      std::memcpy(&v, &u, 4);
      a.samples[i] = v;
    }
  } else {
    throw bad("unsupported sample format (need 16-bit PCM or 32-bit float)");
  }
  return a;
}

}  // namespace agm
