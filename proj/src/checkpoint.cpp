#include "agm/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "agm/config_io.hpp"
#include "agm/errors.hpp"

namespace agm {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'G', 'M', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u64(d);
    for (double v : t.values()) f64(v);
  }

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::uint64_t limit = 1u << 24) {
    auto n = u64();
    if (n > limit) fail("string length out of range");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Tensor tensor() {
    auto rank = u32();
    if (rank < 1 || rank > 4) fail("bad tensor rank");
    Shape shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) {
      d = u64();
      if (d == 0 || d > (1ull << 32)) fail("bad tensor extent");
      total *= d;
      if (total > (1ull << 32)) fail("tensor too large");
    }
    Tensor t(shape);
    for (auto& v : t.values()) v = f64();
    return t;
  }
  void bytes(char* dst, std::uint64_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::uint64_t>(in_.gcount()) != n) fail("truncated file");
  }
  [[noreturn]] void fail(const std::string& what) { throw DataError(source_, 0, what); }

 private:
  std::uint64_t le(int n) {
    unsigned char buf[8];
    bytes(reinterpret_cast<char*>(buf), static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
  }
  std::istream& in_;
  std::string source_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::optional<TrainingState>& state) {
  std::ostringstream buf(std::ios::binary);
  Writer w(buf);
  buf.write(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.str(to_json(model.config()).dump());
  w.u64(model.parameters().size());
  for (const auto& p : model.parameters()) {
    w.str(p.name);
    w.u8(p.trainable ? 1 : 0);
    w.tensor(p.value);
  }
  w.u8(state ? 1 : 0);
  if (state) {
    w.u64(state->epoch);
    w.f64(state->dev_score);
    w.u64(state->adam.step);
    w.u64(state->adam.first_moment.size());
    for (const auto& [name, m] : state->adam.first_moment) {
      w.str(name);
      w.tensor(m);
      w.tensor(state->adam.second_moment.at(name));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  const std::string bytes = buf.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint '" + path.string() + "'");
  Reader r(in, path.string());

  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) r.fail("not a checkpoint (bad magic)");
  if (auto v = r.u32(); v != kCheckpointVersion)
    r.fail("unsupported checkpoint version " + std::to_string(v));

  ModelConfig config;
  try {
    config = model_config_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad config block: ") + e.what());
  } catch (const ConfigError& e) {
    r.fail(std::string("bad config block: ") + e.what());
  }

  // Rebuild the expected layout, then fill it; any mismatch is corruption.
  Model model = build_model(config, 0);
  const auto count = r.u64();
  if (count != model.parameters().size()) r.fail("parameter count does not match config");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str(4096);
    bool trainable = r.u8() != 0;
    Tensor value = r.tensor();
    if (!model.has_parameter(name)) r.fail("unexpected parameter '" + name + "'");
    Parameter& p = model.parameter(name);
    if (value.shape() != p.value.shape()) r.fail("shape mismatch for '" + name + "'");
    p.value = std::move(value);
    p.trainable = trainable;
  }

  Checkpoint ck{std::move(model), std::nullopt};
  if (r.u8() != 0) {
    TrainingState s;
    s.epoch = r.u64();
    s.dev_score = r.f64();
    s.adam.step = r.u64();
    const auto n = r.u64();
    if (n > count) r.fail("too many optimizer entries");
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name = r.str(4096);
      if (!ck.model.has_parameter(name)) r.fail("optimizer entry for unknown parameter '" + name + "'");
      s.adam.first_moment[name] = r.tensor();
      s.adam.second_moment[name] = r.tensor();
    }
    ck.state = std::move(s);
  }
  return ck;
}

}  // namespace agm
