#include "fw/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "fw/random.hpp"

namespace fw {

namespace {

constexpr char kMagic[5] = {'F', 'W', 'C', 'K', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kMaxNameLen = 4096;
constexpr std::uint64_t kMaxElems = 1ull << 31;

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    if (s.size() > kMaxNameLen) throw ContractError("checkpoint: name too long: " + s);
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > in_.size()) throw IntegrityError("checkpoint: truncated data");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    std::size_t n = u16();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::string text() {
    std::size_t n = u32();
    if (n > (1u << 26)) throw IntegrityError("checkpoint: implausible config length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  std::uint64_t get_le(int n) {
    if (pos_ + static_cast<std::size_t>(n) > in_.size()) {
      throw IntegrityError("checkpoint: truncated data");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> Checkpoint::to_bytes() const {
  std::vector<std::uint8_t> out;
  Writer w(out);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.u32(RandomStream::kAlgorithmId);
  w.u64(episode);
  w.f64(best_val_accuracy);

  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    w.str(nt.name);
    const auto& shape = nt.tensor.shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) w.u64(d);
    for (std::size_t i = 0; i < nt.tensor.size(); ++i) w.f64(nt.tensor[i]);
  }

  const std::uint8_t opt_flag = optimizer.present ? 1 : 0;
  w.bytes(&opt_flag, 1);
  if (optimizer.present) {
    w.f64(optimizer.alpha);
    w.f64(optimizer.beta1);
    w.f64(optimizer.beta2);
    w.f64(optimizer.epsilon);
    w.u64(optimizer.steps);
    w.u32(static_cast<std::uint32_t>(optimizer.slots.size()));
    for (const auto& s : optimizer.slots) {
      if (s.m.size() != s.v.size()) {
        throw ContractError("checkpoint: optimizer slot " + s.name + " has mismatched moments");
      }
      w.str(s.name);
      w.u64(s.m.size());
      for (double x : s.m) w.f64(x);
      for (double x : s.v) w.f64(x);
    }
  }

  w.u32(static_cast<std::uint32_t>(streams.size()));
  for (const auto& s : streams) {
    w.str(s.name);
    w.u32(s.algorithm);
    w.u64(s.seed);
    w.u64(s.counter);
  }

  w.text(config_text);
  return out;
}

Checkpoint Checkpoint::from_bytes(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[5];
  r.bytes(magic, 5);
  if (std::memcmp(magic, kMagic, 5) != 0) {
    throw IntegrityError("checkpoint: bad magic, not a checkpoint file");
  }
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw IntegrityError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint32_t algo = r.u32();
  if (algo != RandomStream::kAlgorithmId) {
    throw IntegrityError("checkpoint: random stream algorithm " + std::to_string(algo) +
                         " does not match this build");
  }

  Checkpoint c;
  c.episode = r.u64();
  c.best_val_accuracy = r.f64();

  const std::uint32_t n_tensors = r.u32();
  c.tensors.reserve(n_tensors);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor nt;
    nt.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IntegrityError("checkpoint: implausible tensor rank");
    Shape shape(rank);
    std::uint64_t elems = 1;
    for (auto& d : shape) {
      d = r.u64();
      elems *= d;
      if (elems > kMaxElems) throw IntegrityError("checkpoint: implausible tensor size");
    }
    Tensor t{shape};
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = r.f64();
    nt.tensor = t;
    c.tensors.push_back(std::move(nt));
  }

  std::uint8_t has_opt = 0;
  r.bytes(&has_opt, 1);
  if (has_opt > 1) throw IntegrityError("checkpoint: bad optimizer flag");
  c.optimizer.present = has_opt == 1;
  if (c.optimizer.present) {
    c.optimizer.alpha = r.f64();
    c.optimizer.beta1 = r.f64();
    c.optimizer.beta2 = r.f64();
    c.optimizer.epsilon = r.f64();
    c.optimizer.steps = r.u64();
    const std::uint32_t n_slots = r.u32();
    c.optimizer.slots.reserve(n_slots);
    for (std::uint32_t i = 0; i < n_slots; ++i) {
      OptimizerSlot s;
      s.name = r.str();
      const std::uint64_t n = r.u64();
      if (n > kMaxElems) throw IntegrityError("checkpoint: implausible optimizer slot size");
      s.m.resize(n);
      for (auto& x : s.m) x = r.f64();
      s.v.resize(n);
      for (auto& x : s.v) x = r.f64();
      c.optimizer.slots.push_back(std::move(s));
    }
  }

  const std::uint32_t n_streams = r.u32();
  c.streams.reserve(n_streams);
  for (std::uint32_t i = 0; i < n_streams; ++i) {
    StreamState s;
    s.name = r.str();
    s.algorithm = r.u32();
    s.seed = r.u64();
    s.counter = r.u64();
    c.streams.push_back(std::move(s));
  }

  c.config_text = r.text();
  if (!r.at_end()) throw IntegrityError("checkpoint: trailing bytes after payload");
  return c;
}

void Checkpoint::save(const std::string& path) const {
  const std::vector<std::uint8_t> bytes = to_bytes();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open " + tmp + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("checkpoint: write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("checkpoint: cannot move " + tmp + " to " + path + ": " + ec.message());
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (!f.eof() && f.fail()) throw IoError("checkpoint: read failed for " + path);
  return from_bytes(bytes);
}

}  // namespace fw
