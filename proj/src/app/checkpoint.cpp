#include "ddunet/app/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

#include "ddunet/engine/error.hpp"
#include "ddunet/engine/rng.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace ddunet::app {
namespace {

constexpr char kMagic[4] = {'D', 'D', 'U', 'N'};
constexpr std::uint32_t kFloat32 = 16;

class Writer {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(V));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void records(const network::ParamSet<float>& set) {
    for (const auto& [name, t] : set) {
      put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
      bytes(name.data(), name.size());
      put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
      for (std::size_t e : t.shape()) put<std::uint64_t>(e);
      put<std::uint32_t>(kFloat32);
      bytes(t.data().data(), t.numel() * sizeof(float));
    }
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename V>
  V get() {
    V v;
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) throw DataError("checkpoint: truncated file");
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  network::ParamSet<float> records(std::uint64_t count) {
    network::ParamSet<float> set;
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto len = get<std::uint32_t>();
      std::string name(reinterpret_cast<const char*>(take(len)), len);
      const auto rank = get<std::uint32_t>();
      if (rank == 0 || rank > kMaxRank) throw DataError("checkpoint: invalid rank for '" + name + "'");
      Shape shape(rank);
      std::size_t numel = 1;
      for (auto& e : shape) {
        e = get<std::uint64_t>();
        if (e == 0 || e > (std::uint64_t{1} << 40) / numel) throw DataError("checkpoint: invalid extent for '" + name + "'");
        numel *= e;
      }
      if (get<std::uint32_t>() != kFloat32) throw DataError("checkpoint: unsupported element type for '" + name + "'");
      std::vector<float> values(numel);
      std::memcpy(values.data(), take(numel * sizeof(float)), numel * sizeof(float));
      if (!set.emplace(name, Tensor<float>(shape, std::move(values))).second) {
        throw DataError("checkpoint: duplicate parameter '" + name + "'");
      }
    }
    return set;
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(const std::uint8_t* data, std::size_t n) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(data), n));
}

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(ckpt.config_text.size());
  w.bytes(ckpt.config_text.data(), ckpt.config_text.size());
  w.put<std::uint64_t>(ckpt.params.size());
  w.records(ckpt.params);
  w.put<std::uint8_t>(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    if (o.m.size() != ckpt.params.size() || o.v.size() != ckpt.params.size() || o.v_max.size() != ckpt.params.size()) {
      throw ShapeError("checkpoint: optimizer state does not match the parameter set");
    }
    w.put<std::uint64_t>(o.step);
    w.put<double>(o.hp.beta1);
    w.put<double>(o.hp.beta2);
    w.put<double>(o.hp.eps);
    w.put<double>(o.hp.weight_decay);
    w.records(o.m);
    w.records(o.v);
    w.records(o.v_max);
  }
  std::vector<std::uint8_t>& out = w.buffer();
  const std::uint64_t sum = checksum(out.data(), out.size());
  const auto* p = reinterpret_cast<const std::uint8_t*>(&sum);
  out.insert(out.end(), p, p + sizeof(sum));
  return out;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8 + 8 + 1 + 8) throw DataError("checkpoint: truncated file");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("checkpoint: bad magic");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (stored != checksum(bytes.data(), body)) throw DataError("checkpoint: checksum mismatch");

  Reader r(bytes.data(), body);
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  const auto text_len = r.get<std::uint64_t>();
  if (text_len > r.remaining()) throw DataError("checkpoint: truncated file");
  c.config_text.assign(reinterpret_cast<const char*>(r.take(text_len)), text_len);
  const auto count = r.get<std::uint64_t>();
  c.params = r.records(count);
  if (r.get<std::uint8_t>()) {
    optim::AdamWState<float> o;
    o.step = r.get<std::uint64_t>();
    o.hp.beta1 = r.get<double>();
    o.hp.beta2 = r.get<double>();
    o.hp.eps = r.get<double>();
    o.hp.weight_decay = r.get<double>();
    o.m = r.records(count);
    o.v = r.records(count);
    o.v_max = r.records(count);
    for (const auto* set : {&o.m, &o.v, &o.v_max}) {
      for (const auto& [name, t] : *set) {
        const auto p = c.params.find(name);
        if (p == c.params.end() || p->second.shape() != t.shape()) {
          throw DataError("checkpoint: optimizer state for '" + name + "' does not match the parameters");
        }
      }
    }
    c.optimizer = std::move(o);
  }
  if (r.remaining() != 0) throw DataError("checkpoint: trailing bytes after payload");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace ddunet::app
