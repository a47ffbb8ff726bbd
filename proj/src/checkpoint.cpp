#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "roar/error.hpp"
#include "roar/training.hpp"

namespace roar {

namespace {

constexpr char kMagic[8] = {'R', 'O', 'A', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void vec(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void vecs(const std::vector<std::vector<double>>& vs) {
    pod<std::uint64_t>(vs.size());
    for (const auto& v : vs) vec(v);
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::uint64_t count() {
    const auto n = pod<std::uint64_t>();
    if (n > (std::uint64_t{1} << 32)) throw IoError(fmt::format("{}: corrupt length field", path_.string()));
    return n;
  }
  std::string str() {
    std::string s(count(), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    check();
    return s;
  }
  std::vector<double> vec() {
    std::vector<double> v(count());
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    check();
    return v;
  }
  std::vector<std::vector<double>> vecs() {
    std::vector<std::vector<double>> vs(count());
    for (auto& v : vs) v = vec();
    return vs;
  }

 private:
  void check() {
    if (!in_) throw IoError(fmt::format("{}: truncated checkpoint", path_.string()));
  }
  std::ifstream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.pod(kVersion);

  w.pod<std::int32_t>(ckpt.graph.in_channels);
  w.pod<std::int32_t>(ckpt.graph.in_height);
  w.pod<std::int32_t>(ckpt.graph.in_width);
  w.pod<std::int32_t>(static_cast<std::int32_t>(ckpt.graph.head));
  w.pod<std::uint64_t>(ckpt.graph.layers.size());
  for (const auto& l : ckpt.graph.layers) {
    w.pod<std::int32_t>(static_cast<std::int32_t>(l.kind));
    w.pod<std::int32_t>(l.out);
    w.pod<std::int32_t>(l.kernel);
    w.pod<std::int32_t>(l.stride);
  }

  w.vecs(ckpt.params);
  w.pod<std::int64_t>(ckpt.adam.step);
  w.vecs(ckpt.adam.m);
  w.vecs(ckpt.adam.v);
  w.pod(ckpt.scheduler.lr);
  w.pod(ckpt.scheduler.best);
  w.pod<std::uint8_t>(ckpt.scheduler.has_best ? 1 : 0);
  w.pod<std::int32_t>(ckpt.scheduler.wait);
  w.pod<std::int32_t>(ckpt.epoch);
  w.str(ckpt.rng_state);
  w.vecs(ckpt.best_params);
  w.pod(ckpt.best_val_loss);
  w.pod<std::int32_t>(ckpt.best_epoch);
  w.pod<std::int32_t>(ckpt.epochs_since_best);
  w.pod<std::uint64_t>(ckpt.history.size());
  for (const auto& e : ckpt.history) {
    w.pod<std::int32_t>(e.epoch);
    w.pod(e.train_loss);
    w.pod(e.val_loss);
    w.pod(e.lr);
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open checkpoint '{}'", path.string()));
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError(fmt::format("{}: not a checkpoint file", path.string()));
  }
  Reader r(in, path);
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) throw IoError(fmt::format("{}: unsupported checkpoint version {}", path.string(), version));

  Checkpoint c;
  c.graph.in_channels = r.pod<std::int32_t>();
  c.graph.in_height = r.pod<std::int32_t>();
  c.graph.in_width = r.pod<std::int32_t>();
  c.graph.head = static_cast<HeadKind>(r.pod<std::int32_t>());
  const auto layers = r.count();
  for (std::uint64_t i = 0; i < layers; ++i) {
    LayerSpec l;
    l.kind = static_cast<LayerKind>(r.pod<std::int32_t>());
    l.out = r.pod<std::int32_t>();
    l.kernel = r.pod<std::int32_t>();
    l.stride = r.pod<std::int32_t>();
    c.graph.layers.push_back(l);
  }
  c.params = r.vecs();
  c.adam.step = r.pod<std::int64_t>();
  c.adam.m = r.vecs();
  c.adam.v = r.vecs();
  c.scheduler.lr = r.pod<double>();
  c.scheduler.best = r.pod<double>();
  c.scheduler.has_best = r.pod<std::uint8_t>() != 0;
  c.scheduler.wait = r.pod<std::int32_t>();
  c.epoch = r.pod<std::int32_t>();
  c.rng_state = r.str();
  c.best_params = r.vecs();
  c.best_val_loss = r.pod<double>();
  c.best_epoch = r.pod<std::int32_t>();
  c.epochs_since_best = r.pod<std::int32_t>();
  const auto hist = r.count();
  for (std::uint64_t i = 0; i < hist; ++i) {
    EpochRecord e;
    e.epoch = r.pod<std::int32_t>();
    e.train_loss = r.pod<double>();
    e.val_loss = r.pod<double>();
    e.lr = r.pod<double>();
    c.history.push_back(e);
  }
  return c;
}

}  // namespace roar
