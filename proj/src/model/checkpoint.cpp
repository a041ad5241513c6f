#include "openvision/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace openvision {

namespace {

template <typename U>
void put(std::vector<std::uint8_t>& out, U value) {
  std::uint8_t bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  out.insert(out.end(), bytes, bytes + sizeof(U));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void copy(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    require(bytes_.size() - pos_ >= n, ErrorKind::data, "checkpoint is truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> out = {'O', 'V', 'C', 'K'};
  put(out, kCheckpointVersion);
  put_string(out, checkpoint.config_text);
  put(out, static_cast<std::uint64_t>(checkpoint.params.size()));
  for (const auto& [name, p] : checkpoint.params) {
    put_string(out, name);
    put(out, static_cast<std::uint8_t>((p.decay ? 1 : 0) | (p.trainable ? 2 : 0)));
    put(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) {
      put(out, static_cast<std::int64_t>(d));
    }
    const auto* raw = reinterpret_cast<const std::uint8_t*>(p.value.ptr());
    out.insert(out.end(), raw, raw + p.value.size() * sizeof(float));
  }
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), "OVCK", 4) == 0, ErrorKind::data,
          "not a checkpoint (bad magic)");
  Cursor cur(bytes.subspan(4));
  const auto version = cur.get<std::uint16_t>();
  require(version == kCheckpointVersion, ErrorKind::data,
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config_text = cur.string();
  const auto count = cur.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = cur.string();
    const auto flags = cur.get<std::uint8_t>();
    const auto rank = cur.get<std::uint32_t>();
    require(rank <= 8, ErrorKind::data, "implausible rank for '" + name + "'");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = cur.get<std::int64_t>();
      require(d >= 0 && d < (std::int64_t{1} << 40), ErrorKind::data,
              "implausible dimension for '" + name + "'");
      shape.push_back(d);
    }
    Tensor<float> value(shape);
    cur.copy(value.ptr(), static_cast<std::size_t>(value.size()) * sizeof(float));
    auto& p = ck.params.add(name, std::move(value), (flags & 1) != 0);
    p.trainable = (flags & 2) != 0;
  }
  require(cur.done(), ErrorKind::data, "trailing bytes after checkpoint tensors");
  return ck;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  require(out.good(), ErrorKind::io, "write failed for '" + path.string() + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::config,
          "checkpoint '" + path.string() + "' does not exist");
  return parse_checkpoint(read_file(path));
}

}  // namespace openvision
