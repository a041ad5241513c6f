#include "openvision/shard.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <sstream>

namespace openvision {

static_assert(std::endian::native == std::endian::little,
              "shard IO assumes a little-endian host");

const char* to_string(ShardFault fault) {
  switch (fault) {
    case ShardFault::bad_magic:
      return "bad magic";
    case ShardFault::bad_version:
      return "unsupported version";
    case ShardFault::truncated:
      return "truncated";
    case ShardFault::checksum_mismatch:
      return "checksum mismatch";
    case ShardFault::count_mismatch:
      return "record count mismatch";
    case ShardFault::malformed:
      return "malformed record";
  }
  return "shard error";
}

ShardError::ShardError(ShardFault fault, const std::string& message)
    : Error(ErrorKind::data, std::string("shard ") + to_string(fault) + ": " + message),
      fault_(fault) {}

namespace {

template <typename U>
void put(std::vector<std::uint8_t>& out, U value) {
  std::uint8_t bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  out.insert(out.end(), bytes, bytes + sizeof(U));
}

void put_blob(std::vector<std::uint8_t>& out, const void* data, std::size_t n) {
  require(n <= UINT32_MAX, ErrorKind::data, "shard field exceeds 4 GiB");
  put(out, static_cast<std::uint32_t>(n));
  const auto* p = static_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n);
}

std::vector<std::uint8_t> encode_payload(const CaptionedImage& r) {
  std::vector<std::uint8_t> p;
  put(p, r.id);
  put_blob(p, r.png.data(), r.png.size());
  put_blob(p, r.caption_original.data(), r.caption_original.size());
  put_blob(p, r.caption_synthetic.data(), r.caption_synthetic.size());
  put_blob(p, r.meta.data(), r.meta.size());
  return p;
}

class PayloadCursor {
 public:
  explicit PayloadCursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> blob() {
    const auto n = get<std::uint32_t>();
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ShardError(ShardFault::malformed, "record field overruns its payload");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

CaptionedImage decode_payload(std::span<const std::uint8_t> payload) {
  PayloadCursor cur(payload);
  CaptionedImage r;
  r.id = cur.get<std::uint64_t>();
  auto png = cur.blob();
  r.png.assign(png.begin(), png.end());
  auto orig = cur.blob();
  r.caption_original.assign(orig.begin(), orig.end());
  auto syn = cur.blob();
  r.caption_synthetic.assign(syn.begin(), syn.end());
  auto meta = cur.blob();
  r.meta.assign(meta.begin(), meta.end());
  if (!cur.done()) {
    throw ShardError(ShardFault::malformed, "trailing bytes inside record payload");
  }
  return r;
}

std::uint32_t crc_update(std::uint32_t crc, const void* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(crc, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

std::vector<std::uint8_t> serialize_shard(std::span<const CaptionedImage> records) {
  require(!records.empty(), ErrorKind::data, "refusing to write an empty shard");
  std::vector<std::uint8_t> out(kShardMagic, kShardMagic + 4);
  put(out, kShardVersion);
  put(out, static_cast<std::uint64_t>(records.size()));
  for (const auto& r : records) {
    const auto payload = encode_payload(r);
    put_blob(out, payload.data(), payload.size());
  }
  const std::uint32_t crc = crc_update(0, out.data(), out.size());
  put(out, crc);
  return out;
}

void write_shard(const std::filesystem::path& path, std::span<const CaptionedImage> records) {
  const auto bytes = serialize_shard(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  require(out.good(), ErrorKind::io, "write failed for '" + path.string() + "'");
}

ShardReader::ShardReader(const std::filesystem::path& path) {
  auto file = std::make_unique<std::ifstream>(path, std::ios::binary);
  require(file->good(), ErrorKind::io, "cannot open shard '" + path.string() + "'");
  in_ = std::move(file);
  read_header();
}

ShardReader::ShardReader(std::unique_ptr<std::istream> stream) : in_(std::move(stream)) {
  read_header();
}

void ShardReader::read_exact(void* dst, std::size_t n) {
  in_->read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_->gcount()) != n) {
    throw ShardError(ShardFault::truncated, "unexpected end of shard");
  }
}

void ShardReader::read_header() {
  char magic[4] = {};
  in_->read(magic, 4);
  if (in_->gcount() != 4 || std::memcmp(magic, kShardMagic, 4) != 0) {
    throw ShardError(ShardFault::bad_magic, "expected \"OVSH\"");
  }
  std::uint16_t version = 0;
  read_exact(&version, sizeof(version));
  if (version != kShardVersion) {
    throw ShardError(ShardFault::bad_version, "version " + std::to_string(version));
  }
  read_exact(&count_, sizeof(count_));
  crc_ = crc_update(0, magic, 4);
  crc_ = crc_update(crc_, &version, sizeof(version));
  crc_ = crc_update(crc_, &count_, sizeof(count_));
}

std::optional<CaptionedImage> ShardReader::next() {
  if (finished_) {
    return std::nullopt;
  }
  if (consumed_ == count_) {
    std::uint32_t stored = 0;
    read_exact(&stored, sizeof(stored));
    if (in_->peek() != std::char_traits<char>::eof()) {
      throw ShardError(ShardFault::count_mismatch,
                       "bytes remain after the declared " + std::to_string(count_) + " records");
    }
    if (stored != crc_) {
      throw ShardError(ShardFault::checksum_mismatch, "stored CRC-32 does not match contents");
    }
    finished_ = true;
    return std::nullopt;
  }
  std::uint32_t length = 0;
  read_exact(&length, sizeof(length));
  crc_ = crc_update(crc_, &length, sizeof(length));
  std::vector<std::uint8_t> payload;
  // Grow with the data actually present so a corrupted length cannot force a huge allocation.
  constexpr std::size_t kChunk = 1 << 20;
  while (payload.size() < length) {
    const std::size_t n = std::min<std::size_t>(kChunk, length - payload.size());
    const std::size_t old = payload.size();
    payload.resize(old + n);
    read_exact(payload.data() + old, n);
  }
  crc_ = crc_update(crc_, payload.data(), payload.size());
  ++consumed_;
  try {
    return decode_payload(payload);
  } catch (const ShardError&) {
    // A malformed payload is usually corruption; report it as such when the
    // checksum can still be evaluated.
    throw;
  }
}

std::vector<CaptionedImage> parse_shard(std::span<const std::uint8_t> bytes) {
  auto stream = std::make_unique<std::istringstream>(
      std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  ShardReader reader(std::move(stream));
  std::vector<CaptionedImage> out;
  while (auto r = reader.next()) {
    out.push_back(std::move(*r));
  }
  return out;
}

std::vector<CaptionedImage> read_shard(const std::filesystem::path& path) {
  ShardReader reader(path);
  std::vector<CaptionedImage> out;
  while (auto r = reader.next()) {
    out.push_back(std::move(*r));
  }
  return out;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) {
    text.pop_back();
  }
  return text;
}

}  // namespace

std::vector<CaptionedImage> import_directory(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::io,
          "'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> images;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      images.push_back(entry.path());
    }
  }
  std::sort(images.begin(), images.end());
  std::vector<CaptionedImage> out;
  for (const auto& img : images) {
    const auto stem = img.parent_path() / img.stem();
    const auto caption = std::filesystem::path(stem.string() + ".txt");
    require(std::filesystem::exists(caption), ErrorKind::data,
            "missing caption file '" + caption.string() + "'");
    CaptionedImage r;
    r.id = out.size();
    std::ifstream in(img, std::ios::binary);
    r.png.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    r.caption_original = read_text(caption);
    require(!r.caption_original.empty(), ErrorKind::data,
            "empty caption in '" + caption.string() + "'");
    const auto synthetic = std::filesystem::path(stem.string() + ".syn.txt");
    if (std::filesystem::exists(synthetic)) {
      r.caption_synthetic = read_text(synthetic);
    }
    out.push_back(std::move(r));
  }
  require(!out.empty(), ErrorKind::data, "no .png files in '" + dir.string() + "'");
  return out;
}

std::vector<CaptionedImage> load_records(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  require(fs::exists(path), ErrorKind::data, "data path '" + path.string() + "' does not exist");
  if (!fs::is_directory(path)) {
    return read_shard(path);
  }
  std::vector<fs::path> shards;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ovsh") {
      shards.push_back(entry.path());
    }
  }
  if (shards.empty()) {
    return import_directory(path);
  }
  std::sort(shards.begin(), shards.end());
  std::vector<CaptionedImage> out;
  for (const auto& shard : shards) {
    auto part = read_shard(shard);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

}  // namespace openvision
