#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace openvision {

// Byte-level by default: ids 0..255 are bytes, then pad, bos, eos.
// A word-level variant over a closed vocabulary (ids 0..n-1 words, then unk,
// pad, bos, eos) backs the probe data and external vocabulary files.
class Tokenizer {
 public:
  static Tokenizer bytes();
  static Tokenizer words(std::vector<std::string> vocabulary);
  // "byte", "probe", or "file:<path>" (one word per line).
  static Tokenizer from_name(std::string_view name);

  bool word_level() const noexcept { return word_level_; }
  int vocab_size() const noexcept { return vocab_size_; }
  int pad_id() const noexcept { return pad_id_; }
  int bos_id() const noexcept { return bos_id_; }
  int eos_id() const noexcept { return eos_id_; }
  int unk_id() const noexcept { return unk_id_; }

  // [bos, tokens..., eos], truncated to `context` ids; truncation always keeps eos last.
  std::vector<std::int32_t> encode(std::string_view text, int context) const;
  // Text tokens only, without bos/eos.
  std::vector<std::int32_t> encode_plain(std::string_view text) const;
  // Special ids are dropped; decoding stops at the first eos.
  std::string decode(std::span<const std::int32_t> ids) const;

 private:
  Tokenizer() = default;

  bool word_level_ = false;
  int vocab_size_ = 0;
  int pad_id_ = 0;
  int bos_id_ = 0;
  int eos_id_ = 0;
  int unk_id_ = -1;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Splits on whitespace; ',', '.', '?' become separate words.
std::vector<std::string> split_words(std::string_view text);

}  // namespace openvision
