#include "openvision/tokenizer.hpp"

#include <cctype>
#include <fstream>

#include "openvision/error.hpp"
#include "openvision/probe.hpp"

namespace openvision {

Tokenizer Tokenizer::bytes() {
  Tokenizer t;
  t.word_level_ = false;
  t.pad_id_ = 256;
  t.bos_id_ = 257;
  t.eos_id_ = 258;
  t.vocab_size_ = 259;
  return t;
}

Tokenizer Tokenizer::words(std::vector<std::string> vocabulary) {
  require(!vocabulary.empty(), ErrorKind::config, "word vocabulary is empty");
  Tokenizer t;
  t.word_level_ = true;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    const auto [it, inserted] =
        t.index_.emplace(vocabulary[i], static_cast<std::int32_t>(i));
    require(inserted, ErrorKind::config, "duplicate vocabulary word '" + vocabulary[i] + "'");
  }
  const int n = static_cast<int>(vocabulary.size());
  t.words_ = std::move(vocabulary);
  t.unk_id_ = n;
  t.pad_id_ = n + 1;
  t.bos_id_ = n + 2;
  t.eos_id_ = n + 3;
  t.vocab_size_ = n + 4;
  return t;
}

Tokenizer Tokenizer::from_name(std::string_view name) {
  if (name == "byte") {
    return bytes();
  }
  if (name == "probe") {
    return words(probe_vocabulary());
  }
  if (name.substr(0, 5) == "file:") {
    const std::string path(name.substr(5));
    std::ifstream in(path);
    require(in.good(), ErrorKind::config, "cannot open vocabulary file '" + path + "'");
    std::vector<std::string> vocab;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') {
        line.pop_back();
      }
      if (!line.empty()) {
        vocab.push_back(line);
      }
    }
    return words(std::move(vocab));
  }
  fail(ErrorKind::config, "unknown tokenizer '" + std::string(name) + "' (byte | probe | file:<path>)");
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) {
      out.push_back(current);
      current.clear();
    }
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (c == ',' || c == '.' || c == '?') {
      flush();
      out.emplace_back(1, c);
    } else {
      current.push_back(c);
    }
  }
  flush();
  return out;
}

std::vector<std::int32_t> Tokenizer::encode_plain(std::string_view text) const {
  std::vector<std::int32_t> ids;
  if (!word_level_) {
    ids.reserve(text.size());
    for (unsigned char c : text) {
      ids.push_back(static_cast<std::int32_t>(c));
    }
    return ids;
  }
  for (const auto& w : split_words(text)) {
    auto it = index_.find(w);
    ids.push_back(it == index_.end() ? unk_id_ : it->second);
  }
  return ids;
}

std::vector<std::int32_t> Tokenizer::encode(std::string_view text, int context) const {
  require(context >= 1, ErrorKind::config, "token context must be >= 1");
  std::vector<std::int32_t> ids;
  ids.push_back(bos_id_);
  for (auto id : encode_plain(text)) {
    ids.push_back(id);
  }
  ids.push_back(eos_id_);
  if (static_cast<int>(ids.size()) > context) {
    ids.resize(static_cast<std::size_t>(context));
    ids.back() = eos_id_;
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto id : ids) {
    if (id == eos_id_) {
      break;
    }
    if (id == pad_id_ || id == bos_id_ || id == unk_id_ || id < 0 || id >= vocab_size_) {
      continue;
    }
    if (!word_level_) {
      out.push_back(static_cast<char>(id));
      continue;
    }
    const std::string& w = words_[static_cast<std::size_t>(id)];
    const bool punct = w == "," || w == "." || w == "?";
    if (!out.empty() && !punct) {
      out.push_back(' ');
    }
    out += w;
  }
  return out;
}

}  // namespace openvision
