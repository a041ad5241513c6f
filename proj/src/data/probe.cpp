#include "openvision/probe.hpp"

#include <algorithm>
#include <set>
#include <span>
#include <sstream>

#include "openvision/error.hpp"
#include "openvision/rng.hpp"

namespace openvision {

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 6> kColorRgb = {{
    {220, 40, 40},    // red
    {40, 170, 60},    // green
    {40, 80, 220},    // blue
    {240, 210, 40},   // yellow
    {150, 60, 190},   // purple
    {245, 140, 30},   // orange
}};
constexpr std::uint8_t kBackground = 235;

constexpr std::array<std::string_view, 3> kRowWords = {"upper", "middle", "lower"};
constexpr std::array<std::string_view, 3> kColWords = {"left", "middle", "right"};

std::string position_phrase(int row, int col) {
  if (row == 1 && col == 1) {
    return "center";
  }
  return std::string(kRowWords[static_cast<std::size_t>(row)]) + " " +
         std::string(kColWords[static_cast<std::size_t>(col)]);
}

int find_index(std::string_view word, std::span<const std::string_view> table) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i] == word) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

std::string shape_noun(const ProbeShape& s) {
  return std::string(kProbeColors[static_cast<std::size_t>(s.color)]) + " " +
         std::string(kProbeShapes[static_cast<std::size_t>(s.shape)]);
}

std::string join_phrases(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) {
      out += (i + 1 == parts.size()) ? " and " : ", ";
    }
    out += parts[i];
  }
  return out;
}

}  // namespace

int ProbeMeta::label() const {
  if (shapes.size() != 1) {
    return -1;
  }
  return shapes[0].color * static_cast<int>(kProbeShapes.size()) + shapes[0].shape;
}

void ProbeMeta::normalize() {
  std::sort(shapes.begin(), shapes.end(), [](const ProbeShape& a, const ProbeShape& b) {
    return a.row * kProbeGrid + a.col < b.row * kProbeGrid + b.col;
  });
}

std::string ProbeMeta::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = shapes[i];
    if (i > 0) {
      out += ";";
    }
    out += std::string(kProbeColors[static_cast<std::size_t>(s.color)]) + "/" +
           std::string(kProbeShapes[static_cast<std::size_t>(s.shape)]) + "@" +
           std::to_string(s.row) + "," + std::to_string(s.col);
  }
  return out;
}

ProbeMeta ProbeMeta::parse(std::string_view text) {
  ProbeMeta meta;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find(';', pos);
    if (end == std::string_view::npos) {
      end = text.size();
    }
    const auto item = text.substr(pos, end - pos);
    const auto slash = item.find('/');
    const auto at = item.find('@');
    const auto comma = item.find(',');
    require(slash != std::string_view::npos && at != std::string_view::npos &&
                comma != std::string_view::npos && slash < at && at < comma,
            ErrorKind::data, "malformed probe meta '" + std::string(text) + "'");
    ProbeShape s;
    s.color = find_index(item.substr(0, slash), kProbeColors);
    s.shape = find_index(item.substr(slash + 1, at - slash - 1), kProbeShapes);
    s.row = std::stoi(std::string(item.substr(at + 1, comma - at - 1)));
    s.col = std::stoi(std::string(item.substr(comma + 1)));
    require(s.color >= 0 && s.shape >= 0 && s.row >= 0 && s.row < kProbeGrid && s.col >= 0 &&
                s.col < kProbeGrid,
            ErrorKind::data, "malformed probe meta '" + std::string(text) + "'");
    meta.shapes.push_back(s);
    pos = end + 1;
  }
  return meta;
}

std::string probe_original_caption(const ProbeMeta& meta) {
  std::vector<std::string> parts;
  for (const auto& s : meta.shapes) {
    parts.push_back("a " + shape_noun(s));
  }
  return join_phrases(parts);
}

std::string probe_synthetic_caption(const ProbeMeta& meta) {
  std::vector<std::string> parts;
  for (const auto& s : meta.shapes) {
    parts.push_back("a " + shape_noun(s) + " in the " + position_phrase(s.row, s.col));
  }
  return join_phrases(parts);
}

std::string probe_class_name(int label) {
  require(label >= 0 && label < kProbeClasses, ErrorKind::data, "probe label out of range");
  ProbeShape s;
  s.color = label / static_cast<int>(kProbeShapes.size());
  s.shape = label % static_cast<int>(kProbeShapes.size());
  return shape_noun(s);
}

std::vector<std::string> probe_class_names() {
  std::vector<std::string> out;
  for (int i = 0; i < kProbeClasses; ++i) {
    out.push_back(probe_class_name(i));
  }
  return out;
}

std::vector<std::string> probe_vocabulary() {
  std::vector<std::string> vocab = {"a", "an", "the", "in", "and", "of", "photo", "is",
                                    "it", "what", "color", "shape", ",", ".", "?"};
  for (auto c : kProbeColors) {
    vocab.emplace_back(c);
  }
  for (auto s : kProbeShapes) {
    vocab.emplace_back(s);
  }
  for (auto w : {"upper", "middle", "lower", "left", "right", "center"}) {
    vocab.emplace_back(w);
  }
  return vocab;
}

Image render_probe(const ProbeMeta& meta, int resolution) {
  require(resolution >= 8, ErrorKind::config, "probe resolution must be >= 8");
  const std::int64_t r = resolution;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(r * r * 3), kBackground);
  // Coordinates are scaled by 6 so cell centers (2c+1)*R/6 stay integral:
  // pixel center x+0.5 maps to 3*(2x+1).
  const std::int64_t radius = 7 * r / 10;     // 0.35 of a cell
  const std::int64_t half_side = 3 * r / 5;   // 0.30 of a cell
  const std::int64_t tri_half = 7 * r / 10;   // 0.35 of a cell
  for (const auto& s : meta.shapes) {
    const std::int64_t cx = (2 * s.col + 1) * r;
    const std::int64_t cy = (2 * s.row + 1) * r;
    const auto& rgb = kColorRgb[static_cast<std::size_t>(s.color)];
    for (std::int64_t y = 0; y < r; ++y) {
      const std::int64_t py = 3 * (2 * y + 1) - cy;
      for (std::int64_t x = 0; x < r; ++x) {
        const std::int64_t px = 3 * (2 * x + 1) - cx;
        bool inside = false;
        switch (s.shape) {
          case 0:
            inside = px * px + py * py <= radius * radius;
            break;
          case 1:
            inside = std::abs(px) <= half_side && std::abs(py) <= half_side;
            break;
          default:
            inside = py <= tri_half && 2 * std::abs(px) <= py + tri_half;
            break;
        }
        if (inside) {
          std::copy(rgb.begin(), rgb.end(), raw.begin() + (y * r + x) * 3);
        }
      }
    }
  }
  Image image(resolution, resolution);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    image.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
  }
  return image;
}

std::vector<CaptionedImage> gen_probe_dataset(std::uint64_t seed, int n, int resolution,
                                              const ProbeOptions& options) {
  require(n >= 1, ErrorKind::config, "probe dataset size must be >= 1");
  require(options.min_shapes >= 1 && options.max_shapes <= kProbeGrid * kProbeGrid &&
              options.min_shapes <= options.max_shapes,
          ErrorKind::config, "invalid probe shape-count range");
  Rng rng(mix_seed(seed, 0x70726f6265));
  std::set<std::string> seen;
  std::vector<CaptionedImage> records;
  records.reserve(static_cast<std::size_t>(n));
  constexpr int kCells = kProbeGrid * kProbeGrid;

  for (int i = 0; i < n; ++i) {
    ProbeMeta meta;
    for (int attempt = 0; attempt < 64; ++attempt) {
      meta.shapes.clear();
      if (options.stratified) {
        const int label = i % kProbeClasses;
        const int cell = static_cast<int>(rng.below(kCells));
        meta.shapes.push_back({label / static_cast<int>(kProbeShapes.size()),
                               label % static_cast<int>(kProbeShapes.size()), cell / kProbeGrid,
                               cell % kProbeGrid});
      } else {
        const int count =
            options.min_shapes +
            static_cast<int>(rng.below(static_cast<std::uint64_t>(options.max_shapes -
                                                                  options.min_shapes + 1)));
        std::array<int, kCells> cells{};
        for (int c = 0; c < kCells; ++c) {
          cells[static_cast<std::size_t>(c)] = c;
        }
        // Partial Fisher-Yates picks distinct cells.
        for (int k = 0; k < count; ++k) {
          const int j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(kCells - k)));
          std::swap(cells[static_cast<std::size_t>(k)], cells[static_cast<std::size_t>(j)]);
          ProbeShape s;
          s.color = static_cast<int>(rng.below(kProbeColors.size()));
          s.shape = static_cast<int>(rng.below(kProbeShapes.size()));
          s.row = cells[static_cast<std::size_t>(k)] / kProbeGrid;
          s.col = cells[static_cast<std::size_t>(k)] % kProbeGrid;
          meta.shapes.push_back(s);
        }
      }
      meta.normalize();
      if (!options.unique_layouts || !seen.contains(meta.serialize())) {
        break;
      }
    }
    seen.insert(meta.serialize());
    CaptionedImage rec;
    rec.id = static_cast<std::uint64_t>(i);
    rec.png = encode_png(render_probe(meta, resolution));
    rec.caption_original = probe_original_caption(meta);
    rec.caption_synthetic = probe_synthetic_caption(meta);
    rec.meta = meta.serialize();
    records.push_back(std::move(rec));
  }
  return records;
}

std::string probe_vqa_answer(const ProbeMeta& meta, std::string_view question) {
  require(meta.shapes.size() == 1, ErrorKind::data, "probe VQA needs single-shape images");
  const auto& s = meta.shapes[0];
  if (question == kColorQuestion) {
    return std::string(kProbeColors[static_cast<std::size_t>(s.color)]);
  }
  if (question == kShapeQuestion) {
    return std::string(kProbeShapes[static_cast<std::size_t>(s.shape)]);
  }
  fail(ErrorKind::data, "unsupported probe question '" + std::string(question) + "'");
}

}  // namespace openvision
