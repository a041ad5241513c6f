#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "openvision/image.hpp"
#include "openvision/records.hpp"

namespace openvision {

inline constexpr std::array<std::string_view, 6> kProbeColors = {"red",    "green",  "blue",
                                                                 "yellow", "purple", "orange"};
inline constexpr std::array<std::string_view, 3> kProbeShapes = {"circle", "square", "triangle"};
inline constexpr int kProbeGrid = 3;
inline constexpr int kProbeClasses = static_cast<int>(kProbeColors.size() * kProbeShapes.size());

struct ProbeShape {
  int color = 0;
  int shape = 0;
  int row = 0;
  int col = 0;

  friend bool operator==(const ProbeShape&, const ProbeShape&) = default;
};

// Ground-truth layout of one probe image. Shapes occupy distinct grid cells and
// are kept in row-major cell order, so captions are a pure function of the layout.
struct ProbeMeta {
  std::vector<ProbeShape> shapes;

  // color * 3 + shape for single-shape images, -1 otherwise.
  int label() const;
  std::string serialize() const;
  static ProbeMeta parse(std::string_view text);
  void normalize();

  friend bool operator==(const ProbeMeta&, const ProbeMeta&) = default;
};

// "a red circle and a blue square"
std::string probe_original_caption(const ProbeMeta& meta);
// "a red circle in the upper left and a blue square in the center"
std::string probe_synthetic_caption(const ProbeMeta& meta);
std::string probe_class_name(int label);  // "red circle"
std::vector<std::string> probe_class_names();
std::vector<std::string> probe_vocabulary();

// Integer-only rasterizer: identical pixels on every platform.
Image render_probe(const ProbeMeta& meta, int resolution);

struct ProbeOptions {
  // Single-shape records cycling through all color x shape classes in order.
  bool stratified = false;
  int min_shapes = 1;
  int max_shapes = 3;
  // Resample layouts that already occurred (bounded retries).
  bool unique_layouts = true;
};

std::vector<CaptionedImage> gen_probe_dataset(std::uint64_t seed, int n, int resolution,
                                              const ProbeOptions& options = {});

struct VqaSample {
  std::string image;  // path to a PNG file
  std::string question;
  std::string answer;

  friend bool operator==(const VqaSample&, const VqaSample&) = default;
};

inline constexpr std::string_view kColorQuestion = "what color is the shape ?";
inline constexpr std::string_view kShapeQuestion = "what shape is it ?";

// Answer derived from the layout of a single-shape probe image.
std::string probe_vqa_answer(const ProbeMeta& meta, std::string_view question);

}  // namespace openvision
