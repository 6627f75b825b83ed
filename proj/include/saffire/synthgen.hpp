#pragma once

#include "saffire/geometry.hpp"

#include <opencv2/core.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace saffire {

enum class ShapeTag {
  Star,       // irregular five-spike star, ten boundary segments
  Polygon,    // multi-part textured emblem, corner-rich
  GlyphBlock, // text-like block of small bars; fixed as a shape, random as ROI fill
  Cart,       // line-art cart, >= 24 boundary segments
  Blob,       // random convex clutter polygon
};

std::string_view to_string(ShapeTag tag);

enum class PosePolicy {
  Rigid,    // fixed relative to the ROI
  Rotating, // position fixed relative to the ROI, orientation random
  Free,     // uniformly random pose
};

struct Distractor {
  ShapeTag shape = ShapeTag::Blob;
  PosePolicy policy = PosePolicy::Free;
  /// Placement in the anchor frame (Rigid, Rotating).
  SimilarityTransform offset;
  /// Half-range of the random orientation for Rotating shapes, degrees.
  double rotation_range_deg = 0.0;
  /// When positive, Rotating orientations snap to multiples of this step.
  double rotation_step_deg = 0.0;
};

struct PoseJitter {
  double translation_px = 0.0;
  double rotation_deg = 0.0;
  double scale_low = 1.0;
  double scale_high = 1.0;
};

struct SceneSpec {
  cv::Size canvas{640, 480};
  ShapeTag anchor_shape = ShapeTag::Star;
  bool anchor_visible = true;
  /// Nominal anchor position before jitter; defaults to the canvas center.
  Point2 anchor_center{320.0, 240.0};
  std::vector<Distractor> distractors;
  /// ROI in the anchor frame. The ROI is filled with glyph content.
  OrientedRect roi_spec{{120.0, 0.0}, 120.0, 60.0, -0.5 * kPi};
  bool roi_glyphs = true;
  PoseJitter pose_jitter;
  double background = 110.0;
  double noise = 0.0; // uniform additive noise amplitude, gray levels
  std::uint64_t seed = 0;
};

struct ShapeMask {
  ShapeTag shape;
  PosePolicy policy; // Rigid for the anchor
  bool is_anchor = false;
  SimilarityTransform pose;
  cv::Mat mask; // CV_8UC1, 255 where the shape covers the pixel
};

struct GeneratedSample {
  cv::Mat image; // CV_8UC1
  OrientedRect roi;
  SimilarityTransform anchor_pose;
  std::vector<ShapeMask> shape_masks;
};

/// Number of straight boundary segments making up a shape's outline.
std::size_t segment_count(ShapeTag shape);

GeneratedSample generate_sample(const SceneSpec &spec, std::size_t index);
std::vector<GeneratedSample> generate(const SceneSpec &spec, std::size_t n, std::size_t first_index = 0);

SceneSpec starcart_preset();
SceneSpec textured_preset();
/// Textured scene with a second, content-free copy of the anchor.
SceneSpec dual_instance_preset();
/// Clutter and noise only.
SceneSpec noise_preset();

/// Looks up a preset by CLI name: starcart | textured | dual-instance | noise.
SceneSpec preset_by_name(std::string_view name);

/// Writes PNG images plus a manifest (manifest.csv) and a ground-truth sidecar
/// (truth.json) into dir.
void write_dataset(const std::vector<GeneratedSample> &samples, const std::filesystem::path &dir);

} // namespace saffire
