#pragma once

// Diagram rendering: a solved figure becomes an SVG 1.1 drawing with point
// labels, and optionally a PNG raster of that drawing.

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geocdl/cdl.hpp"
#include "geocdl/kernel.hpp"

namespace geocdl::render {

using kernel::Vec2;

struct RenderStyle {
  int canvas = 512;  // square canvas, px
  double margin = 36.0;
  double stroke_width = 2.0;
  double point_radius = 3.0;
  double font_size = 18.0;
  double label_offset = 13.0;
  std::string background = "#ffffff";
  bool monochrome = false;

  /// Throws std::invalid_argument on a non-positive dimension, a margin of
  /// half the canvas or more, or a background that is not #rrggbb.
  void check() const;
};

class RenderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RasterBackendUnavailable : public RenderError {
 public:
  using RenderError::RenderError;
};

struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool intersects(const Box& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
};

struct PlacedLabel {
  cdl::Label label;
  Vec2 anchor;  // text center
  Box box;
  int slot = 0;  // index into the compass offsets
  double cost = 0.0;
};

/// A figure mapped to canvas pixels (y down) with its labels placed.
struct Diagram {
  RenderStyle style;
  std::map<cdl::Label, Vec2> points;
  std::vector<std::array<Vec2, 2>> segments;
  std::vector<std::pair<Vec2, double>> circles;
  std::vector<std::array<Vec2, 3>> right_angles;
  std::vector<PlacedLabel> labels;  // label order
};

/// Throws kernel::DegenerateFigure when the figure has no points or all of
/// them coincide.
Diagram layout(const kernel::Figure& figure, const cdl::CdlDocument& doc, const RenderStyle& style = {});
std::string to_svg(const Diagram& diagram);
std::string render_vector(const kernel::Figure& figure, const cdl::CdlDocument& doc, const RenderStyle& style = {});

/// Number of label pairs whose boxes intersect.
std::size_t label_overlaps(const Diagram& diagram);

bool raster_available();

/// PNG bytes of an SVG produced by render_vector, at the style's canvas size.
std::vector<std::uint8_t> rasterize(std::string_view svg, const RenderStyle& style = {});

struct PngInfo {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
};

/// Reads the IHDR chunk; throws RenderError if the bytes are not a PNG.
PngInfo png_info(const std::vector<std::uint8_t>& png);

}  // namespace geocdl::render
