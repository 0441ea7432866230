#include "mmnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmnet/error.hpp"
#include "mmnet/rng.hpp"

namespace mmnet {

namespace {

struct Canvas {
  int size;
  std::vector<double> rgb;  // [3,size,size], values in [0,1]

  explicit Canvas(int s) : size(s), rgb(static_cast<std::size_t>(3) * s * s) {}

  void blend(int y, int x, double cov, double r, double g, double b) {
    if (cov <= 0.0 || x < 0 || x >= size || y < 0 || y >= size) return;
    cov = std::min(cov, 1.0);
    const std::size_t hw = static_cast<std::size_t>(size) * size;
    const std::size_t i = static_cast<std::size_t>(y) * size + x;
    rgb[i] = rgb[i] * (1.0 - cov) + r * cov;
    rgb[hw + i] = rgb[hw + i] * (1.0 - cov) + g * cov;
    rgb[2 * hw + i] = rgb[2 * hw + i] * (1.0 - cov) + b * cov;
  }
};

// Soft-edged ellipse, optionally clipped to y < y_clip (for the hairline).
void draw_ellipse(Canvas& c, double cx, double cy, double rx, double ry,
                  double r, double g, double b, double y_clip = 1e9) {
  if (rx <= 0 || ry <= 0) return;
  const int x0 = std::max(0, static_cast<int>(cx - rx - 2));
  const int x1 = std::min(c.size - 1, static_cast<int>(cx + rx + 2));
  const int y0 = std::max(0, static_cast<int>(cy - ry - 2));
  const int y1 = std::min(c.size - 1, static_cast<int>(cy + ry + 2));
  const double edge = std::min(rx, ry);
  for (int y = y0; y <= y1; ++y) {
    if (y > y_clip) break;
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x - cx) / rx, dy = (y - cy) / ry;
      const double f = std::sqrt(dx * dx + dy * dy);
      const double dist = (f - 1.0) * edge;  // approx signed distance
      c.blend(y, x, 0.5 - dist, r, g, b);
    }
  }
}

// Thick segment with round caps.
void draw_capsule(Canvas& c, double ax, double ay, double bx, double by,
                  double radius, double r, double g, double b) {
  const int x0 = std::max(0, static_cast<int>(std::min(ax, bx) - radius - 2));
  const int x1 =
      std::min(c.size - 1, static_cast<int>(std::max(ax, bx) + radius + 2));
  const int y0 = std::max(0, static_cast<int>(std::min(ay, by) - radius - 2));
  const int y1 =
      std::min(c.size - 1, static_cast<int>(std::max(ay, by) + radius + 2));
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double t = len2 > 0 ? ((x - ax) * vx + (y - ay) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dx = x - (ax + t * vx), dy = y - (ay + t * vy);
      const double dist = std::sqrt(dx * dx + dy * dy) - radius;
      c.blend(y, x, 0.5 - dist, r, g, b);
    }
  }
}

// Translucent rectangle (nose-wrinkle shading).
void draw_shade(Canvas& c, int x0, int x1, int y0, int y1, double opacity,
                double r, double g, double b) {
  for (int y = std::max(0, y0); y < std::min(c.size, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(c.size, x1); ++x)
      c.blend(y, x, opacity, r, g, b);
}

struct FaceGeom {
  double cx, cy, rx, ry;
  double skin_r, skin_g, skin_b;
  double hair_y, hair_r, hair_g, hair_b;
  double eye_dx, eye_y, eye_r;
  double brow_gap, brow_hw, brow_th;
  double nose_tip_y;
  double mouth_y, mouth_hw, mouth_th;
  double mark_x[2], mark_y[2];  // identity moles on the cheeks
};

FaceGeom make_geom(Rng& rng, int size) {
  FaceGeom g;
  const double s = size / 224.0;
  g.cx = (104 + rng.uniform(0, 16)) * s;
  g.cy = (106 + rng.uniform(0, 14)) * s;
  g.rx = (64 + rng.uniform(0, 16)) * s;
  g.ry = (84 + rng.uniform(0, 16)) * s;
  g.skin_r = rng.uniform(0.55, 0.85);
  g.skin_g = g.skin_r - rng.uniform(0.08, 0.16);
  g.skin_b = g.skin_g - rng.uniform(0.10, 0.20);
  g.hair_y = g.cy - g.ry * rng.uniform(0.55, 0.72);
  g.hair_r = rng.uniform(0.05, 0.35);
  g.hair_g = g.hair_r * rng.uniform(0.5, 0.9);
  g.hair_b = g.hair_g * rng.uniform(0.5, 0.9);
  g.eye_dx = (26 + rng.uniform(0, 8)) * s;
  g.eye_y = g.cy - (16 + rng.uniform(0, 10)) * s;
  g.eye_r = (6.5 + rng.uniform(0, 2.5)) * s;
  g.brow_gap = (11 + rng.uniform(0, 4)) * s;
  g.brow_hw = (9 + rng.uniform(0, 4)) * s;
  g.brow_th = (1.6 + rng.uniform(0, 1.2)) * s;
  g.nose_tip_y = g.cy + (12 + rng.uniform(0, 6)) * s;
  g.mouth_y = g.cy + (34 + rng.uniform(0, 10)) * s;
  g.mouth_hw = (17 + rng.uniform(0, 7)) * s;
  g.mouth_th = (2.2 + rng.uniform(0, 1.0)) * s;
  for (int i = 0; i < 2; ++i) {
    const double side = i == 0 ? -1.0 : 1.0;
    g.mark_x[i] = g.cx + side * (g.eye_dx + rng.uniform(4, 12) * s);
    g.mark_y[i] = g.eye_y + (18 + rng.uniform(0, 10)) * s;
  }
  return g;
}

// amplitude is the deformation in pixels (or opacity units) for this frame.
void render_face(Canvas& canvas, const FaceGeom& g, int label,
                 double amplitude, double exposure) {
  const int size = canvas.size;
  // Background: soft vertical gradient.
  const std::size_t hw = static_cast<std::size_t>(size) * size;
  for (int y = 0; y < size; ++y) {
    const double shade = 0.84 + 0.06 * (static_cast<double>(y) / size);
    for (int x = 0; x < size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      canvas.rgb[i] = shade * 0.95;
      canvas.rgb[hw + i] = shade;
      canvas.rgb[2 * hw + i] = shade * 1.02;
    }
  }

  // Expression-dependent offsets.
  double brow_raise = 0.0, eye_open = 1.0, mouth_corner = 0.0,
         wrinkle_opacity = 0.0;
  switch (label) {
    case 0: mouth_corner = -amplitude; break;          // happiness: corners up
    case 1:                                            // surprise: brows up
      brow_raise = amplitude;
      eye_open = 1.0 + amplitude / 18.0;
      break;
    case 2: wrinkle_opacity = amplitude; break;        // disgust: nose wrinkle
    case 3: mouth_corner = amplitude; break;           // sadness: corners down
    case 4: eye_open = 1.0 - amplitude / 14.0; break;  // others: lids droop
    default: throw ConfigError("synthetic generator supports labels 0..4");
  }

  draw_ellipse(canvas, g.cx, g.cy, g.rx, g.ry, g.skin_r, g.skin_g, g.skin_b);
  draw_ellipse(canvas, g.cx, g.cy, g.rx, g.ry, g.hair_r, g.hair_g, g.hair_b,
               g.hair_y);

  for (int side = -1; side <= 1; side += 2) {
    const double ex = g.cx + side * g.eye_dx;
    // Eye white and iris.
    draw_ellipse(canvas, ex, g.eye_y, g.eye_r * 1.45, g.eye_r * eye_open,
                 0.97, 0.97, 0.96);
    draw_ellipse(canvas, ex, g.eye_y, g.eye_r * 0.62,
                 std::min(g.eye_r * 0.62, g.eye_r * eye_open * 0.9), 0.22,
                 0.14, 0.08);
    // Brow.
    const double by = g.eye_y - g.brow_gap - brow_raise;
    draw_capsule(canvas, ex - g.brow_hw, by + 1.0, ex + g.brow_hw, by - 1.0,
                 g.brow_th, 0.18, 0.12, 0.08);
  }

  // Nose: bridge line plus nostril dots.
  draw_capsule(canvas, g.cx, g.eye_y + 6.0, g.cx, g.nose_tip_y, 1.3,
               g.skin_r * 0.82, g.skin_g * 0.82, g.skin_b * 0.82);
  draw_ellipse(canvas, g.cx - 3.5, g.nose_tip_y + 1.5, 1.6, 1.2,
               g.skin_r * 0.6, g.skin_g * 0.6, g.skin_b * 0.6);
  draw_ellipse(canvas, g.cx + 3.5, g.nose_tip_y + 1.5, 1.6, 1.2,
               g.skin_r * 0.6, g.skin_g * 0.6, g.skin_b * 0.6);

  // Nose wrinkle shading (disgust).
  if (wrinkle_opacity > 0.0) {
    const int wy0 = static_cast<int>(g.eye_y + 4.0);
    const int wy1 = static_cast<int>(g.nose_tip_y - 2.0);
    draw_shade(canvas, static_cast<int>(g.cx - 9), static_cast<int>(g.cx + 9),
               wy0, wy1, 0.06 * wrinkle_opacity, g.skin_r * 0.4,
               g.skin_g * 0.4, g.skin_b * 0.4);
  }

  // Mouth: parabola through the corners, displaced by mouth_corner.
  {
    double px = g.cx - g.mouth_hw;
    double py = g.mouth_y + mouth_corner;
    for (int step = 1; step <= 12; ++step) {
      const double t = -1.0 + 2.0 * step / 12.0;  // [-1,1]
      const double x = g.cx + t * g.mouth_hw;
      const double y = g.mouth_y + mouth_corner * t * t;
      draw_capsule(canvas, px, py, x, y, g.mouth_th, 0.55, 0.15, 0.15);
      px = x;
      py = y;
    }
  }

  // Identity marks.
  for (int i = 0; i < 2; ++i)
    draw_ellipse(canvas, g.mark_x[i], g.mark_y[i], 1.8, 1.8, g.skin_r * 0.55,
                 g.skin_g * 0.55, g.skin_b * 0.55);

  // Per-sample exposure, shared by every frame of the sample.
  for (double& v : canvas.rgb) v = std::clamp(v * exposure, 0.0, 1.0);
}

Image canvas_to_image(const Canvas& canvas) {
  Image img;
  img.height = img.width = canvas.size;
  img.pixels.resize(static_cast<std::size_t>(3) * canvas.size * canvas.size);
  const std::size_t hw = static_cast<std::size_t>(canvas.size) * canvas.size;
  for (int y = 0; y < canvas.size; ++y)
    for (int x = 0; x < canvas.size; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v =
            canvas.rgb[c * hw + static_cast<std::size_t>(y) * canvas.size + x];
        img.at(y, x, c) = static_cast<std::uint8_t>(
            std::clamp(std::nearbyint(v * 256.0), 0.0, 255.0));
      }
  return img;
}

double max_amplitude(int label, double scale) {
  switch (label) {
    case 0: return 9.0 * scale;
    case 1: return 8.0 * scale;
    case 2: return 9.0 * scale;  // opacity units, scaled in render
    case 3: return 9.0 * scale;
    default: return 8.0 * scale;
  }
}

Box deform_region(const FaceGeom& g, int label, double amp, int size) {
  auto clampi = [size](double v) {
    return std::clamp(static_cast<int>(v), 0, size);
  };
  const double m = 4.0;  // safety margin around soft edges
  Box b;
  switch (label) {
    case 0:
    case 3: {  // mouth corners
      b.x0 = clampi(g.cx - g.mouth_hw - g.mouth_th - m);
      b.x1 = clampi(g.cx + g.mouth_hw + g.mouth_th + m + 1);
      b.y0 = clampi(g.mouth_y - amp - g.mouth_th - m);
      b.y1 = clampi(g.mouth_y + amp + g.mouth_th + m + 1);
      break;
    }
    case 1: {  // brows and widened eyes
      const double reach = g.eye_dx + std::max(g.brow_hw, g.eye_r * 1.45);
      b.x0 = clampi(g.cx - reach - m);
      b.x1 = clampi(g.cx + reach + m + 1);
      b.y0 = clampi(g.eye_y - g.brow_gap - amp - g.brow_th - m);
      b.y1 = clampi(g.eye_y + g.eye_r * (1.0 + amp / 18.0) + m + 1);
      break;
    }
    case 2: {  // nose bridge shading
      b.x0 = clampi(g.cx - 9 - m);
      b.x1 = clampi(g.cx + 9 + m + 1);
      b.y0 = clampi(g.eye_y + 4.0 - m);
      b.y1 = clampi(g.nose_tip_y - 2.0 + m + 1);
      break;
    }
    default: {  // eyelid droop
      b.x0 = clampi(g.cx - g.eye_dx - g.eye_r * 1.45 - m);
      b.x1 = clampi(g.cx + g.eye_dx + g.eye_r * 1.45 + m + 1);
      b.y0 = clampi(g.eye_y - g.eye_r - m);
      b.y1 = clampi(g.eye_y + g.eye_r + m + 1);
      break;
    }
  }
  return b;
}

}  // namespace

const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names = {
      "happiness", "surprise", "disgust", "sadness", "others"};
  return names;
}

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed,
                      const std::string& out_dir) {
  if (spec.subjects < 1 || spec.classes < 1 || spec.samples_per < 1)
    throw ConfigError("synthetic spec needs subjects, classes, samples_per >= 1");
  if (spec.classes > 5)
    throw ConfigError("the synthetic generator supports at most 5 classes");
  if (spec.image_size < 224)
    throw ConfigError("synthetic frames must be at least 224x224");

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  Dataset ds;
  ds.root = out_dir;
  ds.class_names.assign(synth_class_names().begin(),
                        synth_class_names().begin() + spec.classes);

  // Onset candidates sit near the neutral frame, apex candidates near the
  // peak; the labeled frames are the extremes.
  const double kOnsetRamp[4] = {0.0, 0.06, 0.12, 0.18};
  const double kApexRamp[4] = {1.0, 0.94, 0.88, 0.82};

  std::ostringstream regions;
  const double scale = spec.image_size / 224.0;
  int sample_index = 0;
  for (int s = 0; s < spec.subjects; ++s) {
    char subject[8];
    std::snprintf(subject, sizeof(subject), "s%02d", s);
    fs::create_directories(fs::path(out_dir) / subject);
    Rng subject_rng(derive_seed(seed, "subject", s));
    const FaceGeom geom = make_geom(subject_rng, spec.image_size);

    for (int c = 0; c < spec.classes; ++c) {
      for (int k = 0; k < spec.samples_per; ++k) {
        Rng sample_rng(derive_seed(seed, "sample", s,
                                   static_cast<std::uint64_t>(c) * 1000 + k));
        const double amp =
            max_amplitude(c, scale) * (0.85 + 0.15 * sample_rng.uniform());
        const double exposure = 0.96 + 0.08 * sample_rng.uniform();

        auto render_to_file = [&](double frame_amp, const std::string& name) {
          Canvas canvas(spec.image_size);
          render_face(canvas, geom, c, frame_amp, exposure);
          write_ppm(out_dir + "/" + name, canvas_to_image(canvas));
        };

        SamplePair pair;
        pair.subject_id = subject;
        pair.label = c;
        char stem[64];
        std::snprintf(stem, sizeof(stem), "%s/c%d_k%02d", subject, c, k);
        pair.canonical_onset = std::string(stem) + "_on.ppm";
        pair.canonical_apex = std::string(stem) + "_ap.ppm";
        render_to_file(0.0, pair.canonical_onset);
        render_to_file(amp, pair.canonical_apex);
        for (int j = 0; j < 4; ++j) {
          std::string on_name =
              std::string(stem) + "_on" + std::to_string(j) + ".ppm";
          std::string ap_name =
              std::string(stem) + "_ap" + std::to_string(j) + ".ppm";
          render_to_file(kOnsetRamp[j] * amp, on_name);
          render_to_file(kApexRamp[j] * amp, ap_name);
          pair.onset_candidates.push_back(std::move(on_name));
          pair.apex_candidates.push_back(std::move(ap_name));
        }
        ds.samples.push_back(std::move(pair));

        const Box box = deform_region(geom, c, amp, spec.image_size);
        regions << "region " << sample_index << " " << box.x0 << " " << box.y0
                << " " << box.x1 << " " << box.y1 << "\n";
        ++sample_index;
      }
    }
  }

  save_dataset_index(ds);
  std::ofstream rf(out_dir + "/regions.txt", std::ios::binary);
  rf << regions.str();
  if (!rf) throw IoError("failed writing regions.txt");
  return ds;
}

std::vector<Box> load_regions(const std::string& dir) {
  std::ifstream in(dir + "/regions.txt");
  if (!in) throw IoError("cannot open regions.txt under " + dir);
  std::vector<Box> boxes;
  std::string kind;
  while (in >> kind) {
    if (kind != "region") throw IoError("malformed regions.txt");
    int idx;
    Box b;
    in >> idx >> b.x0 >> b.y0 >> b.x1 >> b.y1;
    if (static_cast<int>(boxes.size()) != idx)
      throw IoError("regions.txt out of order");
    boxes.push_back(b);
  }
  return boxes;
}

}  // namespace mmnet
