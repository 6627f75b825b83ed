#include "feature_families.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace saffire::detail {

namespace {

struct Candidate {
  float response;
  int x, y;
};

double parabolic_offset(double left, double mid, double right) {
  const double denom = left - 2.0 * mid + right;
  if (std::abs(denom) < 1e-12)
    return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

cv::Mat harris_response(const cv::Mat &smooth, const CornerParams &p) {
  cv::Mat gx, gy;
  cv::Sobel(smooth, gx, CV_32F, 1, 0, 3, 1.0 / 8.0, 0.0, cv::BORDER_REPLICATE);
  cv::Sobel(smooth, gy, CV_32F, 0, 1, 3, 1.0 / 8.0, 0.0, cv::BORDER_REPLICATE);
  cv::Mat ixx = gx.mul(gx), iyy = gy.mul(gy), ixy = gx.mul(gy);
  const double si = p.integration_sigma;
  cv::GaussianBlur(ixx, ixx, cv::Size(), si, si, cv::BORDER_REPLICATE);
  cv::GaussianBlur(iyy, iyy, cv::Size(), si, si, cv::BORDER_REPLICATE);
  cv::GaussianBlur(ixy, ixy, cv::Size(), si, si, cv::BORDER_REPLICATE);
  cv::Mat tr = ixx + iyy;
  return ixx.mul(iyy) - ixy.mul(ixy) - p.harris_k * tr.mul(tr);
}

std::vector<Candidate> local_maxima(const cv::Mat &response, const CornerParams &p, int border) {
  double max_response = 0.0;
  cv::minMaxLoc(response, nullptr, &max_response);
  const double threshold = std::max(p.abs_threshold, p.rel_threshold * max_response);
  std::vector<Candidate> out;
  if (max_response < threshold)
    return out;

  cv::Mat dilated;
  const int ksz = 2 * p.nms_radius + 1;
  cv::dilate(response, dilated, cv::getStructuringElement(cv::MORPH_RECT, cv::Size(ksz, ksz)));
  for (int y = border; y < response.rows - border; ++y) {
    const float *r = response.ptr<float>(y);
    const float *d = dilated.ptr<float>(y);
    for (int x = border; x < response.cols - border; ++x)
      if (r[x] >= threshold && r[x] >= d[x])
        out.push_back({r[x], x, y});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate &a, const Candidate &b) { return a.response > b.response; });

  // Plateaus of equal response survive the dilate test; keep one per neighbourhood.
  cv::Mat taken = cv::Mat::zeros(response.size(), CV_8U);
  std::vector<Candidate> kept;
  for (const Candidate &c : out) {
    if (taken.at<std::uint8_t>(c.y, c.x))
      continue;
    cv::rectangle(taken, cv::Rect(c.x - p.nms_radius, c.y - p.nms_radius, ksz, ksz), cv::Scalar(1),
                  cv::FILLED);
    kept.push_back(c);
  }
  return kept;
}

// Gaussian-weighted resultant of the gradient field; false when incoherent.
bool dominant_direction(const cv::Mat &level, double cx, double cy, double radius,
                        double min_coherence, double &direction) {
  const int r = std::max(2, static_cast<int>(std::ceil(radius)));
  const double wsig = 0.5 * radius;
  double sum_x = 0.0, sum_y = 0.0, sum_mag = 0.0;
  for (int j = -r; j <= r; ++j) {
    for (int i = -r; i <= r; ++i) {
      const double r2 = static_cast<double>(i * i + j * j);
      if (r2 > radius * radius)
        continue;
      const double x = cx + i, y = cy + j;
      const double dx = 0.5 * (sample_bilinear(level, x + 1, y) - sample_bilinear(level, x - 1, y));
      const double dy = 0.5 * (sample_bilinear(level, x, y + 1) - sample_bilinear(level, x, y - 1));
      const double w = std::exp(-r2 / (2.0 * wsig * wsig));
      sum_x += w * dx;
      sum_y += w * dy;
      sum_mag += w * std::hypot(dx, dy);
    }
  }
  if (!(sum_mag > 0.0) || std::hypot(sum_x, sum_y) < min_coherence * sum_mag)
    return false;
  direction = std::atan2(sum_y, sum_x);
  return true;
}

// 4x4 spatial cells x 4 orientation bins, all measured in the feature frame.
bool oriented_grid_descriptor(const cv::Mat &level, double cx, double cy, double direction,
                              double half, Descriptor &desc) {
  constexpr int kGrid = 16;
  constexpr int kCells = 4;
  constexpr int kBins = 4;
  const double step = 2.0 * half / kGrid;
  const double cu = std::cos(direction), su = std::sin(direction);
  desc.assign(kCornerDescriptorSize, 0.0f);
  for (int gj = 0; gj < kGrid; ++gj) {
    for (int gi = 0; gi < kGrid; ++gi) {
      const double u = (gi + 0.5) * step - half;
      const double v = (gj + 0.5) * step - half;
      const double x = cx + cu * u - su * v;
      const double y = cy + su * u + cu * v;
      const double du = 0.5 * (sample_bilinear(level, x + cu, y + su) - sample_bilinear(level, x - cu, y - su));
      const double dv = 0.5 * (sample_bilinear(level, x - su, y + cu) - sample_bilinear(level, x + su, y - cu));
      const double mag = std::hypot(du, dv) * std::exp(-(u * u + v * v) / (2.0 * half * half));
      if (mag <= 0.0)
        continue;
      const double ori = (std::atan2(dv, du) + kPi) / (2.0 * kPi) * kBins;
      const double cxf = (gi + 0.5) / (kGrid / kCells) - 0.5;
      const double cyf = (gj + 0.5) / (kGrid / kCells) - 0.5;
      const int x0 = static_cast<int>(std::floor(cxf));
      const int y0 = static_cast<int>(std::floor(cyf));
      const int b0 = static_cast<int>(std::floor(ori));
      const double fx = cxf - x0, fy = cyf - y0, fb = ori - b0;
      for (int dyc = 0; dyc < 2; ++dyc) {
        const int yc = y0 + dyc;
        if (yc < 0 || yc >= kCells)
          continue;
        const double wy = dyc ? fy : 1.0 - fy;
        for (int dxc = 0; dxc < 2; ++dxc) {
          const int xc = x0 + dxc;
          if (xc < 0 || xc >= kCells)
            continue;
          const double wx = dxc ? fx : 1.0 - fx;
          for (int db = 0; db < 2; ++db) {
            const int b = ((b0 + db) % kBins + kBins) % kBins;
            const double wb = db ? fb : 1.0 - fb;
            desc[(yc * kCells + xc) * kBins + b] += static_cast<float>(mag * wx * wy * wb);
          }
        }
      }
    }
  }
  if (!l2_normalize(desc))
    return false;
  for (float &v : desc)
    v = std::min(v, 0.2f);
  return l2_normalize(desc);
}

} // namespace

FeatureSet CornerExtractor::extract(const cv::Mat &gray) const {
  const CornerParams &p = params_;
  FeatureSet out;
  out.family = FeatureFamily::Corner;
  out.source_size = gray.size();

  cv::Mat level;
  gray.convertTo(level, CV_32F);
  for (int o = 0; o < p.octaves; ++o) {
    if (o > 0) {
      cv::Mat down;
      cv::pyrDown(level, down, cv::Size((level.cols + 1) / 2, (level.rows + 1) / 2), cv::BORDER_REPLICATE);
      level = down;
    }
    const int border = std::max(2, p.border >> o);
    if (level.cols < 2 * border + 8 || level.rows < 2 * border + 8)
      break;

    cv::Mat smooth;
    cv::GaussianBlur(level, smooth, cv::Size(), p.base_sigma, p.base_sigma, cv::BORDER_REPLICATE);
    const cv::Mat response = harris_response(smooth, p);
    const std::vector<Candidate> candidates = local_maxima(response, p, border);

    const double octave_scale = static_cast<double>(1 << o);
    std::size_t kept = 0;
    for (const Candidate &c : candidates) {
      if (kept >= p.max_features_per_octave)
        break;
      const auto at = [&](int x, int y) { return static_cast<double>(response.at<float>(y, x)); };
      const double cx = c.x + parabolic_offset(at(c.x - 1, c.y), at(c.x, c.y), at(c.x + 1, c.y));
      const double cy = c.y + parabolic_offset(at(c.x, c.y - 1), at(c.x, c.y), at(c.x, c.y + 1));

      double direction = 0.0;
      if (!dominant_direction(smooth, cx, cy, p.orientation_radius, p.min_coherence, direction))
        continue;
      Descriptor desc;
      if (!oriented_grid_descriptor(smooth, cx, cy, direction, p.patch_radius, desc))
        continue;

      // Octave pixel (i, j) sits at original pixel (2^o i, 2^o j).
      out.features.push_back({{cx * octave_scale, cy * octave_scale},
                              normalize_angle(direction),
                              p.patch_radius * octave_scale});
      out.descriptors.push_back(std::move(desc));
      ++kept;
    }
  }
  return out;
}

} // namespace saffire::detail
