#include "saffire/manifest.hpp"
#include "saffire/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace saffire {

namespace {

constexpr std::string_view kMagic = "# saffire-manifest v1";
constexpr std::string_view kHeader = "image,center_x,center_y,width,height,orientation_deg";

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string &field, std::size_t line_no) {
  double v = 0.0;
  const char *begin = field.data();
  const char *end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw Error(ErrorCode::IoError,
                "manifest line " + std::to_string(line_no) + ": bad number '" + field + "'");
  return v;
}

} // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

Manifest read_manifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty())
      continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      if (body.rfind("family=", 0) == 0)
        m.family = parse_family(trim(body.substr(7)));
      continue;
    }
    if (line == kHeader)
      continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ','))
      fields.push_back(trim(field));
    if (fields.size() != 6)
      throw Error(ErrorCode::IoError, "manifest line " + std::to_string(line_no) +
                                          ": expected 6 fields, got " + std::to_string(fields.size()));
    RoiRecord rec{parse_number(fields[1], line_no), parse_number(fields[2], line_no),
                  parse_number(fields[3], line_no), parse_number(fields[4], line_no),
                  parse_number(fields[5], line_no)};
    if (!(rec.width > 0.0) || !(rec.height > 0.0))
      throw Error(ErrorCode::IoError,
                  "manifest line " + std::to_string(line_no) + ": ROI size must be positive");
    m.records.push_back({fields[0], from_record(rec)});
  }
  return m;
}

void write_manifest(const std::filesystem::path &path, const Manifest &manifest) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write manifest " + path.string());
  out << kMagic << '\n';
  if (manifest.family)
    out << "# family=" << to_string(*manifest.family) << '\n';
  out << kHeader << '\n';
  for (const ManifestRecord &r : manifest.records) {
    const RoiRecord rec = to_record(r.roi);
    out << r.image << ',' << format_double(rec.center_x) << ',' << format_double(rec.center_y) << ','
        << format_double(rec.width) << ',' << format_double(rec.height) << ','
        << format_double(rec.orientation_deg) << '\n';
  }
  if (!out)
    throw Error(ErrorCode::IoError, "failed writing manifest " + path.string());
}

} // namespace saffire
