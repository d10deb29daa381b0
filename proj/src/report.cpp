#include "xpose/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "xpose/binary_io.hpp"
#include "xpose/errors.hpp"

namespace xpose {

std::string format_double(double v) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

namespace {

double parse_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || end != s.c_str() + s.size())
    throw ConfigError("bad number '" + s + "' in CSV");
  return v;
}

uint64_t parse_u64(const std::string& s) {
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.c_str(), s.c_str() + s.size(), v);
  if (ec != std::errc{} || p != s.c_str() + s.size())
    throw ConfigError("bad integer '" + s + "' in CSV");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::map<std::string, std::string> parse_meta_line(const std::string& line) {
  if (line.empty() || line[0] != '#') throw ConfigError("CSV is missing the '#' metadata line");
  std::map<std::string, std::string> kv;
  for (const std::string& item : split(line.substr(1), ';')) {
    size_t eq = item.find('=');
    if (eq == std::string::npos) continue;
    std::string key = item.substr(0, eq);
    while (!key.empty() && key.front() == ' ') key.erase(key.begin());
    kv[key] = item.substr(eq + 1);
  }
  return kv;
}

std::string join_plus(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : "+") + p;
  return s;
}

}  // namespace

std::string transfer_to_csv(const std::vector<TransferReport>& reports) {
  std::string dataset, transform;
  uint64_t seed = 0;
  int count = 0;
  if (!reports.empty()) {
    dataset = reports[0].dataset_id;
    transform = reports[0].transform.str();
    seed = reports[0].seed;
    count = reports[0].image_count;
    for (const auto& r : reports)
      if (r.transform.str() != transform || r.dataset_id != dataset)
        throw ConfigError("transfer_to_csv: reports disagree on transform/dataset");
  }
  // stable union of black-box columns
  std::vector<std::string> cols;
  for (const auto& r : reports)
    for (const auto& row : r.rows)
      if (std::find(cols.begin(), cols.end(), row.black_box) == cols.end())
        cols.push_back(row.black_box);

  std::string out = "# dataset=" + dataset + ";seed=" + std::to_string(seed) +
                    ";count=" + std::to_string(count) + ";transform=" + transform + "\n";
  out += "white_box,attack";
  for (const auto& c : cols) out += "," + c;
  out += "\n";
  for (const auto& r : reports) {
    out += join_plus(r.white_boxes) + "," + r.attack;
    for (const auto& c : cols) {
      out += ",";
      for (const auto& row : r.rows)
        if (row.black_box == c) {
          out += format_double(row.transformed_rate) + " (" +
                 format_double(row.baseline_rate) + ")";
          break;
        }
    }
    out += "\n";
  }
  return out;
}

std::vector<TransferReport> transfer_from_csv(const std::string& csv) {
  const auto lines = split_lines(csv);
  if (lines.size() < 2) throw ConfigError("transfer CSV must have metadata and header lines");
  auto meta = parse_meta_line(lines[0]);
  auto header = split(lines[1], ',');
  if (header.size() < 2 || header[0] != "white_box" || header[1] != "attack")
    throw ConfigError("transfer CSV header must start with white_box,attack");
  std::vector<std::string> cols(header.begin() + 2, header.end());

  std::vector<TransferReport> reports;
  for (size_t li = 2; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    auto cells = split(lines[li], ',');
    if (cells.size() != cols.size() + 2)
      throw ConfigError("transfer CSV row " + std::to_string(li) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(cols.size() + 2));
    TransferReport r;
    if (!cells[0].empty()) r.white_boxes = split(cells[0], '+');
    r.attack = cells[1];
    r.dataset_id = meta.count("dataset") ? meta["dataset"] : "";
    r.seed = meta.count("seed") ? parse_u64(meta["seed"]) : 0;
    r.image_count = meta.count("count") ? int(parse_u64(meta["count"])) : 0;
    r.transform = TransformSpec::parse(meta.count("transform") ? meta["transform"] : "identity");
    for (size_t ci = 0; ci < cols.size(); ++ci) {
      const std::string& cell = cells[ci + 2];
      if (cell.empty()) continue;
      size_t open = cell.find(" (");
      if (open == std::string::npos || cell.back() != ')')
        throw ConfigError("bad transfer cell '" + cell + "'");
      TransferRow row;
      row.black_box = cols[ci];
      row.transformed_rate = parse_double(cell.substr(0, open));
      row.baseline_rate = parse_double(cell.substr(open + 2, cell.size() - open - 3));
      r.rows.push_back(std::move(row));
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

std::string sweep_to_csv(const SweepCurve& curve) {
  std::string out = "# white_box=" + curve.white_box + ";attack=" + curve.attack +
                    ";black_box=" + curve.black_box + ";dataset=" + curve.dataset_id +
                    ";seed=" + std::to_string(curve.seed) +
                    ";count=" + std::to_string(curve.image_count) +
                    ";stride=" + std::to_string(curve.stride_deg) + "\n";
  out += "angle_deg,success_rate,argmax\n";
  for (size_t i = 0; i < curve.points.size(); ++i)
    out += format_double(curve.points[i].angle_deg) + "," +
           format_double(curve.points[i].rate) + "," +
           (int(i) == curve.argmax_index ? "1" : "0") + "\n";
  return out;
}

SweepCurve sweep_from_csv(const std::string& csv) {
  const auto lines = split_lines(csv);
  if (lines.size() < 2) throw ConfigError("sweep CSV must have metadata and header lines");
  auto meta = parse_meta_line(lines[0]);
  SweepCurve c;
  c.white_box = meta["white_box"];
  c.attack = meta["attack"];
  c.black_box = meta["black_box"];
  c.dataset_id = meta["dataset"];
  c.seed = meta.count("seed") ? parse_u64(meta["seed"]) : 0;
  c.image_count = meta.count("count") ? int(parse_u64(meta["count"])) : 0;
  c.stride_deg = meta.count("stride") ? int(parse_u64(meta["stride"])) : 10;
  for (size_t li = 2; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    auto cells = split(lines[li], ',');
    if (cells.size() != 3) throw ConfigError("sweep CSV row must have 3 cells");
    c.points.push_back({parse_double(cells[0]), parse_double(cells[1])});
    if (cells[2] == "1") c.argmax_index = int(c.points.size()) - 1;
  }
  return c;
}

// ---- SVG --------------------------------------------------------------------

namespace {

constexpr const char* kPalette[] = {"#c0392b", "#2980b9", "#27ae60", "#8e44ad",
                                    "#d35400", "#16a085", "#7f8c8d", "#2c3e50"};

constexpr double kW = 840, kH = 520;
constexpr double kLeft = 70, kRight = 190, kTop = 30, kBottom = 60;

double sx(double angle) { return kLeft + angle / 360.0 * (kW - kLeft - kRight); }
double sy(double rate) { return kTop + (100.0 - rate) / 100.0 * (kH - kTop - kBottom); }

std::string fmt2(double v) {
  // fixed 2-decimal form for SVG geometry
  char buf[32];
  snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string sweep_to_svg(const std::vector<SweepCurve>& curves) {
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(kW) + "\" height=\"" +
       fmt2(kH) + "\" viewBox=\"0 0 " + fmt2(kW) + " " + fmt2(kH) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  s += "<line x1=\"" + fmt2(kLeft) + "\" y1=\"" + fmt2(sy(0)) + "\" x2=\"" + fmt2(sx(360)) +
       "\" y2=\"" + fmt2(sy(0)) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt2(kLeft) + "\" y1=\"" + fmt2(sy(0)) + "\" x2=\"" + fmt2(kLeft) +
       "\" y2=\"" + fmt2(sy(100)) + "\" stroke=\"black\"/>\n";
  for (int a = 0; a <= 360; a += 60) {
    s += "<line x1=\"" + fmt2(sx(a)) + "\" y1=\"" + fmt2(sy(0)) + "\" x2=\"" + fmt2(sx(a)) +
         "\" y2=\"" + fmt2(sy(0) + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt2(sx(a)) + "\" y=\"" + fmt2(sy(0) + 20) +
         "\" text-anchor=\"middle\" font-size=\"12\">" + std::to_string(a) + "</text>\n";
  }
  for (int rate = 0; rate <= 100; rate += 20) {
    s += "<line x1=\"" + fmt2(kLeft - 5) + "\" y1=\"" + fmt2(sy(rate)) + "\" x2=\"" +
         fmt2(kLeft) + "\" y2=\"" + fmt2(sy(rate)) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt2(kLeft - 10) + "\" y=\"" + fmt2(sy(rate) + 4) +
         "\" text-anchor=\"end\" font-size=\"12\">" + std::to_string(rate) + "</text>\n";
  }
  s += "<text x=\"" + fmt2((kLeft + kW - kRight) / 2) + "\" y=\"" + fmt2(kH - 15) +
       "\" text-anchor=\"middle\" font-size=\"14\">rotation angle (deg)</text>\n";
  s += "<text x=\"20\" y=\"" + fmt2((kTop + kH - kBottom) / 2) +
       "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 " +
       fmt2((kTop + kH - kBottom) / 2) + ")\">success rate (%)</text>\n";

  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const SweepCurve& c = curves[ci];
    const char* color = kPalette[ci % 8];
    if (c.points.size() >= 2) {
      s += "<polyline fill=\"none\" stroke=\"";
      s += color;
      s += "\" stroke-width=\"1.5\" points=\"";
      for (size_t i = 0; i < c.points.size(); ++i) {
        if (i) s += " ";
        s += fmt2(sx(c.points[i].angle_deg)) + "," + fmt2(sy(c.points[i].rate));
      }
      s += "\"/>\n";
    }
    if (!c.points.empty()) {
      const SweepPoint& am = c.points[size_t(c.argmax_index)];
      s += "<circle cx=\"" + fmt2(sx(am.angle_deg)) + "\" cy=\"" + fmt2(sy(am.rate)) +
           "\" r=\"4\" fill=\"";
      s += color;
      s += "\"/>\n";
    }
    const double ly = kTop + 16 + 18 * double(ci);
    s += "<line x1=\"" + fmt2(kW - kRight + 16) + "\" y1=\"" + fmt2(ly - 4) + "\" x2=\"" +
         fmt2(kW - kRight + 40) + "\" y2=\"" + fmt2(ly - 4) + "\" stroke=\"";
    s += color;
    s += "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt2(kW - kRight + 46) + "\" y=\"" + fmt2(ly) +
         "\" font-size=\"12\">" + c.black_box + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

void write_ppm(const std::string& path, const Tensor& img) {
  const Shape s = img.shape();
  if (s.b != 1 || (s.c != 1 && s.c != 3))
    throw ConfigError("write_ppm expects [1,h,w,1|3], got " + s.str());
  std::string bytes = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  bytes.reserve(bytes.size() + size_t(s.h) * s.w * 3);
  for (int i = 0; i < s.h; ++i)
    for (int j = 0; j < s.w; ++j)
      for (int k = 0; k < 3; ++k) {
        float v = img.at(0, i, j, s.c == 3 ? k : 0);
        int q = int(std::lround(std::min(1.0f, std::max(0.0f, v)) * 255.0f));
        bytes.push_back(char(uint8_t(q)));
      }
  write_file_atomic(path, bytes);
}

}  // namespace xpose
