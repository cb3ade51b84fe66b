#include "tracklearn/trajectory_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tracklearn {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_path_csv(const std::filesystem::path& file, const PathBuffer& buffer) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot open for writing: " + file.string());
  os << "t,x,y,theta,v\n";
  for (const PathPoint& p : buffer.points) {
    os << format_double(p.t) << ',' << format_double(p.pose.x) << ',' << format_double(p.pose.y)
       << ',' << format_double(p.pose.theta) << ',' << format_double(p.speed) << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + file.string());
}

PathBuffer read_path_csv(const std::filesystem::path& file, SourceTag tag) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open: " + file.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty trajectory file: " + file.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,x,y,theta,v")
    throw std::runtime_error("bad trajectory header in " + file.string() + ": " + line);

  std::vector<PathPoint> pts;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    PathPoint p;
    char c1, c2, c3, c4;
    if (!(ls >> p.t >> c1 >> p.pose.x >> c2 >> p.pose.y >> c3 >> p.pose.theta >> c4 >> p.speed) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',') {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": bad row: " + line);
    }
    p.pose.theta = wrap_angle(p.pose.theta);
    pts.push_back(p);
  }
  return PathBuffer(std::move(pts), tag);
}

}  // namespace tracklearn
