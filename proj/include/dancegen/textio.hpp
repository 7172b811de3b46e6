#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dancegen/errors.hpp"
#include "dancegen/matrix.hpp"

namespace dancegen {

// %.17g: shortest text form that round-trips an IEEE double exactly.
inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Clip file: UTF-8 text, header "#frames=<n> width=<d> fps=<f>", optional
// further comment lines, then one space-separated frame per line.
inline void write_clip_file(const std::string& path, const Matrix& frames, double fps,
                            const std::vector<std::string>& extra_comments = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "#frames=" << frames.rows << " width=" << frames.cols << " fps=" << format_g17(fps)
      << "\n";
  for (const auto& comment : extra_comments) out << "#" << comment << "\n";
  std::string line;
  for (int r = 0; r < frames.rows; ++r) {
    line.clear();
    for (int c = 0; c < frames.cols; ++c) {
      if (c) line += ' ';
      line += format_g17(frames.at(r, c));
    }
    out << line << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

struct ClipFile {
  Matrix frames;
  double fps = 0.0;
};

inline ClipFile read_clip_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open clip file '" + path + "'");
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw IoError(path + ":1: empty file");
  ++line_no;
  int n = 0, width = 0;
  double fps = 0.0;
  if (std::sscanf(line.c_str(), "#frames=%d width=%d fps=%lf", &n, &width, &fps) != 3)
    throw IoError(path + ":1: malformed header '" + line + "'");
  if (n < 0 || width <= 0 || fps <= 0.0)
    throw IoError(path + ":1: invalid header values");
  ClipFile clip;
  clip.fps = fps;
  clip.frames = Matrix(n, width);
  int row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] == '#') continue;
    if (line.empty()) continue;
    if (row >= n) throw IoError(path + ":" + std::to_string(line_no) + ": more frames than header declares");
    std::istringstream ss(line);
    for (int c = 0; c < width; ++c) {
      if (!(ss >> clip.frames.at(row, c)))
        throw IoError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(width) + " values, failed at column " + std::to_string(c + 1));
    }
    double extra;
    if (ss >> extra)
      throw IoError(path + ":" + std::to_string(line_no) + ": more than " + std::to_string(width) +
                    " values on line");
    ++row;
  }
  if (row != n)
    throw IoError(path + ": header declares " + std::to_string(n) + " frames, found " +
                  std::to_string(row));
  return clip;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace dancegen
