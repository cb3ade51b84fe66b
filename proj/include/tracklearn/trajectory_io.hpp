#pragma once

#include <filesystem>
#include <string>

#include "tracklearn/geometry.hpp"

namespace tracklearn {

/// Trajectory CSV: header `t,x,y,theta,v`, one row per sample, row order =
/// time order, units s/m/m/rad/(m/s). Stands in for the original rosbag logs.
void write_path_csv(const std::filesystem::path& file, const PathBuffer& buffer);
PathBuffer read_path_csv(const std::filesystem::path& file, SourceTag tag);

/// Deterministic numeric formatting used by every CSV writer (shortest
/// round-trippable form would vary with locale; this is plain %.12g).
std::string format_double(double v);

}  // namespace tracklearn
