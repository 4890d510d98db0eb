#pragma once

#include "phrc/nn/graph.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace phrc::nn {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Checkpoint text layout:
///   #NETCFG {json}
///   #<TAG> {json}            zero or more extra sections, e.g. #NORM
///   name;rows,cols;<base64 of little-endian f64 values, column-major>
struct CheckpointData {
  nlohmann::json netcfg;
  std::map<std::string, nlohmann::json> sections;
  ParamStore params;
};

void write_checkpoint(std::ostream& out, const nlohmann::json& netcfg, const ParamStore& params,
                      const std::map<std::string, nlohmann::json>& sections = {});
CheckpointData read_checkpoint(std::istream& in);

/// Copies values by name into `into`, checking that names and shapes agree.
void load_values(const ParamStore& from, ParamStore& into);

}  // namespace phrc::nn
