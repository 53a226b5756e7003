// include/probekit/textio.hpp

// Copyright 2026  The probekit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace probekit::text {

std::vector<std::string> split(std::string_view line, char sep);
// Splits on runs of spaces/tabs; empty tokens dropped.
std::vector<std::string> split_ws(std::string_view line);

// Strict parsers: the whole token must be consumed. Throw ValidationError.
std::int64_t parse_int(std::string_view token);
double parse_double(std::string_view token);

// Shortest representation that round-trips exactly.
std::string format_double(double v);

}  // namespace probekit::text
