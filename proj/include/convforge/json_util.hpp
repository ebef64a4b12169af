// Copyright 2026 The ConvForge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Helpers for merging JSON config sections into typed structs.

#ifndef CONVFORGE_JSON_UTIL_HPP_
#define CONVFORGE_JSON_UTIL_HPP_

#include <algorithm>
#include <initializer_list>
#include <string>

#include "convforge/errors.hpp"
#include "json.hpp"

namespace convforge::jsonutil {

template <class T>
void take(const nlohmann::json& j, const char* key, T& dst) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    dst = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* section) {
  if (!j.is_object()) throw ValidationError(std::string("config section '") + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; })) {
      throw ValidationError(std::string("unknown key '") + k + "' in config section '" + section + "'");
    }
  }
}

}  // namespace convforge::jsonutil

#endif  // CONVFORGE_JSON_UTIL_HPP_
