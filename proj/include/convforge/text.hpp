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

// Small string helpers shared by every module.

#ifndef CONVFORGE_TEXT_HPP_
#define CONVFORGE_TEXT_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace convforge {

std::string_view trim(std::string_view s);

// Splits on any run of ASCII whitespace. Empty input yields no tokens.
std::vector<std::string> split_whitespace(std::string_view s);

std::size_t count_whitespace_tokens(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string to_lower_ascii(std::string_view s);

bool is_word_char(char c);

}  // namespace convforge

#endif  // CONVFORGE_TEXT_HPP_
