#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "cbr/corpus.hpp"

namespace cbr::detail {

// JSON encoding of a case, shared by dataset and casebase files. Decoding
// failures raise FormatError carrying `line_no`.
nlohmann::json case_to_json_object(const Case& c);
std::string case_json_line(const Case& c);
Case case_from_json(const nlohmann::json& rec, std::size_t line_no);
Case case_from_json_line(std::string_view line, std::size_t line_no);

}  // namespace cbr::detail
