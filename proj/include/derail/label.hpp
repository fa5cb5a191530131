#pragma once

#include <optional>
#include <string_view>

namespace derail {

enum class Label { Clean = 0, Defective = 1 };

constexpr std::string_view to_string(Label label) {
  return label == Label::Defective ? "defective" : "clean";
}

constexpr std::optional<Label> parse_label(std::string_view text) {
  if (text == "defective") return Label::Defective;
  if (text == "clean") return Label::Clean;
  return std::nullopt;
}

}  // namespace derail
