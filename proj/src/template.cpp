#include <algorithm>
#include <cctype>

#include "genret/error.hpp"
#include "genret/types.hpp"

namespace genret {

std::string normalize_word(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

TokenSeq split_words(std::string_view text) {
  TokenSeq tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

std::string join_words(const TokenSeq& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

namespace {

// Splits one whitespace-free chunk into slots and at most one literal. Slot
// markers may be glued to each other ("{A}{O}") but not to literal text.
void parse_chunk(std::string_view chunk, std::vector<TemplateElement>& out) {
  if (chunk.find_first_of("{}") == std::string_view::npos) {
    out.emplace_back(Literal{std::string(chunk)});
    return;
  }
  std::size_t i = 0;
  while (i < chunk.size()) {
    if (chunk.substr(i, 3) == "{A}") {
      out.emplace_back(Slot::Attribute);
    } else if (chunk.substr(i, 3) == "{O}") {
      out.emplace_back(Slot::Object);
    } else {
      throw Error(ErrorKind::TemplateSyntax,
                  "malformed braces in '" + std::string(chunk) + "'");
    }
    i += 3;
  }
}

}  // namespace

Template::Template(std::vector<TemplateElement> elements, std::string name)
    : elements_(std::move(elements)), name_(std::move(name)) {}

Template Template::parse(std::string_view spec, std::optional<Slot> ranked, std::string name) {
  std::vector<TemplateElement> elements;
  for (const auto& chunk : split_words(spec)) parse_chunk(chunk, elements);
  if (elements.empty()) throw Error(ErrorKind::TemplateSyntax, "empty template");
  bool any_slot = std::any_of(elements.begin(), elements.end(), [](const TemplateElement& e) {
    return std::holds_alternative<Slot>(e);
  });
  if (!any_slot) {
    throw Error(ErrorKind::TemplateSyntax, "template '" + std::string(spec) + "' has no slot");
  }
  Template t(std::move(elements), std::move(name));
  if (ranked && !t.has_slot(*ranked)) {
    throw Error(ErrorKind::TemplateSyntax,
                "template '" + t.format() + "' lacks the ranked " +
                    (*ranked == Slot::Attribute ? "{A}" : "{O}") + " slot");
  }
  if (t.name_.empty()) t.name_ = t.format();
  return t;
}

std::string Template::format() const {
  std::string out;
  for (const auto& e : elements_) {
    if (!out.empty()) out.push_back(' ');
    if (const auto* lit = std::get_if<Literal>(&e)) {
      out += lit->text;
    } else {
      out += std::get<Slot>(e) == Slot::Attribute ? "{A}" : "{O}";
    }
  }
  return out;
}

bool Template::has_slot(Slot slot) const noexcept {
  return std::any_of(elements_.begin(), elements_.end(), [slot](const TemplateElement& e) {
    const auto* s = std::get_if<Slot>(&e);
    return s && *s == slot;
  });
}

TokenSeq Template::render(std::optional<std::string_view> attribute,
                          std::optional<std::string_view> object) const {
  TokenSeq tokens;
  for (const auto& e : elements_) {
    if (const auto* lit = std::get_if<Literal>(&e)) {
      tokens.push_back(lit->text);
      continue;
    }
    const Slot slot = std::get<Slot>(e);
    const auto& word = slot == Slot::Attribute ? attribute : object;
    if (!word) {
      throw Error(ErrorKind::Render, std::string("no word supplied for ") +
                                         (slot == Slot::Attribute ? "{A}" : "{O}") +
                                         " in '" + format() + "'");
    }
    auto parts = split_words(*word);
    if (parts.empty()) {
      throw Error(ErrorKind::Render, std::string("empty word for ") +
                                         (slot == Slot::Attribute ? "{A}" : "{O}"));
    }
    tokens.insert(tokens.end(), parts.begin(), parts.end());
  }
  return tokens;
}

}  // namespace genret
