#pragma once

// Domain vocabulary shared by every module: words, sentence templates and
// ranking-problem records.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace genret {

using Word = std::string;
using TokenSeq = std::vector<std::string>;

// Lowercases and collapses runs of whitespace. Applied once when words enter
// the system (file readers, world generation); comparisons are exact after.
std::string normalize_word(std::string_view raw);

// Whitespace tokenization; never yields empty tokens.
TokenSeq split_words(std::string_view text);

std::string join_words(const TokenSeq& tokens);

enum class Slot { Attribute, Object };

struct Literal {
  std::string text;
  bool operator==(const Literal&) const = default;
};

using TemplateElement = std::variant<Literal, Slot>;

// A sentence pattern of literal tokens and {A}/{O} slots. The word order of a
// template decides which conditional dependencies a generative scorer
// measures: "{O} is {A}" conditions the attribute on the object, "{A} {O}"
// the object on the attribute, "{A}" only on the image.
class Template {
 public:
  // Throws Error(TemplateSyntax) on empty input, missing slots or malformed
  // braces. When `ranked` is given, that slot must be present as well.
  static Template parse(std::string_view spec, std::optional<Slot> ranked = std::nullopt,
                        std::string name = {});

  const std::vector<TemplateElement>& elements() const noexcept { return elements_; }
  const std::string& name() const noexcept { return name_; }

  // Canonical spec string; parse(format()) reproduces the template.
  std::string format() const;

  bool has_slot(Slot slot) const noexcept;

  // Substitutes slot words in order, splitting multi-word values on
  // whitespace. Throws Error(Render) when a used slot has no word.
  TokenSeq render(std::optional<std::string_view> attribute,
                  std::optional<std::string_view> object) const;

  bool operator==(const Template& other) const { return elements_ == other.elements_; }

 private:
  Template(std::vector<TemplateElement> elements, std::string name);

  std::vector<TemplateElement> elements_;
  std::string name_;
};

inline constexpr std::array<std::string_view, 4> kCanonicalTemplates = {
    "{A}", "{O} is {A}", "{A} {O}", "{A} {O} is {A}"};

// Which side of the (object, attribute) pair is given. An Object anchor means
// the candidates are attributes and the template's {A} slot is ranked.
enum class AnchorKind { Object, Attribute };

std::string_view to_string(AnchorKind kind);
AnchorKind anchor_kind_from_string(std::string_view text);

inline Slot ranked_slot(AnchorKind anchor) {
  return anchor == AnchorKind::Object ? Slot::Attribute : Slot::Object;
}

struct Box {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const Box&) const = default;
  bool intersects(const Box& other) const noexcept;
};

struct ImageRef {
  std::string image_id;
  std::optional<Box> region;
  bool operator==(const ImageRef&) const = default;
};

enum class Label { Positive, Negative, Unlabeled };

struct RankingInstance {
  std::string image_id;
  std::optional<Box> region;
  AnchorKind anchor_kind = AnchorKind::Object;
  std::string anchor;
  std::vector<std::string> candidates;
  std::vector<std::size_t> positives;
  std::optional<std::vector<std::size_t>> negatives_explicit;

  ImageRef image() const { return {image_id, region}; }

  // Throws Error(Schema) when an invariant is broken: positives empty or out
  // of range, duplicate candidates, positives overlapping explicit negatives.
  void validate() const;

  bool is_positive(std::size_t candidate) const;

  // Unlabeled only when explicit negatives exist and the candidate is in
  // neither set; otherwise non-positives are negatives if
  // `unlabeled_as_negative`, unlabeled if not.
  Label label(std::size_t candidate, bool unlabeled_as_negative = true) const;

  bool operator==(const RankingInstance&) const = default;
};

enum class Method { Generative, Contrastive };

std::string_view to_string(Method method);
Method method_from_string(std::string_view text);

struct ScoredInstance {
  RankingInstance instance;
  std::vector<double> scores;  // losses aligned with candidates, lower = better
  Method method = Method::Generative;
  std::string template_name;

  // Provenance for score caches, aligned with candidates when present.
  // raw_losses differ from scores only under length normalization.
  std::vector<TokenSeq> sentences;
  std::vector<double> raw_losses;
  std::vector<std::vector<double>> per_token;

  void validate() const;

  // Candidate indices by ascending loss, ties by index.
  std::vector<std::size_t> ranking() const;

  // 1-based rank of every candidate under the same ordering.
  std::vector<std::size_t> ranks() const;
};

std::vector<std::size_t> ranking_order(const std::vector<double>& losses);

}  // namespace genret
