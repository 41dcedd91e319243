#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "genret/error.hpp"
#include "genret/types.hpp"

namespace genret {

std::string_view to_string(AnchorKind kind) {
  return kind == AnchorKind::Object ? "object" : "attribute";
}

AnchorKind anchor_kind_from_string(std::string_view text) {
  if (text == "object") return AnchorKind::Object;
  if (text == "attribute") return AnchorKind::Attribute;
  throw Error(ErrorKind::Schema, "unknown anchor_kind '" + std::string(text) + "'");
}

std::string_view to_string(Method method) {
  return method == Method::Generative ? "generative" : "contrastive";
}

Method method_from_string(std::string_view text) {
  if (text == "generative" || text == "gen") return Method::Generative;
  if (text == "contrastive" || text == "con") return Method::Contrastive;
  throw Error(ErrorKind::Configuration, "unknown method '" + std::string(text) + "'");
}

bool Box::intersects(const Box& o) const noexcept {
  return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
}

void RankingInstance::validate() const {
  const std::string where = "instance " + image_id + "/" + anchor + ": ";
  if (positives.empty()) throw Error(ErrorKind::Schema, where + "no positives");
  std::unordered_set<std::string> seen;
  for (const auto& c : candidates) {
    if (c.empty()) throw Error(ErrorKind::Schema, where + "empty candidate");
    if (!seen.insert(c).second) throw Error(ErrorKind::Schema, where + "duplicate candidate '" + c + "'");
  }
  std::unordered_set<std::size_t> pos;
  for (auto p : positives) {
    if (p >= candidates.size()) throw Error(ErrorKind::Schema, where + "positive index out of range");
    pos.insert(p);
  }
  if (negatives_explicit) {
    for (auto n : *negatives_explicit) {
      if (n >= candidates.size()) throw Error(ErrorKind::Schema, where + "negative index out of range");
      if (pos.count(n)) throw Error(ErrorKind::Schema, where + "index both positive and negative");
    }
  }
}

bool RankingInstance::is_positive(std::size_t candidate) const {
  return std::find(positives.begin(), positives.end(), candidate) != positives.end();
}

Label RankingInstance::label(std::size_t candidate, bool unlabeled_as_negative) const {
  if (is_positive(candidate)) return Label::Positive;
  if (negatives_explicit) {
    const auto& n = *negatives_explicit;
    return std::find(n.begin(), n.end(), candidate) != n.end() ? Label::Negative : Label::Unlabeled;
  }
  return unlabeled_as_negative ? Label::Negative : Label::Unlabeled;
}

void ScoredInstance::validate() const {
  instance.validate();
  if (scores.size() != instance.candidates.size()) {
    throw Error(ErrorKind::Schema, "scores length " + std::to_string(scores.size()) +
                                       " != candidates length " +
                                       std::to_string(instance.candidates.size()));
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorKind::Schema, "non-finite score for " + instance.image_id);
  }
}

std::vector<std::size_t> ranking_order(const std::vector<double>& losses) {
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  return order;
}

std::vector<std::size_t> ScoredInstance::ranking() const { return ranking_order(scores); }

std::vector<std::size_t> ScoredInstance::ranks() const {
  auto order = ranking();
  std::vector<std::size_t> r(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) r[order[pos]] = pos + 1;
  return r;
}

}  // namespace genret
