#include "genret/error.hpp"

namespace genret {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::TemplateSyntax: return "template-syntax";
    case ErrorKind::Render: return "render";
    case ErrorKind::Vocabulary: return "vocabulary";
    case ErrorKind::Normalization: return "normalization";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Spec: return "spec";
    case ErrorKind::Builder: return "builder";
    case ErrorKind::Stats: return "stats";
    case ErrorKind::Metric: return "undefined-metric";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Coverage: return "coverage";
    case ErrorKind::Optimization: return "optimization";
    case ErrorKind::Argument: return "argument";
    case ErrorKind::Io: return "io";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

}  // namespace genret
