#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "intentaug/error.hpp"
#include "intentaug/util.hpp"

namespace intentaug::prompts {

struct GenerationInput {
  std::string intent;
  std::string domain;
  std::vector<std::string> icl_examples;
};

struct RegenerationInput {
  std::string intent;
  std::string domain;
  std::string ambiguous_utterance;
  std::string most_similar_intent;
  std::vector<std::string> icl_examples;
};

inline constexpr std::string_view kResponseFormat =
    "Your response should only be a JSON object with the following structure:\n"
    "\n"
    "{\"utterance\": \"generated_utterance\"}";

namespace detail {

inline void append_examples(std::string& out, const std::vector<std::string>& examples) {
  if (examples.empty()) throw DataError("prompt needs at least one ICL example");
  for (const auto& ex : examples) {
    if (ex.find_first_of("\r\n") != std::string::npos) {
      throw DataError("ICL example contains a line break: '" + ex + "'");
    }
    out += "- ";
    out += ex;
    out += '\n';
  }
  out += '\n';
  out += kResponseFormat;
}

}  // namespace detail

/// Prompt asking for one new utterance of `intent`.
inline std::string render_generation(const GenerationInput& in) {
  std::string out = "Give me 1 user's utterance indicating the user intent of \"" + in.intent +
                    "\" in the domain \"" + in.domain +
                    "\". You can use the following utterances as examples:\n";
  detail::append_examples(out, in.icl_examples);
  return out;
}

/// Prompt asking to rewrite an utterance that drifted toward `most_similar_intent`.
/// The examples are those of the target intent.
inline std::string render_regeneration(const RegenerationInput& in) {
  if (in.most_similar_intent == in.intent) {
    throw DataError("most similar intent must differ from the target intent ('" + in.intent + "')");
  }
  if (trim(in.ambiguous_utterance).empty()) throw DataError("ambiguous utterance is empty");
  std::string out = "I generated 1 user's utterance indicating the user intent of \"" + in.intent +
                    "\" in the domain \"" + in.domain + "\" as follows: \"" + in.ambiguous_utterance +
                    "\". However, the utterance is more similar to the intent \"" + in.most_similar_intent +
                    "\" which may cause ambiguities. Please refine and disambiguate the generated utterance. "
                    "You can use the following utterances as examples of the expected intent:\n";
  detail::append_examples(out, in.icl_examples);
  return out;
}

}  // namespace intentaug::prompts
