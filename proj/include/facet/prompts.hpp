#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "facet/errors.hpp"

namespace facet {

// Fixed instruction template of the base retriever; a facet question is
// appended to form the full prompt.
inline constexpr std::string_view kDefaultWrapper =
    "<|image_1|> Represent the given image with the following question:";

inline constexpr std::string_view kImageToken = "<|image_1|>";

struct ChatMessage {
  std::string role;
  std::string content;
};

// Transport-agnostic text generation client (question writing, prompt
// selection). Implementations may call an external service.
class TextGenClient {
 public:
  virtual ~TextGenClient() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages, int max_tokens) = 0;
};

inline std::string assemble_prompt(const std::string& question, const std::string& wrapper) {
  if (question.empty() || question.back() != '?') {
    throw MalformedQuestionError("question must end with '?': " + question);
  }
  if (wrapper.empty()) return question;
  return wrapper + " " + question;
}

struct PromptSpec {
  std::string prompt_id;
  std::string facet;
  std::string question;
  std::string wrapper;
  std::string full_prompt;

  bool operator==(const PromptSpec&) const = default;
};

inline PromptSpec make_prompt(std::string prompt_id, std::string facet, std::string question,
                              std::string wrapper = std::string(kDefaultWrapper)) {
  PromptSpec spec;
  spec.full_prompt = assemble_prompt(question, wrapper);
  spec.prompt_id = std::move(prompt_id);
  spec.facet = std::move(facet);
  spec.question = std::move(question);
  spec.wrapper = std::move(wrapper);
  if (spec.prompt_id.empty()) throw InvariantViolationError("prompt_id must be non-empty");
  return spec;
}

class PromptRegistry {
 public:
  explicit PromptRegistry(std::vector<PromptSpec> prompts,
                          std::string wrapper_default = std::string(kDefaultWrapper))
      : prompts_(std::move(prompts)), wrapper_default_(std::move(wrapper_default)) {
    if (prompts_.empty()) {
      throw InvariantViolationError("prompt registry must not be empty");
    }
    std::set<std::string> ids;
    for (const auto& p : prompts_) {
      if (!ids.insert(p.prompt_id).second) {
        throw InvariantViolationError("duplicate prompt_id " + p.prompt_id);
      }
    }
  }

  const std::vector<PromptSpec>& prompts() const { return prompts_; }
  std::size_t size() const { return prompts_.size(); }
  const std::string& wrapper_default() const { return wrapper_default_; }

  const PromptSpec& by_id(const std::string& prompt_id) const {
    for (const auto& p : prompts_) {
      if (p.prompt_id == prompt_id) return p;
    }
    throw UnknownIdError("unknown prompt_id " + prompt_id);
  }

  const PromptSpec* find_by_facet(const std::string& facet) const {
    for (const auto& p : prompts_) {
      if (p.facet == facet) return &p;
    }
    return nullptr;
  }

  const PromptSpec& by_facet(const std::string& facet) const {
    const PromptSpec* p = find_by_facet(facet);
    if (p == nullptr) {
      throw MissingPromptError("no prompt registered for facet " + facet);
    }
    return *p;
  }

  // JSON array of {prompt_id, facet, question, wrapper?}; wrapper defaults
  // to the base retriever template.
  static PromptRegistry load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
      throw IoError("registry load: cannot open " + path.string());
    }
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("registry load: ") + e.what());
    }
    if (!j.is_array()) {
      throw FormatError("registry load: expected a JSON array");
    }
    std::vector<PromptSpec> prompts;
    for (const auto& jp : j) {
      prompts.push_back(make_prompt(jp.at("prompt_id").get<std::string>(),
                                    jp.at("facet").get<std::string>(),
                                    jp.at("question").get<std::string>(),
                                    jp.value("wrapper", std::string(kDefaultWrapper))));
    }
    return PromptRegistry(std::move(prompts));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
      throw IoError("registry save: cannot open " + path.string());
    }
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : prompts_) {
      j.push_back({{"prompt_id", p.prompt_id},
                   {"facet", p.facet},
                   {"question", p.question},
                   {"wrapper", p.wrapper}});
    }
    out << j.dump(2) << "\n";
  }

 private:
  std::vector<PromptSpec> prompts_;
  std::string wrapper_default_;
};

// The eight shipped prompts, one per facet.
inline PromptRegistry default_registry() {
  std::vector<PromptSpec> prompts;
  prompts.push_back(make_prompt("animals", "animals", "Which animals can be seen in this image?"));
  prompts.push_back(
      make_prompt("scenes", "scenes", "What type of location is depicted in this image?"));
  prompts.push_back(
      make_prompt("objects", "objects", "Which objects are present in this image?"));
  prompts.push_back(make_prompt("count_of_people", "count_of_people",
                                "How many people are present in this image?"));
  prompts.push_back(make_prompt("materials", "materials",
                                "What material are the objects in this image made of?"));
  prompts.push_back(
      make_prompt("times", "times", "What time of day is depicted in this image?"));
  prompts.push_back(
      make_prompt("weathers", "weathers", "What is the weather like in this image?"));
  prompts.push_back(make_prompt("gestures", "gestures",
                                "What gesture are the people making in this image?"));
  return PromptRegistry(std::move(prompts));
}

// Hand-written alternative set, loadable for ablation runs.
inline PromptRegistry human_registry() {
  std::vector<PromptSpec> prompts;
  prompts.push_back(make_prompt("animals", "animals", "What animals are in this image?"));
  prompts.push_back(make_prompt("scenes", "scenes", "What scene is in the image?"));
  prompts.push_back(make_prompt("objects", "objects", "What objects are in the image?"));
  prompts.push_back(make_prompt("count_of_people", "count_of_people",
                                "How many people are in the image?"));
  prompts.push_back(
      make_prompt("materials", "materials", "What are the objects made of in the image?"));
  prompts.push_back(make_prompt("times", "times", "When is the image taken?"));
  prompts.push_back(
      make_prompt("weathers", "weathers", "What is the weather in the image?"));
  prompts.push_back(
      make_prompt("gestures", "gestures", "What is the person doing in the image?"));
  return PromptRegistry(std::move(prompts));
}

namespace detail {

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace detail

// Lowercase alphanumeric word tokens, as a set.
inline std::set<std::string> lexical_tokens(const std::string& text) {
  std::set<std::string> tokens;
  std::string current;
  for (char c : detail::to_lower(text)) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(c);
    } else if (!current.empty()) {
      tokens.insert(current);
      current.clear();
    }
  }
  if (!current.empty()) tokens.insert(current);
  return tokens;
}

inline double jaccard_overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : a) {
    if (b.contains(t)) ++inter;
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// Message asking the generator to write a facet question, given example
// answers that must not leak into the question.
inline std::string question_request_message(const std::string& facet_name,
                                            const std::vector<std::string>& example_answers) {
  if (facet_name.empty()) {
    throw InvalidArgumentError("question_request_message: facet name must be non-empty");
  }
  if (example_answers.size() < 2) {
    throw InvalidArgumentError("question_request_message: need at least two example answers");
  }
  std::string answers;
  for (std::size_t i = 0; i < example_answers.size(); ++i) {
    if (i > 0) answers += ", ";
    answers += example_answers[i];
  }
  return "Write a question to ask about the " + facet_name +
         " in a image, with possible answers such as " + answers +
         ", and so on. Please answer in one sentence without mentioning any answer.";
}

namespace detail {

inline std::optional<std::string> validate_generated_question(
    const std::string& raw, const std::vector<std::string>& example_answers) {
  const std::string q = trim(raw);
  if (q.empty() || q.back() != '?') return std::nullopt;
  // One sentence: no terminator before the final '?'.
  for (std::size_t i = 0; i + 1 < q.size(); ++i) {
    if (q[i] == '?' || q[i] == '!' || q[i] == '.') return std::nullopt;
  }
  const std::string lower = to_lower(q);
  for (const auto& answer : example_answers) {
    if (!answer.empty() && lower.find(to_lower(answer)) != std::string::npos) {
      return std::nullopt;
    }
  }
  return q;
}

}  // namespace detail

// Ask the generator for a facet question; with no generator configured, fall
// back to the registered question for that facet. A question that leaks an
// example answer is retried once, then rejected.
inline std::string generate_question(const std::string& facet_name,
                                     const std::vector<std::string>& example_answers,
                                     TextGenClient* generator,
                                     const PromptRegistry& offline_bank = default_registry()) {
  const std::string request = question_request_message(facet_name, example_answers);
  if (generator == nullptr) {
    const PromptSpec* p = offline_bank.find_by_facet(facet_name);
    if (p == nullptr) {
      throw GeneratorUnavailableError("no generator configured and no offline question for facet " +
                                      facet_name);
    }
    return p->question;
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string raw;
    try {
      raw = generator->complete({ChatMessage{"user", request}}, 64);
    } catch (const TransportError&) {
      throw;
    } catch (const std::exception& e) {
      throw GeneratorUnavailableError(std::string("question generator failed: ") + e.what());
    }
    auto q = detail::validate_generated_question(raw, example_answers);
    if (q.has_value()) return *q;
  }
  throw ValidationFailedError("generated question mentions an example answer or is malformed");
}

// --- prompt selection ---

enum class SelectionMethod { external, lexical };

inline std::string to_string(SelectionMethod m) {
  return m == SelectionMethod::external ? "external" : "lexical";
}

struct SelectionOutcome {
  std::string chosen;  // prompt_id
  SelectionMethod method;
  std::string raw_response;  // empty for lexical
};

namespace detail {

// Prompts are listed without the leading image token, matching the documented
// selection request format.
inline std::string prompt_for_listing(const PromptSpec& p) {
  std::string s = p.full_prompt;
  if (s.rfind(kImageToken, 0) == 0) {
    s.erase(0, kImageToken.size());
    if (!s.empty() && s.front() == ' ') s.erase(0, 1);
  }
  return s;
}

}  // namespace detail

// Builds the selection request: lettered prompt list, then the instruction
// with the query text substituted verbatim.
inline std::string selection_message(const PromptRegistry& registry,
                                     const std::string& query_text) {
  if (registry.size() > 26) {
    throw InvalidArgumentError("selection_message: more than 26 prompts");
  }
  std::string prompts;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (i > 0) prompts += "\n";
    prompts += static_cast<char>('A' + i);
    prompts += ". ";
    prompts += detail::prompt_for_listing(registry.prompts()[i]);
  }
  return prompts + " Given the instruction " + query_text +
         ", choose the most relevant prompt for verifying the results. "
         "Please answer in one letter.";
}

// Accepts "A".."Z" (case-insensitive) with optional trailing period.
inline std::size_t parse_letter_answer(const std::string& raw, std::size_t n_options) {
  std::string s = detail::trim(raw);
  if (!s.empty() && s.back() == '.') s.pop_back();
  s = detail::trim(s);
  if (s.size() != 1 || !std::isalpha(static_cast<unsigned char>(s[0]))) {
    throw UnparseableAnswerError("selector answer is not a single letter: '" + raw + "'");
  }
  const std::size_t idx =
      static_cast<std::size_t>(std::toupper(static_cast<unsigned char>(s[0])) - 'A');
  if (idx >= n_options) {
    throw UnparseableAnswerError("selector answer '" + raw + "' outside A-" +
                                 std::string(1, static_cast<char>('A' + n_options - 1)));
  }
  return idx;
}

struct SelectorOptions {
  TextGenClient* client = nullptr;     // null: lexical selection
  bool fallback_to_lexical = false;    // on external failure
  int max_tokens = 64;
};

inline SelectionOutcome select_prompt_lexical(const std::string& query_text,
                                              const PromptRegistry& registry) {
  const auto query_tokens = lexical_tokens(query_text);
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const double score =
        jaccard_overlap(query_tokens, lexical_tokens(registry.prompts()[i].question));
    if (score > best_score) {  // ties keep registry order
      best_score = score;
      best = i;
    }
  }
  return SelectionOutcome{registry.prompts()[best].prompt_id, SelectionMethod::lexical, ""};
}

// External path: send the lettered prompt list, parse a one-letter answer.
// Lexical fallback: maximize token Jaccard overlap with the query text.
inline SelectionOutcome select_prompt(const std::string& query_text,
                                      const PromptRegistry& registry,
                                      const SelectorOptions& options = {}) {
  if (options.client == nullptr) {
    return select_prompt_lexical(query_text, registry);
  }
  std::string raw;
  try {
    raw = options.client->complete({ChatMessage{"user", selection_message(registry, query_text)}},
                                   options.max_tokens);
  } catch (const std::exception& e) {
    if (options.fallback_to_lexical) {
      return select_prompt_lexical(query_text, registry);
    }
    throw SelectorUnavailableError(std::string("prompt selector failed: ") + e.what());
  }
  const std::size_t idx = parse_letter_answer(raw, registry.size());
  return SelectionOutcome{registry.prompts()[idx].prompt_id, SelectionMethod::external, raw};
}

}  // namespace facet
