#include <gtest/gtest.h>

#include <map>

#include "facet/prompts.hpp"
#include "support/test_util.hpp"

namespace facet {
namespace {

// A scripted client returning queued responses in order.
class ScriptedClient : public TextGenClient {
 public:
  explicit ScriptedClient(std::vector<std::string> responses)
      : responses_(std::move(responses)) {}

  std::string complete(const std::vector<ChatMessage>& messages, int) override {
    last_message = messages.empty() ? "" : messages.back().content;
    ++calls;
    if (responses_.empty()) throw TransportError("scripted client exhausted");
    std::string r = responses_.front();
    responses_.erase(responses_.begin());
    return r;
  }

  std::string last_message;
  int calls = 0;

 private:
  std::vector<std::string> responses_;
};

class FailingClient : public TextGenClient {
 public:
  std::string complete(const std::vector<ChatMessage>&, int) override {
    throw TransportError("service down");
  }
};

TEST(Registry, ShippedPromptsMatchTheFixtureByteForByte) {
  const std::map<std::string, std::string> expected = {
      {"animals",
       "<|image_1|> Represent the given image with the following question: Which animals can "
       "be seen in this image?"},
      {"scenes",
       "<|image_1|> Represent the given image with the following question: What type of "
       "location is depicted in this image?"},
      {"objects",
       "<|image_1|> Represent the given image with the following question: Which objects are "
       "present in this image?"},
      {"count_of_people",
       "<|image_1|> Represent the given image with the following question: How many people "
       "are present in this image?"},
      {"materials",
       "<|image_1|> Represent the given image with the following question: What material are "
       "the objects in this image made of?"},
      {"times",
       "<|image_1|> Represent the given image with the following question: What time of day "
       "is depicted in this image?"},
      {"weathers",
       "<|image_1|> Represent the given image with the following question: What is the "
       "weather like in this image?"},
      {"gestures",
       "<|image_1|> Represent the given image with the following question: What gesture are "
       "the people making in this image?"},
  };
  const auto registry = default_registry();
  ASSERT_EQ(registry.size(), 8u);
  for (const auto& p : registry.prompts()) {
    ASSERT_TRUE(expected.contains(p.facet)) << p.facet;
    EXPECT_EQ(p.full_prompt, expected.at(p.facet));
    EXPECT_EQ(p.wrapper, std::string(kDefaultWrapper));
    EXPECT_EQ(p.full_prompt, p.wrapper + " " + p.question);
  }
}

TEST(Registry, HumanPromptsLoadAsAlternativeFixture) {
  const auto registry = human_registry();
  ASSERT_EQ(registry.size(), 8u);
  EXPECT_EQ(registry.by_facet("times").question, "When is the image taken?");
  EXPECT_EQ(registry.by_facet("animals").full_prompt,
            "<|image_1|> Represent the given image with the following question: What animals "
            "are in this image?");
}

TEST(Registry, RoundTripAndValidation) {
  test::TempDir dir("registry");
  const auto registry = default_registry();
  registry.save(dir.file("r.json"));
  const auto loaded = PromptRegistry::load(dir.file("r.json"));
  ASSERT_EQ(loaded.size(), registry.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded.prompts()[i], registry.prompts()[i]);
  }

  std::vector<PromptSpec> dup = {make_prompt("x", "a", "Q?"), make_prompt("x", "b", "R?")};
  EXPECT_THROW(PromptRegistry(std::move(dup)), InvariantViolationError);
  EXPECT_THROW(PromptRegistry({}), InvariantViolationError);
  EXPECT_THROW(registry.by_id("nope"), UnknownIdError);
  EXPECT_THROW(registry.by_facet("nope"), MissingPromptError);
}

TEST(AssemblePrompt, WrapperPlusSpacePlusQuestion) {
  EXPECT_EQ(assemble_prompt("Which animals can be seen in this image?",
                            std::string(kDefaultWrapper)),
            "<|image_1|> Represent the given image with the following question: Which animals "
            "can be seen in this image?");
  EXPECT_EQ(assemble_prompt("Q?", ""), "Q?");
  EXPECT_THROW(assemble_prompt("no question mark", std::string(kDefaultWrapper)),
               MalformedQuestionError);
  EXPECT_THROW(assemble_prompt("", ""), MalformedQuestionError);
}

TEST(AssemblePrompt, InjectiveOnWrapperQuestionPairs) {
  std::set<std::string> seen;
  const std::vector<std::string> wrappers = {"", "wrap:", "other wrap:"};
  const std::vector<std::string> questions = {"A?", "B?", "A B?"};
  for (const auto& w : wrappers) {
    for (const auto& q : questions) {
      EXPECT_TRUE(seen.insert(assemble_prompt(q, w)).second) << w << " / " << q;
    }
  }
}

TEST(QuestionRequest, TemplateText) {
  EXPECT_EQ(question_request_message("people gesture", {"standing", "jumping"}),
            "Write a question to ask about the people gesture in a image, with possible "
            "answers such as standing, jumping, and so on. Please answer in one sentence "
            "without mentioning any answer.");
  EXPECT_THROW(question_request_message("", {"a", "b"}), InvalidArgumentError);
  EXPECT_THROW(question_request_message("x", {"only_one"}), InvalidArgumentError);
}

TEST(GenerateQuestion, OfflineRegistryServesTheShippedQuestion) {
  EXPECT_EQ(generate_question("weathers", {"sunny", "rainy"}, nullptr),
            "What is the weather like in this image?");
  EXPECT_EQ(generate_question("gestures", {"standing", "jumping"}, nullptr),
            "What gesture are the people making in this image?");
  EXPECT_THROW(generate_question("unknown_facet", {"a", "b"}, nullptr),
               GeneratorUnavailableError);
}

TEST(GenerateQuestion, AcceptsValidExternalAnswer) {
  ScriptedClient client({"What gesture are the people making in this image?"});
  EXPECT_EQ(generate_question("people gesture", {"standing", "jumping"}, &client),
            "What gesture are the people making in this image?");
  EXPECT_EQ(client.calls, 1);
  EXPECT_NE(client.last_message.find("people gesture"), std::string::npos);
}

TEST(GenerateQuestion, RetriesOnceThenFailsOnAnswerLeak) {
  ScriptedClient leaky({"Are the people standing in this image?",
                        "Are the people Standing in this image?"});
  EXPECT_THROW(generate_question("people gesture", {"standing", "jumping"}, &leaky),
               ValidationFailedError);
  EXPECT_EQ(leaky.calls, 2);

  ScriptedClient recovers({"Are the people standing in this image?",
                           "What gesture are the people making in this image?"});
  EXPECT_EQ(generate_question("people gesture", {"standing", "jumping"}, &recovers),
            "What gesture are the people making in this image?");
  EXPECT_EQ(recovers.calls, 2);
}

TEST(GenerateQuestion, RejectsMultiSentenceAndMissingQuestionMark) {
  ScriptedClient bad({"This is a statement.", "Another statement."});
  EXPECT_THROW(generate_question("weathers", {"sunny", "rainy"}, &bad), ValidationFailedError);
  ScriptedClient two({"First. What is shown?", "Second. What is shown?"});
  EXPECT_THROW(generate_question("weathers", {"sunny", "rainy"}, &two), ValidationFailedError);
}

TEST(GenerateQuestion, UnreachableGeneratorIsTransportError) {
  FailingClient down;
  EXPECT_THROW(generate_question("weathers", {"sunny", "rainy"}, &down), TransportError);
}

TEST(SelectionMessage, ListsPromptsWithoutImageTokenAndSubstitutesText) {
  std::vector<PromptSpec> prompts = {make_prompt("p1", "f1", "First question?"),
                                     make_prompt("p2", "f2", "Second question?")};
  const PromptRegistry registry(std::move(prompts));
  EXPECT_EQ(selection_message(registry, "Find me an everyday image of x."),
            "A. Represent the given image with the following question: First question?\n"
            "B. Represent the given image with the following question: Second question? "
            "Given the instruction Find me an everyday image of x., choose the most relevant "
            "prompt for verifying the results. Please answer in one letter.");
}

TEST(ParseLetter, AcceptedForms) {
  EXPECT_EQ(parse_letter_answer("A", 8), 0u);
  EXPECT_EQ(parse_letter_answer("b.", 8), 1u);
  EXPECT_EQ(parse_letter_answer("  C ", 8), 2u);
  EXPECT_EQ(parse_letter_answer("h", 8), 7u);
  EXPECT_THROW(parse_letter_answer("1", 8), UnparseableAnswerError);
  EXPECT_THROW(parse_letter_answer("AB", 8), UnparseableAnswerError);
  EXPECT_THROW(parse_letter_answer("", 8), UnparseableAnswerError);
  EXPECT_THROW(parse_letter_answer("Z", 8), UnparseableAnswerError);
}

TEST(SelectPrompt, LexicalWeatherQueryAgainstShippedRegistry) {
  const auto registry = default_registry();
  const std::string query = "what is the weather";
  const auto outcome = select_prompt(query, registry);
  EXPECT_EQ(outcome.chosen, "weathers");
  EXPECT_EQ(outcome.method, SelectionMethod::lexical);
  EXPECT_TRUE(outcome.raw_response.empty());

  // Exhaustive overlap recomputation with an independent tokenizer.
  auto tokens = [](const std::string& text) {
    std::set<std::string> out;
    std::string cur;
    for (char c : text) {
      const char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if ((lower >= 'a' && lower <= 'z') || (lower >= '0' && lower <= '9')) {
        cur.push_back(lower);
      } else if (!cur.empty()) {
        out.insert(cur);
        cur.clear();
      }
    }
    if (!cur.empty()) out.insert(cur);
    return out;
  };
  const auto qt = tokens(query);
  std::string best;
  double best_score = -1.0;
  for (const auto& p : registry.prompts()) {
    const auto pt = tokens(p.question);
    std::size_t inter = 0;
    for (const auto& t : qt) inter += pt.count(t);
    const double score =
        static_cast<double>(inter) / static_cast<double>(qt.size() + pt.size() - inter);
    if (score > best_score) {
      best_score = score;
      best = p.prompt_id;
    }
  }
  EXPECT_EQ(best, "weathers");
  EXPECT_EQ(outcome.chosen, best);
}

TEST(SelectPrompt, CountQueryPicksCountPrompt) {
  const auto outcome =
      select_prompt("Find me an everyday image with 4 people.", default_registry());
  EXPECT_EQ(outcome.chosen, "count_of_people");
}

TEST(SelectPrompt, SinglePromptRegistryAlwaysWins) {
  const PromptRegistry one({make_prompt("solo", "anything", "Totally unrelated words here?")});
  EXPECT_EQ(select_prompt("query about the weather", one).chosen, "solo");
}

TEST(SelectPrompt, LexicalTiesKeepRegistryOrder) {
  const PromptRegistry registry({make_prompt("first", "f1", "alpha beta?"),
                                 make_prompt("second", "f2", "alpha beta?")});
  EXPECT_EQ(select_prompt("alpha", registry).chosen, "first");
}

TEST(SelectPrompt, ExternalPathParsesLetter) {
  ScriptedClient client({" D. "});
  SelectorOptions options;
  options.client = &client;
  const auto outcome = select_prompt("Find me an everyday image with 4 people.",
                                     default_registry(), options);
  EXPECT_EQ(outcome.method, SelectionMethod::external);
  EXPECT_EQ(outcome.chosen, "count_of_people");  // 4th entry
  EXPECT_EQ(outcome.raw_response, " D. ");
  EXPECT_NE(client.last_message.find("choose the most relevant prompt"), std::string::npos);
}

TEST(SelectPrompt, ExternalOutOfRangeIsUnparseable) {
  ScriptedClient client({"Q"});
  SelectorOptions options;
  options.client = &client;
  EXPECT_THROW(select_prompt("query", default_registry(), options), UnparseableAnswerError);
}

TEST(SelectPrompt, SelectorFailureFallsBackOnlyWhenConfigured) {
  FailingClient down;
  SelectorOptions no_fallback;
  no_fallback.client = &down;
  EXPECT_THROW(select_prompt("what is the weather", default_registry(), no_fallback),
               SelectorUnavailableError);

  SelectorOptions with_fallback;
  with_fallback.client = &down;
  with_fallback.fallback_to_lexical = true;
  const auto outcome = select_prompt("what is the weather", default_registry(), with_fallback);
  EXPECT_EQ(outcome.method, SelectionMethod::lexical);
  EXPECT_EQ(outcome.chosen, "weathers");
}

}  // namespace
}  // namespace facet
