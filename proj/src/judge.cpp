#include "ifboost/judge.hpp"

#include <sstream>

#include "ifboost/templates.hpp"
#include "ifboost/text.hpp"
#include "ifboost/verifiers.hpp"

namespace ifboost {

std::string_view to_string(ParseFailure f) {
  switch (f) {
    case ParseFailure::None: return "ok";
    case ParseFailure::NoArray: return "no-array";
    case ParseFailure::BadLength: return "bad-length";
    case ParseFailure::BadAnswer: return "bad-answer";
    case ParseFailure::Malformed: return "malformed";
  }
  return "unknown";
}

namespace {

// End (exclusive) of the bracketed value opening at `open`, or npos.
std::size_t balanced_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      if (--depth == 0) return i + 1;
      if (depth < 0) return std::string_view::npos;
    }
  }
  return std::string_view::npos;
}

ParseResult fail(ParseFailure f, std::string reason) {
  ParseResult r;
  r.failure = f;
  r.reason = std::move(reason);
  return r;
}

}  // namespace

ParseResult parse_judge_output(std::string_view raw, std::size_t expected_n) {
  Json array;
  bool found = false;
  bool saw_bracket = false;
  for (std::size_t pos = raw.find('['); pos != std::string_view::npos;
       pos = raw.find('[', pos + 1)) {
    saw_bracket = true;
    const std::size_t end = balanced_end(raw, pos);
    if (end == std::string_view::npos) continue;
    Json candidate = Json::parse(raw.substr(pos, end - pos), nullptr, false);
    if (candidate.is_discarded() || !candidate.is_array()) continue;
    array = std::move(candidate);
    found = true;
    break;
  }
  if (!found) {
    return saw_bracket ? fail(ParseFailure::Malformed, "no bracketed text parses as a JSON array")
                       : fail(ParseFailure::NoArray, "reply contains no JSON array");
  }

  ParseResult result;
  for (const Json& item : array) {
    if (!item.is_object() || !item.contains("answer") || !item.at("answer").is_string()) {
      return fail(ParseFailure::Malformed, "array element lacks a string \"answer\"");
    }
    DetectionVerdict v;
    if (item.contains("policy") && item.at("policy").is_string()) {
      v.policy = item.at("policy").get<std::string>();
    }
    if (item.contains("explanation") && item.at("explanation").is_string()) {
      v.explanation = item.at("explanation").get<std::string>();
    }
    v.answer = to_lower(trim(item.at("answer").get<std::string>()));
    result.verdicts.push_back(std::move(v));
  }
  if (result.verdicts.size() != expected_n) {
    return fail(ParseFailure::BadLength, "expected " + std::to_string(expected_n) +
                                             " verdicts, got " +
                                             std::to_string(result.verdicts.size()));
  }
  for (const auto& v : result.verdicts) {
    if (v.answer != "yes" && v.answer != "no") {
      return fail(ParseFailure::BadAnswer, "answer '" + v.answer + "' is not yes/no");
    }
  }
  return result;
}

double JudgeReport::followed_fraction(std::size_t instruction_count) const {
  if (instruction_count == 0) return 0.0;
  return static_cast<double>(instruction_count - violated.size()) /
         static_cast<double>(instruction_count);
}

Json to_json(const JudgeReport& r) {
  Json verdicts = Json::array();
  for (const auto& v : r.verdicts) {
    verdicts.push_back(
        {{"policy", v.policy}, {"answer", v.answer}, {"explanation", v.explanation}});
  }
  return Json{{"verdicts", verdicts},
              {"violated", r.violated},
              {"parse_ok", r.parse_ok},
              {"failure", r.failure}};
}

JudgeReport judge_report_from_json(const Json& j) {
  JudgeReport r;
  for (const auto& v : j.at("verdicts")) {
    r.verdicts.push_back({v.at("policy").get<std::string>(), v.at("answer").get<std::string>(),
                          v.at("explanation").get<std::string>()});
  }
  r.violated = j.at("violated").get<std::vector<std::size_t>>();
  r.parse_ok = j.at("parse_ok").get<bool>();
  r.failure = j.value("failure", std::string());
  return r;
}

JudgeReport make_report(std::string_view raw, std::size_t instruction_count) {
  JudgeReport report;
  ParseResult parsed = parse_judge_output(raw, instruction_count);
  if (!parsed.ok()) {
    report.parse_ok = false;
    report.failure = std::string(to_string(parsed.failure)) + ": " + parsed.reason;
    for (std::size_t i = 0; i < instruction_count; ++i) report.violated.push_back(i);
    return report;
  }
  report.parse_ok = true;
  report.verdicts = std::move(parsed.verdicts);
  for (std::size_t i = 0; i < report.verdicts.size(); ++i) {
    if (report.verdicts[i].answer == "no") report.violated.push_back(i);
  }
  return report;
}

std::string numbered_policies(const std::vector<Instruction>& instructions) {
  std::ostringstream os;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    if (i) os << '\n';
    os << i + 1 << ". " << instructions[i].description;
  }
  return os.str();
}

JudgeReport detect_violations(Gateway& gateway, std::string_view text,
                              const std::vector<Instruction>& instructions,
                              CostTracker* sink, const JudgeOptions& options) {
  GenerationRequest req;
  req.user = templates::render(templates::kDetect,
                               {{"text", std::string(text)},
                                {"policies", numbered_policies(instructions)}});
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  req.role = "judge";
  GenerationResult res = gateway.generate(req, sink);
  return make_report(res.texts.at(0), instructions.size());
}

bool parse_adherence_reply(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && !is_word_char(reply[i])) ++i;
  std::size_t j = i;
  while (j < reply.size() && is_word_char(reply[j])) ++j;
  return to_lower(reply.substr(i, j - i)) == "yes";
}

bool check_task_adherence(Gateway& gateway, std::string_view query,
                          std::string_view response, CostTracker* sink,
                          const JudgeOptions& options) {
  GenerationRequest req;
  req.user = templates::render(templates::kTaskAdherence,
                               {{"query", std::string(query)}, {"text", std::string(response)}});
  req.temperature = options.temperature;
  req.max_tokens = 16;
  req.role = "adherence";
  GenerationResult res = gateway.generate(req, sink);
  return parse_adherence_reply(res.texts.at(0));
}

double judge_accuracy(const Dataset& dataset, const std::vector<std::string>& responses,
                      const std::vector<JudgeReport>& reports) {
  if (responses.size() != dataset.samples.size() || reports.size() != dataset.samples.size()) {
    throw Error("judge_accuracy: " + std::to_string(dataset.samples.size()) + " samples, " +
                std::to_string(responses.size()) + " responses, " +
                std::to_string(reports.size()) + " reports");
  }
  std::size_t agree = 0, total = 0;
  for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
    const Sample& sample = dataset.samples[s];
    const JudgeReport& report = reports[s];
    if (report.parse_ok && report.verdicts.size() != sample.instructions.size()) {
      throw Error("judge_accuracy: report for '" + sample.id + "' has " +
                  std::to_string(report.verdicts.size()) + " verdicts");
    }
    std::vector<bool> judged(sample.instructions.size(), true);
    for (std::size_t v : report.violated) {
      if (v >= judged.size()) throw Error("judge_accuracy: violated index out of range");
      judged[v] = false;
    }
    const SegmentedText text = segment(responses[s]);
    for (std::size_t i = 0; i < sample.instructions.size(); ++i) {
      agree += verify(sample.instructions[i], text).followed == judged[i];
      ++total;
    }
  }
  if (total == 0) throw Error("judge_accuracy: no instructions to compare");
  return static_cast<double>(agree) / static_cast<double>(total);
}

}  // namespace ifboost
