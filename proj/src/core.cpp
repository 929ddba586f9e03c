#include "ifboost/core.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ifboost/random.hpp"
#include "ifboost/verifiers.hpp"

namespace ifboost {

DatasetError::DatasetError(const std::string& what, std::size_t line)
    : Error(line ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

Json to_json(const Instruction& instruction) {
  nlohmann::ordered_json j;
  j["description"] = instruction.description;
  j["class_id"] = instruction.class_id;
  j["parameters"] = instruction.parameters;
  return j;
}

Json to_json(const Sample& sample) {
  Json instructions = Json::array();
  for (const auto& i : sample.instructions) instructions.push_back(to_json(i));
  return Json{{"id", sample.id},
              {"query", sample.query},
              {"instructions", std::move(instructions)}};
}

Json to_json(const Verdict& verdict) {
  return Json{{"class_id", verdict.class_id},
              {"followed", verdict.followed},
              {"detail", verdict.detail}};
}

namespace {

const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) {
    throw DatasetError(std::string("missing field '") + name + "'");
  }
  return j.at(name);
}

std::string string_field(const Json& j, const char* name) {
  const Json& v = field(j, name);
  if (!v.is_string()) {
    throw DatasetError(std::string("field '") + name + "' must be a string");
  }
  return v.get<std::string>();
}

}  // namespace

Instruction instruction_from_json(const Json& j) {
  Instruction i;
  i.description = string_field(j, "description");
  i.class_id = string_field(j, "class_id");
  i.parameters = field(j, "parameters");
  if (!i.parameters.is_object()) {
    throw DatasetError("field 'parameters' must be an object");
  }
  return i;
}

Sample sample_from_json(const Json& j) {
  Sample s;
  s.id = string_field(j, "id");
  s.query = string_field(j, "query");
  const Json& arr = field(j, "instructions");
  if (!arr.is_array()) throw DatasetError("field 'instructions' must be an array");
  for (const auto& item : arr) s.instructions.push_back(instruction_from_json(item));
  return s;
}

Verdict verdict_from_json(const Json& j) {
  Verdict v;
  v.class_id = string_field(j, "class_id");
  v.followed = field(j, "followed").get<bool>();
  v.detail = string_field(j, "detail");
  return v;
}

void validate_sample(const Sample& sample) {
  if (sample.id.empty()) throw SchemaError("sample id is empty");
  const auto n = sample.instructions.size();
  if (n < 1 || n > 10) {
    throw SchemaError("sample '" + sample.id + "' has " + std::to_string(n) +
                      " instructions; expected 1..10");
  }
  std::set<std::string> seen;
  for (const auto& i : sample.instructions) {
    registry().validate(i);
    if (!seen.insert(i.class_id).second) {
      throw SchemaError("sample '" + sample.id + "' repeats class '" +
                        i.class_id + "'");
    }
  }
}

void validate_dataset(Dataset& dataset) {
  std::set<std::string> ids;
  const std::size_t k =
      dataset.samples.empty() ? 0 : dataset.samples.front().instructions.size();
  for (std::size_t idx = 0; idx < dataset.samples.size(); ++idx) {
    const Sample& s = dataset.samples[idx];
    try {
      validate_sample(s);
    } catch (const SchemaError& e) {
      throw DatasetError(e.what(), idx + 1);
    }
    if (!ids.insert(s.id).second) {
      throw DatasetError("duplicate sample id '" + s.id + "'", idx + 1);
    }
    if (s.instructions.size() != k) {
      throw DatasetError("sample '" + s.id + "' has " +
                             std::to_string(s.instructions.size()) +
                             " instructions; dataset uses " + std::to_string(k),
                         idx + 1);
    }
  }
  dataset.meta.instructions_per_sample = k;
}

Dataset read_dataset(std::istream& in, const std::string& provenance) {
  Dataset d;
  d.meta.provenance = provenance;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    Sample s;
    try {
      s = sample_from_json(Json::parse(line));
      validate_sample(s);
    } catch (const Json::exception& e) {
      throw DatasetError(std::string("malformed record: ") + e.what(), lineno);
    } catch (const DatasetError& e) {
      throw DatasetError(e.what(), lineno);
    } catch (const SchemaError& e) {
      throw DatasetError(e.what(), lineno);
    }
    if (!ids.insert(s.id).second) {
      throw DatasetError("duplicate sample id '" + s.id + "'", lineno);
    }
    if (!d.samples.empty() &&
        s.instructions.size() != d.samples.front().instructions.size()) {
      throw DatasetError("sample '" + s.id + "' has " +
                             std::to_string(s.instructions.size()) +
                             " instructions; earlier samples have " +
                             std::to_string(
                                 d.samples.front().instructions.size()),
                         lineno);
    }
    d.samples.push_back(std::move(s));
  }
  d.meta.instructions_per_sample =
      d.samples.empty() ? 0 : d.samples.front().instructions.size();
  return d;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset file " + path.string());
  return read_dataset(in, path.string());
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  for (const auto& s : dataset.samples) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["query"] = s.query;
    rec["instructions"] = nlohmann::ordered_json::array();
    for (const auto& i : s.instructions) {
      nlohmann::ordered_json ij;
      ij["description"] = i.description;
      ij["class_id"] = i.class_id;
      ij["parameters"] = i.parameters;
      rec["instructions"].push_back(std::move(ij));
    }
    out << rec.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset file " + path.string());
  write_dataset(out, dataset);
}

Dataset scale_down(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  const std::size_t k = dataset.meta.instructions_per_sample;
  if (n < 1 || n > k) {
    throw DatasetError("scale_down: n=" + std::to_string(n) +
                       " outside 1.." + std::to_string(k));
  }
  Dataset out = dataset;
  out.meta.instructions_per_sample = n;
  out.meta.seed = seed;
  for (std::size_t idx = 0; idx < out.samples.size(); ++idx) {
    auto& instructions = out.samples[idx].instructions;
    Rng rng(derive_seed(seed, idx));
    // Partial Fisher-Yates over positions, then restore original order.
    std::vector<std::size_t> pos(instructions.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = i + uniform_index(rng, pos.size() - i);
      std::swap(pos[i], pos[j]);
    }
    pos.resize(n);
    std::sort(pos.begin(), pos.end());
    std::vector<Instruction> kept;
    kept.reserve(n);
    for (std::size_t p : pos) kept.push_back(std::move(instructions[p]));
    instructions = std::move(kept);
  }
  return out;
}

Dataset shuffle_instructions(const Dataset& dataset, std::uint64_t seed) {
  Dataset out = dataset;
  out.meta.seed = seed;
  for (std::size_t idx = 0; idx < out.samples.size(); ++idx) {
    Rng rng(derive_seed(seed ^ 0x53485546464C45ULL, idx));
    fisher_yates(out.samples[idx].instructions, rng);
  }
  return out;
}

std::string generated_sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sif-%04zu", index);
  return buf;
}

}  // namespace ifboost
