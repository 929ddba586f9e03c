#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace ifboost {

using Json = nlohmann::json;

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a dataset record cannot be parsed or fails validation.
/// `line()` is 1-based; 0 means the error is not tied to a line.
class DatasetError : public Error {
 public:
  DatasetError(const std::string& what, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Raised when an instruction does not match its class schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// One verifiable constraint: a class id, the parameters of its verifier and
/// the human-readable text shown to the model.
struct Instruction {
  std::string description;
  std::string class_id;
  Json parameters = Json::object();

  bool operator==(const Instruction&) const = default;
};

/// A query together with the ordered instructions attached to it.
struct Sample {
  std::string id;
  std::string query;
  std::vector<Instruction> instructions;

  bool operator==(const Sample&) const = default;
};

struct DatasetMeta {
  std::size_t instructions_per_sample = 0;
  std::uint64_t seed = 0;
  std::string provenance;

  bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  DatasetMeta meta;

  bool operator==(const Dataset&) const = default;
};

/// Outcome of checking one instruction against one response.
struct Verdict {
  std::string class_id;
  bool followed = false;
  std::string detail;

  bool operator==(const Verdict&) const = default;
};

// Record (de)serialization. Field names match the dataset file format.
Json to_json(const Instruction& instruction);
Json to_json(const Sample& sample);
Json to_json(const Verdict& verdict);
Instruction instruction_from_json(const Json& j);
Sample sample_from_json(const Json& j);
Verdict verdict_from_json(const Json& j);

/// Checks the Sample invariants: 1..10 instructions, distinct class ids, and
/// every instruction valid against the registry. Throws SchemaError.
void validate_sample(const Sample& sample);

/// Checks every sample and that all samples carry the same instruction count;
/// sets meta.instructions_per_sample accordingly. Throws DatasetError.
void validate_dataset(Dataset& dataset);

Dataset read_dataset(std::istream& in, const std::string& provenance = {});
Dataset load_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const Dataset& dataset);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Keeps exactly `n` instructions per sample, chosen uniformly at random and
/// independently per sample; survivors keep their relative order.
Dataset scale_down(const Dataset& dataset, std::size_t n, std::uint64_t seed);

/// Applies an independent uniform permutation to each sample's instructions.
Dataset shuffle_instructions(const Dataset& dataset, std::uint64_t seed);

/// "sif-0007" style identifiers for generated samples.
std::string generated_sample_id(std::size_t index);

}  // namespace ifboost
