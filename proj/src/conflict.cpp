#include "ifboost/conflict.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "ifboost/judge.hpp"
#include "ifboost/templates.hpp"
#include "ifboost/verifiers.hpp"

namespace ifboost {

std::string pair_key(const std::string& query, const Instruction& a, const Instruction& b) {
  std::string x = a.class_id + '\x1e' + a.parameters.dump();
  std::string y = b.class_id + '\x1e' + b.parameters.dump();
  if (y < x) std::swap(x, y);
  return query + '\x1f' + x + '\x1f' + y;
}

PairExpansion expand_pairwise(const Dataset& dataset) {
  PairExpansion out;
  std::map<std::string, std::size_t> index;
  for (const Sample& s : dataset.samples) {
    const std::size_t k = s.instructions.size();
    if (k < 2) {
      throw DatasetError("sample '" + s.id + "' has " + std::to_string(k) +
                         " instruction(s); pairwise expansion needs at least 2");
    }
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        const std::string key = pair_key(s.query, s.instructions[i], s.instructions[j]);
        const std::string id = s.id + "#" + std::to_string(i) + "-" + std::to_string(j);
        out.derived_ids[key].push_back(id);
        if (index.count(key)) continue;
        index[key] = out.pairs.samples.size();
        out.pairs.samples.push_back({id, s.query, {s.instructions[i], s.instructions[j]}});
        out.keys.push_back(key);
      }
    }
  }
  out.pairs.meta = dataset.meta;
  out.pairs.meta.instructions_per_sample = out.pairs.samples.empty() ? 0 : 2;
  return out;
}

Json to_json(const PairConflict& p) {
  Json j{{"sample_id", p.sample_id},
         {"responses", p.responses},
         {"violations", p.violations},
         {"complete", p.complete}};
  if (!p.error.empty()) j["error"] = p.error;
  return j;
}

long long count_violations(const Sample& pair, const std::vector<std::string>& responses) {
  long long c = 0;
  for (const auto& r : responses) {
    const SegmentedText text = segment(r);
    bool violated = false;
    for (const auto& i : pair.instructions) violated = violated || !verify(i, text).followed;
    c += violated;
  }
  return c;
}

std::vector<PairConflict> conflict_counts(Gateway& gateway, const PairExpansion& pairs,
                                          const ConflictOptions& options, CostTracker* sink) {
  if (options.r < 1) throw Error("conflict counts need r >= 1");
  std::vector<PairConflict> out(pairs.pairs.samples.size());
  // Pairs are independent; spread them over the gateway's in-flight budget.
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t idx = next++; idx < out.size(); idx = next++) {
      const Sample& pair = pairs.pairs.samples[idx];
      PairConflict& pc = out[idx];
      pc.key = pairs.keys[idx];
      pc.sample_id = pair.id;
      pc.responses = options.r;
      try {
        GenerationRequest req;
        req.user = templates::render(templates::kInitialGeneration,
                                     {{"instruction_list", numbered_policies(pair.instructions)},
                                      {"prompt_request", pair.query}});
        req.temperature = options.temperature;
        req.max_tokens = options.max_tokens;
        req.n = static_cast<int>(options.r);
        req.role = "conflict";
        pc.violations = count_violations(pair, gateway.generate(req, sink).texts);
      } catch (const std::exception& e) {
        pc.complete = false;
        pc.error = e.what();
      }
    }
  };
  std::vector<std::jthread> threads;
  const std::size_t workers = std::min(gateway.max_in_flight(), out.size());
  for (std::size_t t = 1; t < workers; ++t) threads.emplace_back(worker);
  worker();
  return out;
}

Json to_json(const ConflictScore& s) {
  return Json{{"sample_id", s.sample_id},
              {"k", s.k},
              {"pair_sum", s.unordered_sum},
              {"score", s.score}};
}

ConflictScore conflict_score(const Sample& sample, const std::map<std::string, long long>& counts) {
  ConflictScore out;
  out.sample_id = sample.id;
  out.k = static_cast<long long>(sample.instructions.size());
  if (out.k == 0) throw Error("conflict_score: sample '" + sample.id + "' has no instructions");
  for (std::size_t i = 0; i < sample.instructions.size(); ++i) {
    for (std::size_t j = i + 1; j < sample.instructions.size(); ++j) {
      auto it = counts.find(pair_key(sample.query, sample.instructions[i], sample.instructions[j]));
      if (it == counts.end()) {
        throw Error("conflict_score: no count for pair (" + std::to_string(i) + ", " +
                    std::to_string(j) + ") of '" + sample.id + "'");
      }
      out.unordered_sum += it->second;
    }
  }
  // Symmetric counts: the ordered sum over i != j is twice the unordered one.
  out.score = 2.0 * static_cast<double>(out.unordered_sum) / static_cast<double>(out.k);
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("pearson: inputs differ in length");
  if (x.size() < 2) throw Error("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw Error("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Json to_json(const BucketRow& b) {
  return Json{{"lo", b.lo}, {"hi", b.hi}, {"mean", b.mean}, {"sem", b.sem}, {"n", b.n}};
}

std::vector<BucketRow> bucket_by_if_rate(const std::vector<double>& if_rates,
                                         const std::vector<double>& scores, double width) {
  if (!(width > 0 && width <= 1)) throw Error("bucket width must be in (0, 1]");
  if (if_rates.size() != scores.size()) throw Error("bucketing: inputs differ in length");
  if (if_rates.empty()) throw Error("bucketing: empty input");
  const auto buckets = static_cast<std::size_t>(std::ceil(1.0 / width - 1e-9));
  std::vector<std::vector<double>> members(buckets);
  for (std::size_t i = 0; i < if_rates.size(); ++i) {
    const double r = if_rates[i];
    if (!(r >= 0 && r <= 1)) throw Error("bucketing: IF rate outside [0, 1]");
    auto b = static_cast<std::size_t>(std::floor(r / width + 1e-9));
    members[std::min(b, buckets - 1)].push_back(scores[i]);
  }
  std::vector<BucketRow> rows;
  for (std::size_t b = 0; b < buckets; ++b) {
    const auto& m = members[b];
    if (m.empty()) continue;
    BucketRow row;
    row.lo = static_cast<double>(b) * width;
    row.hi = b + 1 == buckets ? 1.0 : static_cast<double>(b + 1) * width;
    row.n = m.size();
    for (double v : m) row.mean += v;
    row.mean /= static_cast<double>(row.n);
    if (row.n > 1) {
      double ss = 0;
      for (double v : m) ss += (v - row.mean) * (v - row.mean);
      row.sem = std::sqrt(ss / static_cast<double>(row.n - 1)) / std::sqrt(static_cast<double>(row.n));
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> positional_if_rate(const std::vector<std::vector<Verdict>>& verdicts) {
  if (verdicts.empty()) return {};
  const std::size_t k = verdicts.front().size();
  std::vector<double> out(k, 0.0);
  for (const auto& row : verdicts) {
    if (row.size() != k) throw Error("positional IF rate: ragged instruction counts");
    for (std::size_t p = 0; p < k; ++p) out[p] += row[p].followed;
  }
  for (double& v : out) v /= static_cast<double>(verdicts.size());
  return out;
}

ConflictReport run_conflict(Gateway& gateway, const Dataset& dataset,
                            const ConflictOptions& options,
                            const std::map<std::string, double>& if_rates, double bucket_width) {
  ConflictReport report;
  PairExpansion expansion = expand_pairwise(dataset);
  report.pairs = conflict_counts(gateway, expansion, options);

  std::map<std::string, long long> counts;
  for (const auto& p : report.pairs) {
    if (p.complete) counts[p.key] = p.violations;
  }
  for (const Sample& s : dataset.samples) {
    try {
      report.scores.push_back(conflict_score(s, counts));
    } catch (const Error&) {
      report.skipped.push_back(s.id);
    }
  }
  for (const auto& s : report.scores) report.mean_score += s.score;
  if (!report.scores.empty()) report.mean_score /= static_cast<double>(report.scores.size());

  if (if_rates.empty()) {
    report.correlation_notice = "no IF rates supplied; correlation not computed";
    return report;
  }
  std::vector<double> x, y;
  for (const auto& s : report.scores) {
    auto it = if_rates.find(s.sample_id);
    if (it == if_rates.end()) continue;
    x.push_back(it->second);
    y.push_back(s.score);
  }
  if (x.empty()) {
    report.correlation_notice = "no scored sample has an IF rate";
    return report;
  }
  try {
    report.correlation = pearson(x, y);
  } catch (const Error& e) {
    report.correlation_notice = std::string("correlation declined: ") + e.what();
  }
  report.buckets = bucket_by_if_rate(x, y, bucket_width);
  return report;
}

}  // namespace ifboost
