#include "lingsim/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/core.h>
#include <json.hpp>

#include "lingsim/common.hpp"
#include "lingsim/rng.hpp"

namespace lingsim {

using nlohmann::json;

std::string_view to_string(TaxonomyLevel level) {
  switch (level) {
    case TaxonomyLevel::phenomenon: return "phenomenon";
    case TaxonomyLevel::term: return "term";
    case TaxonomyLevel::field: return "field";
  }
  return "?";
}

TaxonomyLevel parse_taxonomy_level(std::string_view name) {
  if (name == "phenomenon" || name == "1") return TaxonomyLevel::phenomenon;
  if (name == "term" || name == "2") return TaxonomyLevel::term;
  if (name == "field" || name == "3") return TaxonomyLevel::field;
  throw Error(ErrorKind::invalid, fmt::format("unknown taxonomy level '{}'", name));
}

void Taxonomy::add(const std::string& uid, const TaxonomyEntry& entry) {
  if (uid.empty() || entry.phenomenon.empty() || entry.term.empty() || entry.field.empty())
    throw Error(ErrorKind::invalid, fmt::format("taxonomy row for '{}' has an empty level name", uid));
  auto [it, inserted] = entries_.emplace(uid, entry);
  if (!inserted && !(it->second == entry))
    throw Error(ErrorKind::invalid,
                fmt::format("phenomenon '{}' mapped to both ({}, {}) and ({}, {})", uid,
                            it->second.term, it->second.field, entry.term, entry.field));
}

const TaxonomyEntry& Taxonomy::at(const std::string& uid) const {
  auto it = entries_.find(uid);
  if (it == entries_.end())
    throw Error(ErrorKind::invalid, fmt::format("phenomenon '{}' not in taxonomy", uid));
  return it->second;
}

std::vector<std::string> Dataset::labels(TaxonomyLevel level) const {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto& e = taxonomy.at(p.phenomenon_uid);
    switch (level) {
      case TaxonomyLevel::phenomenon: out.push_back(p.phenomenon_uid); break;
      case TaxonomyLevel::term: out.push_back(e.term); break;
      case TaxonomyLevel::field: out.push_back(e.field); break;
    }
  }
  return out;
}

std::uint64_t content_hash(const std::vector<MinimalPair>& pairs) {
  Fnv1a64 h;
  for (const auto& p : pairs) {
    h.update(p.pair_id);
    h.update_byte(0x1F);
  }
  return h.digest();
}

Adapter parse_adapter(std::string_view name) {
  if (name == "canonical") return Adapter::canonical;
  if (name == "blimp") return Adapter::blimp;
  if (name == "sling") return Adapter::sling;
  if (name == "rublimp") return Adapter::rublimp;
  throw Error(ErrorKind::invalid, fmt::format("unknown adapter '{}'", name));
}

std::string_view to_string(Adapter adapter) {
  switch (adapter) {
    case Adapter::canonical: return "canonical";
    case Adapter::blimp: return "blimp";
    case Adapter::sling: return "sling";
    case Adapter::rublimp: return "rublimp";
  }
  return "?";
}

namespace {

// Source field names per corpus. An empty key means "not present in the
// source"; the value is then synthesized (pair id) or taken from the default.
struct FieldMap {
  std::string_view pair_id;
  std::string_view language;
  std::string_view default_language;
  std::string_view uid;
  std::string_view phenomenon;  // optional level-1 display name; defaults to uid
  std::string_view good;
  std::string_view bad;
  std::string_view term;
  std::string_view field;
};

const FieldMap& field_map(Adapter adapter) {
  static const FieldMap canonical{"pair_id", "language", "", "phenomenon_uid", "phenomenon",
                                  "sentence_good", "sentence_bad", "term", "field"};
  static const FieldMap blimp{"pairID", "", "en", "UID", "", "sentence_good", "sentence_bad",
                              "linguistics_term", "field"};
  static const FieldMap sling{"pair_id", "", "zh", "paradigm", "", "sentence_good",
                              "sentence_bad", "phenomenon", "field"};
  static const FieldMap rublimp{"id", "", "ru", "subtype", "", "source_sentence",
                                "target_sentence", "phenomenon", "domain"};
  switch (adapter) {
    case Adapter::canonical: return canonical;
    case Adapter::blimp: return blimp;
    case Adapter::sling: return sling;
    case Adapter::rublimp: return rublimp;
  }
  throw Error(ErrorKind::invalid, "unknown adapter");
}

std::optional<std::string> get_text(const json& rec, std::string_view key) {
  if (key.empty()) return std::nullopt;
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  return std::nullopt;
}

}  // namespace

Dataset parse_minimal_pairs(std::istream& in, Adapter adapter, std::string dataset_id) {
  const FieldMap& fm = field_map(adapter);
  Dataset ds;
  ds.dataset_id = dataset_id.empty() ? "dataset" : std::move(dataset_id);

  std::unordered_set<std::string> seen_ids;
  std::unordered_map<std::string, std::size_t> per_uid_ordinal;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::parse, fmt::format("line {}: malformed record: {}", line_no, e.what()));
    }
    if (!rec.is_object())
      throw Error(ErrorKind::parse, fmt::format("line {}: malformed record: not an object", line_no));

    auto require = [&](std::string_view key) {
      auto v = get_text(rec, key);
      if (!v) throw Error(ErrorKind::parse, fmt::format("line {}: missing required field '{}'", line_no, key));
      return *v;
    };

    MinimalPair p;
    p.phenomenon_uid = require(fm.uid);
    p.sentence_good = require(fm.good);
    p.sentence_bad = require(fm.bad);
    TaxonomyEntry entry;
    entry.term = require(fm.term);
    entry.field = require(fm.field);
    entry.phenomenon = get_text(rec, fm.phenomenon).value_or(p.phenomenon_uid);

    if (adapter == Adapter::canonical) {
      p.pair_id = require(fm.pair_id);
      p.language = require(fm.language);
    } else {
      // Source ids (e.g. BLiMP pairID) restart per paradigm, so qualify by uid.
      const std::size_t ordinal = per_uid_ordinal[p.phenomenon_uid]++;
      auto src_id = get_text(rec, fm.pair_id);
      p.pair_id = p.phenomenon_uid + "/" + (src_id ? *src_id : std::to_string(ordinal));
      p.language = std::string(fm.default_language);
    }

    if (p.sentence_good == p.sentence_bad)
      throw Error(ErrorKind::parse,
                  fmt::format("line {}: sentence_good equals sentence_bad for pair '{}'", line_no, p.pair_id));
    if (!seen_ids.insert(p.pair_id).second)
      throw Error(ErrorKind::parse, fmt::format("line {}: duplicate pair_id '{}'", line_no, p.pair_id));
    try {
      ds.taxonomy.add(p.phenomenon_uid, entry);
    } catch (const Error& e) {
      throw Error(ErrorKind::parse, fmt::format("line {}: {}", line_no, e.what()));
    }
    ds.pairs.push_back(std::move(p));
  }
  ds.content_hash = content_hash(ds.pairs);
  return ds;
}

void write_canonical(std::ostream& out, const Dataset& dataset) {
  for (const auto& p : dataset.pairs) {
    const auto& e = dataset.taxonomy.at(p.phenomenon_uid);
    json rec = json::object();
    rec["pair_id"] = p.pair_id;
    rec["language"] = p.language;
    rec["phenomenon_uid"] = p.phenomenon_uid;
    rec["phenomenon"] = e.phenomenon;
    rec["term"] = e.term;
    rec["field"] = e.field;
    rec["sentence_good"] = p.sentence_good;
    rec["sentence_bad"] = p.sentence_bad;
    out << rec.dump() << '\n';
  }
}

std::vector<int> sample_layer_indices(int total_layers) {
  if (total_layers < 6)
    throw Error(ErrorKind::invalid,
                fmt::format("need at least 6 layers to sample 5 distinct ones, got {}", total_layers));
  std::vector<int> out;
  out.reserve(5);
  for (int i = 1; i <= 5; ++i) out.push_back(static_cast<int>((static_cast<long long>(i) * total_layers) / 6));
  return out;
}

std::uint64_t SampleSelection::digest(std::size_t source_size) const {
  if (indices.size() == source_size) return source_hash;
  Fnv1a64 h;
  h.update_u64(source_hash);
  for (auto i : indices) h.update_u64(i);
  return h.digest();
}

SampleSelection subsample(std::size_t size, std::uint64_t source_hash, double fraction,
                          std::uint64_t seed) {
  if (size == 0) throw Error(ErrorKind::invalid, "cannot subsample an empty dataset");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error(ErrorKind::invalid, fmt::format("fraction {} outside (0, 1]", fraction));
  // The relative nudge absorbs products like 0.29 * 100 = 28.999999999999996.
  const double want = std::floor(fraction * static_cast<double>(size) * (1.0 + 1e-12));
  if (want < 1.0)
    throw Error(ErrorKind::invalid,
                fmt::format("fraction {} of {} samples selects nothing", fraction, size));
  const auto m = std::min(size, static_cast<std::size_t>(want));

  std::vector<std::size_t> pool(size);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.bounded(size - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());

  SampleSelection sel;
  sel.source_hash = source_hash;
  sel.seed = seed;
  sel.fraction = fraction;
  sel.indices = std::move(pool);
  return sel;
}

SampleSelection subsample(const Dataset& dataset, double fraction, std::uint64_t seed) {
  return subsample(dataset.size(), dataset.content_hash, fraction, seed);
}

std::size_t k_from_pool(std::size_t pool_size) {
  if (pool_size < 100)
    throw Error(ErrorKind::invalid,
                fmt::format("pool of {} samples is below the minimum of 100 for k = 1%", pool_size));
  const auto k = static_cast<std::size_t>(round_half_away(static_cast<double>(pool_size) / 100.0));
  return std::max<std::size_t>(k, 1);
}

}  // namespace lingsim
