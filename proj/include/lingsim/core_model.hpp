#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lingsim {

struct MinimalPair {
  std::string pair_id;
  std::string language;  // ISO 639-1
  std::string phenomenon_uid;
  std::string sentence_good;
  std::string sentence_bad;

  bool operator==(const MinimalPair&) const = default;
};

/// Three-level classification of a phenomenon. Level 1 is the finest.
struct TaxonomyEntry {
  std::string phenomenon;  // level 1
  std::string term;        // level 2
  std::string field;       // level 3

  bool operator==(const TaxonomyEntry&) const = default;
};

enum class TaxonomyLevel { phenomenon, term, field };

std::string_view to_string(TaxonomyLevel level);
TaxonomyLevel parse_taxonomy_level(std::string_view name);

class Taxonomy {
 public:
  /// Adds a row, or checks it against an existing row for the same uid.
  /// Throws if the uid is already mapped to a different (term, field).
  void add(const std::string& uid, const TaxonomyEntry& entry);

  const TaxonomyEntry& at(const std::string& uid) const;
  bool contains(const std::string& uid) const { return entries_.contains(uid); }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, TaxonomyEntry>& entries() const { return entries_; }

  bool operator==(const Taxonomy&) const = default;

 private:
  std::map<std::string, TaxonomyEntry> entries_;
};

struct Dataset {
  std::string dataset_id;
  std::vector<MinimalPair> pairs;  // canonical sample order
  Taxonomy taxonomy;
  std::uint64_t content_hash = 0;

  std::size_t size() const { return pairs.size(); }
  bool operator==(const Dataset&) const = default;

  /// Per-sample label at the given taxonomy level, in canonical order.
  std::vector<std::string> labels(TaxonomyLevel level) const;
};

/// FNV-1a over the ordered pair ids, each id followed by the 0x1F unit separator.
std::uint64_t content_hash(const std::vector<MinimalPair>& pairs);

enum class Adapter { canonical, blimp, sling, rublimp };

Adapter parse_adapter(std::string_view name);
std::string_view to_string(Adapter adapter);

/// Reads line-delimited JSON records and maps them onto the canonical model.
/// Blank lines are skipped. Errors name the offending line (1-based).
Dataset parse_minimal_pairs(std::istream& in, Adapter adapter, std::string dataset_id = {});

/// Writes the canonical record form, one JSON object per line.
void write_canonical(std::ostream& out, const Dataset& dataset);

/// Five evenly spaced layer indices floor(i * total / 6), i = 1..5.
std::vector<int> sample_layer_indices(int total_layers);

struct SampleSelection {
  std::uint64_t source_hash = 0;
  std::uint64_t seed = 0;
  double fraction = 1.0;
  std::vector<std::size_t> indices;  // strictly increasing

  bool operator==(const SampleSelection&) const = default;

  /// Digest identifying the selected sample order; equals source_hash when the
  /// selection is the identity.
  std::uint64_t digest(std::size_t source_size) const;
};

/// Draws floor(fraction * size) indices without replacement: partial
/// Fisher-Yates over [0, size) driven by SplitMix64(seed), then sorted.
SampleSelection subsample(std::size_t size, std::uint64_t source_hash, double fraction,
                          std::uint64_t seed);
SampleSelection subsample(const Dataset& dataset, double fraction, std::uint64_t seed);

/// k = round(pool / 100), at least 1. Requires pool >= 100.
std::size_t k_from_pool(std::size_t pool_size);

}  // namespace lingsim
