#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace lingsim {

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

struct QuantizedVector {
  std::vector<std::int8_t> codes;
  float scale = 0.0f;
};

/// Symmetric max-abs int8 quantization: scale = max|v| / 127, codes rounded
/// half away from zero. Throws on non-finite input.
QuantizedVector quantize_vector(std::span<const float> v);

/// Same as quantize_vector, writing into caller storage. Returns the scale.
float quantize_into(std::span<const float> v, std::span<std::int8_t> codes);

// ---------------------------------------------------------------------------
// VectorSet (LDIF)
// ---------------------------------------------------------------------------

/// n_samples x n_layers x dim int8 codes with one float scale per
/// (sample, layer). Holds activation differences or sentence embeddings.
struct VectorSet {
  std::string model_id;
  std::uint64_t dataset_hash = 0;
  std::vector<int> layer_indices;
  std::size_t n_samples = 0;
  std::size_t n_layers = 0;
  std::size_t dim = 0;
  std::vector<std::int8_t> codes;  // sample-major, then layer, then component
  std::vector<float> scales;       // [n_samples x n_layers]
  nlohmann::json attributes = nlohmann::json::object();  // free-form, stored in metadata

  std::span<const std::int8_t> vec(std::size_t sample, std::size_t layer) const {
    return {codes.data() + (sample * n_layers + layer) * dim, dim};
  }
  std::span<std::int8_t> vec(std::size_t sample, std::size_t layer) {
    return {codes.data() + (sample * n_layers + layer) * dim, dim};
  }
  float scale(std::size_t sample, std::size_t layer) const { return scales[sample * n_layers + layer]; }

  /// Throws Error(invalid) if any type invariant is broken.
  void validate() const;

  /// Content digest over shape, layer indices, scales and codes.
  std::uint64_t digest() const;

  bool operator==(const VectorSet&) const = default;
};

/// Quantizes a dense float tensor [n x layers.size() x dim] into a VectorSet.
VectorSet make_vector_set(std::string model_id, std::uint64_t dataset_hash,
                          std::vector<int> layer_indices, std::size_t n_samples, std::size_t dim,
                          std::span<const float> values);

/// Rows `indices` of `vs`, in the given order, tagged with `dataset_hash`.
VectorSet select_samples(const VectorSet& vs, std::span<const std::size_t> indices,
                         std::uint64_t dataset_hash);

// ---------------------------------------------------------------------------
// SimMatrix (LSIM)
// ---------------------------------------------------------------------------

enum class Aggregation : std::uint8_t { layer_mean = 0, concat = 1 };

std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

/// int8 cosine similarity matrix; code = round(cos * 127), -128 = undefined.
struct SimMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool symmetric = false;
  Aggregation aggregation = Aggregation::layer_mean;
  std::uint64_t row_hash = 0;  // sample-order digest of the row side
  std::uint64_t col_hash = 0;
  std::string row_model;
  std::string col_model;
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<std::int8_t> codes;  // row-major

  std::int8_t at(std::size_t i, std::size_t j) const { return codes[i * cols + j]; }
  std::span<const std::int8_t> row(std::size_t i) const { return {codes.data() + i * cols, cols}; }

  void validate() const;

  bool operator==(const SimMatrix&) const = default;
};

// ---------------------------------------------------------------------------
// Container layout
// ---------------------------------------------------------------------------
//
// Both formats are little-endian:
//
//   magic[4] | u16 version | u32 meta_len | meta (UTF-8 JSON) | shape fields |
//   u64 header checksum (FNV-1a of every preceding byte) | zero padding to a
//   multiple of 64 | payload
//
// LDIF shape: u64 n_samples, u32 n_layers, u32 dim.
//      payload: f32 scales [n x L], then i8 codes [n x L x dim].
// LSIM shape: u64 rows, u64 cols, u8 symmetric, u8 reserved (0).
//      payload: i8 codes [rows x cols].

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;

struct LdifHeader {
  std::uint16_t version = kFormatVersion;
  nlohmann::json metadata = nlohmann::json::object();
  std::uint64_t metadata_len = 0;  // as stored; 0 means "length of metadata.dump()"
  std::uint64_t n_samples = 0;
  std::uint32_t n_layers = 0;
  std::uint32_t dim = 0;

  std::uint64_t scale_bytes() const { return n_samples * n_layers * 4ULL; }
  std::uint64_t code_bytes() const { return n_samples * n_layers * static_cast<std::uint64_t>(dim); }
  std::uint64_t payload_offset() const;  // header + checksum + padding
  std::uint64_t file_size() const { return payload_offset() + scale_bytes() + code_bytes(); }
};

struct LsimHeader {
  std::uint16_t version = kFormatVersion;
  nlohmann::json metadata = nlohmann::json::object();
  std::uint64_t metadata_len = 0;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  bool symmetric = false;

  std::uint64_t code_bytes() const { return rows * cols; }
  std::uint64_t payload_offset() const;
  std::uint64_t file_size() const { return payload_offset() + code_bytes(); }
};

/// Positioned reads over bytes. Implementations are safe to call from several
/// threads at once.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::uint64_t size() const = 0;
  /// Throws Error(format) on a short read.
  virtual void read_at(std::uint64_t offset, std::span<std::byte> out) const = 0;
};

std::shared_ptr<const ByteSource> open_file_source(const std::filesystem::path& path);
std::shared_ptr<const ByteSource> memory_source(std::string bytes);

void write_vector_set(const VectorSet& vs, std::ostream& out);
VectorSet read_vector_set(std::istream& in, std::optional<std::uint64_t> expected_hash = std::nullopt);

/// Random access to an LDIF file without loading the payload.
class VectorSetReader {
 public:
  explicit VectorSetReader(std::shared_ptr<const ByteSource> src,
                           std::optional<std::uint64_t> expected_hash = std::nullopt);
  explicit VectorSetReader(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_hash = std::nullopt);

  const LdifHeader& header() const { return header_; }
  /// Shape and metadata with empty payload arrays.
  const VectorSet& info() const { return info_; }

  /// Codes [n_layers x dim] and scales [n_layers] of one sample.
  void read_sample(std::size_t sample, std::span<std::int8_t> codes, std::span<float> scales) const;
  VectorSet read_all() const;

 private:
  std::shared_ptr<const ByteSource> src_;
  LdifHeader header_;
  VectorSet info_;
};

void write_sim_matrix(const SimMatrix& m, std::ostream& out);
SimMatrix read_sim_matrix(std::istream& in);

/// Streams an LSIM row by row. The caller owns the stream for the writer's
/// lifetime; finish() must be called after the last row.
class SimMatrixWriter {
 public:
  /// `shape` carries everything except codes; its codes vector is ignored.
  SimMatrixWriter(std::ostream& out, const SimMatrix& shape);
  void write_row(std::span<const std::int8_t> row);
  void finish();

 private:
  std::ostream& out_;
  std::size_t rows_;
  std::size_t cols_;
  std::size_t written_ = 0;
};

/// Streaming row access to an LSIM file. A symmetric flag is spot-checked
/// against sampled (i, j)/(j, i) pairs when the reader is opened.
class SimMatrixReader {
 public:
  explicit SimMatrixReader(std::shared_ptr<const ByteSource> src);
  explicit SimMatrixReader(const std::filesystem::path& path);

  const LsimHeader& header() const { return header_; }
  /// Shape and metadata with an empty codes vector.
  const SimMatrix& info() const { return info_; }

  void read_row(std::size_t i, std::span<std::int8_t> out) const;
  std::int8_t read_cell(std::size_t i, std::size_t j) const;
  /// Full load; verifies symmetry exhaustively when flagged.
  SimMatrix read_all() const;

 private:
  std::shared_ptr<const ByteSource> src_;
  LsimHeader header_;
  SimMatrix info_;
};

/// First four bytes of a file, for format sniffing.
std::string sniff_magic(const std::filesystem::path& path);

}  // namespace lingsim
