#include "lingsim/tensorstore.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>

#include <fmt/core.h>

#include "lingsim/common.hpp"
#include "lingsim/rng.hpp"

namespace lingsim {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Quantization

float quantize_into(std::span<const float> v, std::span<std::int8_t> codes) {
  if (codes.size() != v.size()) throw Error(ErrorKind::shape, "quantize: output size differs from input");
  float max_abs = 0.0f;
  for (float x : v) {
    if (!std::isfinite(x)) throw Error(ErrorKind::invalid, "quantize: non-finite component");
    max_abs = std::max(max_abs, std::fabs(x));
  }
  if (max_abs == 0.0f) {
    std::fill(codes.begin(), codes.end(), std::int8_t{0});
    return 0.0f;
  }
  const float scale = max_abs / 127.0f;
  const double inv = 1.0 / static_cast<double>(scale);
  for (std::size_t i = 0; i < v.size(); ++i) {
    double q = round_half_away(static_cast<double>(v[i]) * inv);
    q = std::clamp(q, -127.0, 127.0);
    codes[i] = static_cast<std::int8_t>(q);
  }
  // A subnormal max|v| can make every code round to zero; keep the
  // scale == 0 <=> all-zero invariant.
  if (std::all_of(codes.begin(), codes.end(), [](std::int8_t c) { return c == 0; })) return 0.0f;
  return scale;
}

QuantizedVector quantize_vector(std::span<const float> v) {
  QuantizedVector q;
  q.codes.resize(v.size());
  q.scale = quantize_into(v, q.codes);
  return q;
}

// ---------------------------------------------------------------------------
// VectorSet

void VectorSet::validate() const {
  if (n_samples == 0 || n_layers == 0 || dim == 0)
    throw Error(ErrorKind::invalid, "vector set: shape fields must be positive");
  if (layer_indices.size() != n_layers)
    throw Error(ErrorKind::invalid,
                fmt::format("vector set: {} layer indices for {} layers", layer_indices.size(), n_layers));
  if (codes.size() != n_samples * n_layers * dim)
    throw Error(ErrorKind::invalid, "vector set: code array size does not match shape");
  if (scales.size() != n_samples * n_layers)
    throw Error(ErrorKind::invalid, "vector set: scale array size does not match shape");
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      const float sc = scale(s, l);
      if (!std::isfinite(sc) || sc < 0.0f)
        throw Error(ErrorKind::invalid, fmt::format("vector set: bad scale at sample {}, layer {}", s, l));
      bool all_zero = true;
      for (auto c : vec(s, l)) {
        if (c == kUndefinedCode)
          throw Error(ErrorKind::invalid, fmt::format("vector set: code -128 at sample {}, layer {}", s, l));
        all_zero = all_zero && c == 0;
      }
      if ((sc == 0.0f) != all_zero)
        throw Error(ErrorKind::invalid,
                    fmt::format("vector set: scale/zero-vector disagreement at sample {}, layer {}", s, l));
    }
  }
}

std::uint64_t VectorSet::digest() const {
  Fnv1a64 h;
  h.update_u64(n_samples);
  h.update_u64(n_layers);
  h.update_u64(dim);
  for (int li : layer_indices) h.update_u64(static_cast<std::uint64_t>(li));
  h.update(std::as_bytes(std::span(scales)));
  h.update(std::as_bytes(std::span(codes)));
  return h.digest();
}

VectorSet make_vector_set(std::string model_id, std::uint64_t dataset_hash,
                          std::vector<int> layer_indices, std::size_t n_samples, std::size_t dim,
                          std::span<const float> values) {
  VectorSet vs;
  vs.model_id = std::move(model_id);
  vs.dataset_hash = dataset_hash;
  vs.n_layers = layer_indices.size();
  vs.layer_indices = std::move(layer_indices);
  vs.n_samples = n_samples;
  vs.dim = dim;
  if (values.size() != n_samples * vs.n_layers * dim)
    throw Error(ErrorKind::shape, "make_vector_set: value count does not match shape");
  vs.codes.resize(values.size());
  vs.scales.resize(n_samples * vs.n_layers);
  for (std::size_t s = 0; s < n_samples; ++s)
    for (std::size_t l = 0; l < vs.n_layers; ++l)
      vs.scales[s * vs.n_layers + l] =
          quantize_into(values.subspan((s * vs.n_layers + l) * dim, dim), vs.vec(s, l));
  return vs;
}

VectorSet select_samples(const VectorSet& vs, std::span<const std::size_t> indices,
                         std::uint64_t dataset_hash) {
  VectorSet out;
  out.model_id = vs.model_id;
  out.dataset_hash = dataset_hash;
  out.layer_indices = vs.layer_indices;
  out.n_samples = indices.size();
  out.n_layers = vs.n_layers;
  out.dim = vs.dim;
  out.attributes = vs.attributes;
  const std::size_t stride = vs.n_layers * vs.dim;
  out.codes.resize(indices.size() * stride);
  out.scales.resize(indices.size() * vs.n_layers);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= vs.n_samples) throw Error(ErrorKind::invalid, fmt::format("sample index {} out of range", i));
    std::copy_n(vs.codes.begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                out.codes.begin() + static_cast<std::ptrdiff_t>(k * stride));
    std::copy_n(vs.scales.begin() + static_cast<std::ptrdiff_t>(i * vs.n_layers), vs.n_layers,
                out.scales.begin() + static_cast<std::ptrdiff_t>(k * vs.n_layers));
  }
  return out;
}

// ---------------------------------------------------------------------------
// SimMatrix

std::string_view to_string(Aggregation a) {
  return a == Aggregation::layer_mean ? "layer_mean" : "concat";
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "layer_mean") return Aggregation::layer_mean;
  if (name == "concat") return Aggregation::concat;
  throw Error(ErrorKind::invalid, fmt::format("unknown aggregation '{}'", name));
}

void SimMatrix::validate() const {
  if (rows == 0 || cols == 0) throw Error(ErrorKind::invalid, "sim matrix: empty shape");
  if (codes.size() != rows * cols) throw Error(ErrorKind::invalid, "sim matrix: code count does not match shape");
  if (!symmetric) return;
  if (rows != cols)
    throw Error(ErrorKind::invalid, fmt::format("sim matrix: symmetric flag on a {}x{} matrix", rows, cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto d = at(i, i);
    if (d != 127 && d != kUndefinedCode)
      throw Error(ErrorKind::invalid, fmt::format("sim matrix: diagonal entry {} is {}", i, d));
    for (std::size_t j = i + 1; j < cols; ++j)
      if (at(i, j) != at(j, i))
        throw Error(ErrorKind::invalid, fmt::format("sim matrix: asymmetric at ({}, {})", i, j));
  }
}

// ---------------------------------------------------------------------------
// Byte sources

namespace {

class FileSource final : public ByteSource {
 public:
  explicit FileSource(const std::filesystem::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0)
      throw Error(ErrorKind::io, fmt::format("cannot open '{}': {}", path.string(), std::strerror(errno)));
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
      ::close(fd_);
      throw Error(ErrorKind::io, fmt::format("cannot stat '{}'", path.string()));
    }
    size_ = static_cast<std::uint64_t>(st.st_size);
  }
  ~FileSource() override { ::close(fd_); }
  FileSource(const FileSource&) = delete;
  FileSource& operator=(const FileSource&) = delete;

  std::uint64_t size() const override { return size_; }

  void read_at(std::uint64_t offset, std::span<std::byte> out) const override {
    std::size_t done = 0;
    while (done < out.size()) {
      const auto n = ::pread(fd_, out.data() + done, out.size() - done, static_cast<off_t>(offset + done));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorKind::io, fmt::format("read error on '{}'", path_.string()));
      }
      if (n == 0) throw Error(ErrorKind::format, fmt::format("'{}': truncated", path_.string()));
      done += static_cast<std::size_t>(n);
    }
  }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t size_ = 0;
};

class MemorySource final : public ByteSource {
 public:
  explicit MemorySource(std::string bytes) : bytes_(std::move(bytes)) {}
  std::uint64_t size() const override { return bytes_.size(); }
  void read_at(std::uint64_t offset, std::span<std::byte> out) const override {
    if (offset > bytes_.size() || out.size() > bytes_.size() - offset)
      throw Error(ErrorKind::format, "truncated");
    std::memcpy(out.data(), bytes_.data() + offset, out.size());
  }

 private:
  std::string bytes_;
};

// Little-endian encoders.
void put_u8(std::string& b, std::uint8_t v) { b.push_back(static_cast<char>(v)); }
void put_u16(std::string& b, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) put_u8(b, static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) put_u8(b, static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) put_u8(b, static_cast<std::uint8_t>(v >> (8 * i)));
}

class Cursor {
 public:
  Cursor(const ByteSource& src, std::string_view what) : src_(src), what_(what) {}

  void raw(std::span<std::byte> out) {
    if (pos_ > src_.size() || out.size() > src_.size() - pos_)
      throw Error(ErrorKind::format, fmt::format("{}: truncated header", what_));
    src_.read_at(pos_, out);
    hash_.update(out);
    pos_ += out.size();
  }
  std::uint64_t uint(int bytes) {
    std::byte buf[8];
    raw(std::span(buf, static_cast<std::size_t>(bytes)));
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(buf[i]);
    return v;
  }
  std::string text(std::size_t n) {
    std::string s(n, '\0');
    raw(std::as_writable_bytes(std::span(s.data(), s.size())));
    return s;
  }
  std::uint64_t hash() const { return hash_.digest(); }
  std::uint64_t pos() const { return pos_; }
  std::string_view what() const { return what_; }

 private:
  const ByteSource& src_;
  std::string_view what_;
  std::uint64_t pos_ = 0;
  Fnv1a64 hash_;
};

constexpr std::uint64_t kMaxMetadata = 64ULL << 20;

std::uint64_t padded(std::uint64_t unpadded) {
  return (unpadded + kPayloadAlignment - 1) / kPayloadAlignment * kPayloadAlignment;
}

// Prefix shared by both formats: magic, version, metadata.
json read_prefix(Cursor& c, std::string_view magic, std::uint16_t& version, std::uint64_t& meta_len) {
  if (c.text(4) != magic) throw Error(ErrorKind::format, fmt::format("{}: bad magic", c.what()));
  version = static_cast<std::uint16_t>(c.uint(2));
  if (version != kFormatVersion)
    throw Error(ErrorKind::format, fmt::format("{}: unsupported version {}", c.what(), version));
  meta_len = c.uint(4);
  if (meta_len > kMaxMetadata)
    throw Error(ErrorKind::format, fmt::format("{}: metadata length {} out of range", c.what(), meta_len));
  const auto meta = c.text(meta_len);
  try {
    auto j = json::parse(meta);
    if (!j.is_object()) throw Error(ErrorKind::format, fmt::format("{}: metadata is not an object", c.what()));
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, fmt::format("{}: corrupt metadata: {}", c.what(), e.what()));
  }
}

// Reads the checksum and padding, returns the payload offset.
std::uint64_t read_suffix(Cursor& c, const ByteSource& src, std::uint64_t payload_bytes) {
  const auto expect = c.hash();
  std::byte buf[8];
  src.read_at(c.pos(), buf);
  std::uint64_t stored = 0;
  for (int i = 7; i >= 0; --i) stored = (stored << 8) | static_cast<std::uint8_t>(buf[i]);
  if (stored != expect) throw Error(ErrorKind::format, fmt::format("{}: header checksum mismatch", c.what()));
  const auto after = c.pos() + 8;
  const auto offset = padded(after);
  if (src.size() < offset) throw Error(ErrorKind::format, fmt::format("{}: truncated header", c.what()));
  std::string pad(offset - after, '\0');
  src.read_at(after, std::as_writable_bytes(std::span(pad.data(), pad.size())));
  if (pad.find_first_not_of('\0') != std::string::npos)
    throw Error(ErrorKind::format, fmt::format("{}: nonzero header padding", c.what()));
  if (src.size() != offset + payload_bytes)
    throw Error(ErrorKind::format,
                fmt::format("{}: payload is {} bytes, header implies {}", c.what(),
                            src.size() >= offset ? src.size() - offset : 0, payload_bytes));
  return offset;
}

void finish_header(std::string& b) {
  put_u64(b, fnv1a64(std::as_bytes(std::span(b.data(), b.size()))));
  b.resize(padded(b.size()), '\0');
}

std::uint64_t header_offset(std::size_t meta_len, std::size_t shape_bytes) {
  return padded(4 + 2 + 4 + meta_len + shape_bytes + 8);
}

json ldif_metadata(const VectorSet& vs) {
  json m = json::object();
  m["model_id"] = vs.model_id;
  m["dataset_hash"] = hex16(vs.dataset_hash);
  m["layer_indices"] = vs.layer_indices;
  m["quantization"] = "int8 symmetric max-abs per (sample, layer), round half away from zero";
  m["attributes"] = vs.attributes;
  return m;
}

json lsim_metadata(const SimMatrix& sm) {
  json m = json::object();
  m["aggregation"] = std::string(to_string(sm.aggregation));
  m["row_dataset_hash"] = hex16(sm.row_hash);
  m["col_dataset_hash"] = hex16(sm.col_hash);
  m["row_model"] = sm.row_model;
  m["col_model"] = sm.col_model;
  m["encoding"] = "code = round(cos * 127), -128 = undefined";
  m["provenance"] = sm.provenance;
  return m;
}

std::string encode_ldif_header(const VectorSet& vs) {
  std::string b = "LDIF";
  put_u16(b, kFormatVersion);
  const auto meta = ldif_metadata(vs).dump();
  put_u32(b, static_cast<std::uint32_t>(meta.size()));
  b += meta;
  put_u64(b, vs.n_samples);
  put_u32(b, static_cast<std::uint32_t>(vs.n_layers));
  put_u32(b, static_cast<std::uint32_t>(vs.dim));
  finish_header(b);
  return b;
}

std::string encode_lsim_header(const SimMatrix& sm) {
  std::string b = "LSIM";
  put_u16(b, kFormatVersion);
  const auto meta = lsim_metadata(sm).dump();
  put_u32(b, static_cast<std::uint32_t>(meta.size()));
  b += meta;
  put_u64(b, sm.rows);
  put_u64(b, sm.cols);
  put_u8(b, sm.symmetric ? 1 : 0);
  put_u8(b, 0);
  finish_header(b);
  return b;
}

template <class T>
T meta_get(const json& m, const char* key, std::string_view what) {
  try {
    return m.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::format, fmt::format("{}: metadata field '{}' missing or mistyped", what, key));
  }
}

std::string slurp(std::istream& in) {
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void check_sample(const VectorSet& info, std::size_t sample, std::span<const std::int8_t> codes,
                  std::span<const float> scales) {
  for (std::size_t l = 0; l < info.n_layers; ++l) {
    const float sc = scales[l];
    bool all_zero = true;
    for (std::size_t k = 0; k < info.dim; ++k) {
      const auto c = codes[l * info.dim + k];
      if (c == kUndefinedCode)
        throw Error(ErrorKind::format, fmt::format("LDIF: code -128 in sample {}", sample));
      all_zero = all_zero && c == 0;
    }
    if (!std::isfinite(sc) || sc < 0.0f || (sc == 0.0f) != all_zero)
      throw Error(ErrorKind::format, fmt::format("LDIF: inconsistent scale for sample {}, layer {}", sample, l));
  }
}

}  // namespace

std::uint64_t LdifHeader::payload_offset() const {
  return header_offset(metadata_len ? metadata_len : metadata.dump().size(), 16);
}

std::uint64_t LsimHeader::payload_offset() const {
  return header_offset(metadata_len ? metadata_len : metadata.dump().size(), 18);
}

std::shared_ptr<const ByteSource> open_file_source(const std::filesystem::path& path) {
  return std::make_shared<FileSource>(path);
}

std::shared_ptr<const ByteSource> memory_source(std::string bytes) {
  return std::make_shared<MemorySource>(std::move(bytes));
}

std::string sniff_magic(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot open '{}'", path.string()));
  std::string m(4, '\0');
  in.read(m.data(), 4);
  m.resize(static_cast<std::size_t>(in.gcount()));
  return m;
}

// ---------------------------------------------------------------------------
// LDIF

void write_vector_set(const VectorSet& vs, std::ostream& out) {
  vs.validate();
  const auto header = encode_ldif_header(vs);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  // The scale block is written as raw little-endian f32; this build targets
  // little-endian hosts only.
  static_assert(std::endian::native == std::endian::little);
  out.write(reinterpret_cast<const char*>(vs.scales.data()),
            static_cast<std::streamsize>(vs.scales.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(vs.codes.data()), static_cast<std::streamsize>(vs.codes.size()));
  if (!out) throw Error(ErrorKind::io, "LDIF: write failed");
}

VectorSetReader::VectorSetReader(const std::filesystem::path& path, std::optional<std::uint64_t> expected_hash)
    : VectorSetReader(open_file_source(path), expected_hash) {}

VectorSetReader::VectorSetReader(std::shared_ptr<const ByteSource> src, std::optional<std::uint64_t> expected_hash)
    : src_(std::move(src)) {
  Cursor c(*src_, "LDIF");
  header_.metadata = read_prefix(c, "LDIF", header_.version, header_.metadata_len);
  header_.n_samples = c.uint(8);
  header_.n_layers = static_cast<std::uint32_t>(c.uint(4));
  header_.dim = static_cast<std::uint32_t>(c.uint(4));
  if (header_.n_samples == 0 || header_.n_layers == 0 || header_.dim == 0)
    throw Error(ErrorKind::format, "LDIF: zero shape field");
  // Guard the size arithmetic against corrupted shape fields.
  const unsigned __int128 payload = static_cast<unsigned __int128>(header_.n_samples) * header_.n_layers *
                                    (4ULL + header_.dim);
  if (payload > src_->size()) throw Error(ErrorKind::format, "LDIF: truncated payload");
  read_suffix(c, *src_, header_.scale_bytes() + header_.code_bytes());

  const auto& m = header_.metadata;
  info_.model_id = meta_get<std::string>(m, "model_id", "LDIF");
  info_.dataset_hash = parse_hex16(meta_get<std::string>(m, "dataset_hash", "LDIF"));
  info_.layer_indices = meta_get<std::vector<int>>(m, "layer_indices", "LDIF");
  if (m.contains("attributes")) info_.attributes = m["attributes"];
  info_.n_samples = header_.n_samples;
  info_.n_layers = header_.n_layers;
  info_.dim = header_.dim;
  if (info_.layer_indices.size() != info_.n_layers)
    throw Error(ErrorKind::format, "LDIF: layer index count disagrees with n_layers");
  if (expected_hash && *expected_hash != info_.dataset_hash)
    throw Error(ErrorKind::mismatch, fmt::format("LDIF: dataset hash {} does not match expected {}",
                                                 hex16(info_.dataset_hash), hex16(*expected_hash)));
}

void VectorSetReader::read_sample(std::size_t sample, std::span<std::int8_t> codes, std::span<float> scales) const {
  if (sample >= info_.n_samples) throw Error(ErrorKind::invalid, fmt::format("sample {} out of range", sample));
  const std::size_t L = info_.n_layers, d = info_.dim;
  if (codes.size() != L * d || scales.size() != L) throw Error(ErrorKind::shape, "read_sample: buffer size");
  const auto base = header_.payload_offset();
  src_->read_at(base + sample * L * 4, std::as_writable_bytes(scales));
  src_->read_at(base + header_.scale_bytes() + sample * L * d, std::as_writable_bytes(codes));
  check_sample(info_, sample, codes, scales);
}

VectorSet VectorSetReader::read_all() const {
  VectorSet vs = info_;
  vs.scales.resize(header_.n_samples * header_.n_layers);
  vs.codes.resize(header_.code_bytes());
  const auto base = header_.payload_offset();
  src_->read_at(base, std::as_writable_bytes(std::span(vs.scales)));
  src_->read_at(base + header_.scale_bytes(), std::as_writable_bytes(std::span(vs.codes)));
  try {
    vs.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::format, fmt::format("LDIF: {}", e.what()));
  }
  return vs;
}

VectorSet read_vector_set(std::istream& in, std::optional<std::uint64_t> expected_hash) {
  return VectorSetReader(memory_source(slurp(in)), expected_hash).read_all();
}

// ---------------------------------------------------------------------------
// LSIM

SimMatrixWriter::SimMatrixWriter(std::ostream& out, const SimMatrix& shape)
    : out_(out), rows_(shape.rows), cols_(shape.cols) {
  if (rows_ == 0 || cols_ == 0) throw Error(ErrorKind::invalid, "LSIM: empty shape");
  if (shape.symmetric && rows_ != cols_)
    throw Error(ErrorKind::invalid, fmt::format("LSIM: symmetric flag on a {}x{} matrix", rows_, cols_));
  const auto header = encode_lsim_header(shape);
  out_.write(header.data(), static_cast<std::streamsize>(header.size()));
}

void SimMatrixWriter::write_row(std::span<const std::int8_t> row) {
  if (row.size() != cols_) throw Error(ErrorKind::shape, "LSIM: row length differs from cols");
  if (written_ == rows_) throw Error(ErrorKind::invalid, "LSIM: too many rows");
  out_.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  ++written_;
}

void SimMatrixWriter::finish() {
  if (written_ != rows_)
    throw Error(ErrorKind::invalid, fmt::format("LSIM: wrote {} of {} rows", written_, rows_));
  out_.flush();
  if (!out_) throw Error(ErrorKind::io, "LSIM: write failed");
}

void write_sim_matrix(const SimMatrix& m, std::ostream& out) {
  m.validate();
  SimMatrixWriter w(out, m);
  for (std::size_t i = 0; i < m.rows; ++i) w.write_row(m.row(i));
  w.finish();
}

SimMatrixReader::SimMatrixReader(const std::filesystem::path& path) : SimMatrixReader(open_file_source(path)) {}

SimMatrixReader::SimMatrixReader(std::shared_ptr<const ByteSource> src) : src_(std::move(src)) {
  Cursor c(*src_, "LSIM");
  header_.metadata = read_prefix(c, "LSIM", header_.version, header_.metadata_len);
  header_.rows = c.uint(8);
  header_.cols = c.uint(8);
  const auto sym = c.uint(1);
  const auto reserved = c.uint(1);
  if (sym > 1 || reserved != 0) throw Error(ErrorKind::format, "LSIM: bad flag byte");
  header_.symmetric = sym == 1;
  if (header_.rows == 0 || header_.cols == 0) throw Error(ErrorKind::format, "LSIM: zero shape field");
  const unsigned __int128 payload = static_cast<unsigned __int128>(header_.rows) * header_.cols;
  if (payload > src_->size()) throw Error(ErrorKind::format, "LSIM: truncated payload");
  read_suffix(c, *src_, header_.code_bytes());
  if (header_.symmetric && header_.rows != header_.cols)
    throw Error(ErrorKind::format, "LSIM: symmetric flag on a rectangular matrix");

  const auto& m = header_.metadata;
  info_.rows = header_.rows;
  info_.cols = header_.cols;
  info_.symmetric = header_.symmetric;
  info_.aggregation = parse_aggregation(meta_get<std::string>(m, "aggregation", "LSIM"));
  info_.row_hash = parse_hex16(meta_get<std::string>(m, "row_dataset_hash", "LSIM"));
  info_.col_hash = parse_hex16(meta_get<std::string>(m, "col_dataset_hash", "LSIM"));
  info_.row_model = meta_get<std::string>(m, "row_model", "LSIM");
  info_.col_model = meta_get<std::string>(m, "col_model", "LSIM");
  if (m.contains("provenance")) info_.provenance = m["provenance"];

  if (header_.symmetric) {
    const std::size_t n = header_.rows;
    SplitMix64 rng(c.hash());
    const std::size_t checks = std::min<std::size_t>(64, n * n);
    for (std::size_t t = 0; t < checks; ++t) {
      const auto i = static_cast<std::size_t>(rng.bounded(n));
      const auto j = static_cast<std::size_t>(rng.bounded(n));
      if (read_cell(i, j) != read_cell(j, i))
        throw Error(ErrorKind::format, fmt::format("LSIM: symmetric flag contradicted at ({}, {})", i, j));
    }
  }
}

void SimMatrixReader::read_row(std::size_t i, std::span<std::int8_t> out) const {
  if (i >= header_.rows) throw Error(ErrorKind::invalid, fmt::format("row {} out of range", i));
  if (out.size() != header_.cols) throw Error(ErrorKind::shape, "read_row: buffer size");
  src_->read_at(header_.payload_offset() + i * header_.cols, std::as_writable_bytes(out));
}

std::int8_t SimMatrixReader::read_cell(std::size_t i, std::size_t j) const {
  std::int8_t v = 0;
  src_->read_at(header_.payload_offset() + i * header_.cols + j, std::as_writable_bytes(std::span(&v, 1)));
  return v;
}

SimMatrix SimMatrixReader::read_all() const {
  SimMatrix sm = info_;
  sm.codes.resize(header_.code_bytes());
  src_->read_at(header_.payload_offset(), std::as_writable_bytes(std::span(sm.codes)));
  try {
    sm.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::format, fmt::format("LSIM: {}", e.what()));
  }
  return sm;
}

SimMatrix read_sim_matrix(std::istream& in) { return SimMatrixReader(memory_source(slurp(in))).read_all(); }

}  // namespace lingsim
