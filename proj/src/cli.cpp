#include "lingsim/cli.hpp"

#include <unistd.h>

#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/core.h>

#include "lingsim/common.hpp"

namespace lingsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------

namespace {

void check_same_layout(const SimMatrix& first, const SimMatrix& m, std::size_t index) {
  if (m.rows != first.rows || m.cols != first.cols || m.symmetric != first.symmetric)
    throw Error(ErrorKind::shape, fmt::format("average-sims: input {} is {}x{}, expected {}x{}", index, m.rows,
                                              m.cols, first.rows, first.cols));
  if (m.row_hash != first.row_hash || m.col_hash != first.col_hash)
    throw Error(ErrorKind::mismatch, fmt::format("average-sims: input {} has sample hashes {}/{}, expected {}/{}",
                                                 index, hex16(m.row_hash), hex16(m.col_hash),
                                                 hex16(first.row_hash), hex16(first.col_hash)));
  if (m.aggregation != first.aggregation)
    throw Error(ErrorKind::mismatch, fmt::format("average-sims: input {} uses {}, expected {}", index,
                                                 to_string(m.aggregation), to_string(first.aggregation)));
}

SimMatrix averaged_shape(std::span<const SimMatrix> infos) {
  if (infos.empty()) throw Error(ErrorKind::invalid, "average-sims: no inputs");
  for (std::size_t k = 0; k < infos.size(); ++k) check_same_layout(infos.front(), infos[k], k);
  SimMatrix out;
  const auto& f = infos.front();
  out.rows = f.rows;
  out.cols = f.cols;
  out.symmetric = f.symmetric;
  out.aggregation = f.aggregation;
  out.row_hash = f.row_hash;
  out.col_hash = f.col_hash;
  out.row_model = "average";
  out.col_model = "average";
  json models = json::array();
  for (const auto& m : infos) models.push_back(m.row_model);
  out.provenance["averaged_models"] = models;
  for (const char* key : {"row_selection", "col_selection"})
    if (f.provenance.contains(key)) out.provenance[key] = f.provenance[key];
  return out;
}

void average_row(std::span<const std::span<const std::int8_t>> rows, std::span<std::int8_t> out) {
  const double m = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    std::int64_t sum = 0;
    bool undefined = false;
    for (const auto& r : rows) {
      if (r[j] == kUndefinedCode) {
        undefined = true;
        break;
      }
      sum += r[j];
    }
    // mean of code/127 requantized is round(sum / m)
    out[j] = undefined ? kUndefinedCode : static_cast<std::int8_t>(round_half_away(static_cast<double>(sum) / m));
  }
}

}  // namespace

SimMatrix average_sims(std::span<const SimMatrix> inputs) {
  SimMatrix out = averaged_shape(inputs);
  out.codes.resize(out.rows * out.cols);
  std::vector<std::span<const std::int8_t>> rows(inputs.size());
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t k = 0; k < inputs.size(); ++k) rows[k] = inputs[k].row(i);
    average_row(rows, {out.codes.data() + i * out.cols, out.cols});
  }
  return out;
}

void average_sims(std::span<const fs::path> inputs, std::ostream& out) {
  std::vector<SimMatrixReader> readers;
  std::vector<SimMatrix> infos;
  for (const auto& p : inputs) {
    readers.emplace_back(p);
    infos.push_back(readers.back().info());
  }
  const SimMatrix shape = averaged_shape(infos);
  SimMatrixWriter writer(out, shape);
  std::vector<std::vector<std::int8_t>> bufs(readers.size(), std::vector<std::int8_t>(shape.cols));
  std::vector<std::span<const std::int8_t>> rows(readers.size());
  std::vector<std::int8_t> row(shape.cols);
  for (std::size_t i = 0; i < shape.rows; ++i) {
    for (std::size_t k = 0; k < readers.size(); ++k) {
      readers[k].read_row(i, bufs[k]);
      rows[k] = bufs[k];
    }
    average_row(rows, row);
    writer.write_row(row);
  }
  writer.finish();
}

// ---------------------------------------------------------------------------

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  q += '"';
  return q;
}

std::string csv_number(double v) {
  if (std::isnan(v)) return {};
  if (v == 0.0) return "0";  // no "-0"
  return fmt::format("{}", v);
}

void write_csv_row(std::ostream& out, std::span<const std::string> fields) {
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) out << ',';
    out << csv_field(fields[k]);
  }
  out << '\n';
}

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    any = false;
  };
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"': quoted = true; any = true; break;
      case ',': end_field(); any = true; break;
      case '\r': break;
      case '\n': end_row(); break;
      default: field += c; any = true;
    }
  }
  if (quoted) throw Error(ErrorKind::parse, "csv: unterminated quoted field");
  if (any) end_row();
  return rows;
}

// ---------------------------------------------------------------------------

void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path() && !fs::exists(path.parent_path()))
    throw Error(ErrorKind::io, fmt::format("directory does not exist: {}", path.parent_path().string()));
  fs::path tmp = path;
  tmp += fmt::format(".tmp.{}", ::getpid());
  try {
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw Error(ErrorKind::io, fmt::format("cannot write {}", tmp.string()));
      body(f);
      f.flush();
      if (!f) throw Error(ErrorKind::io, fmt::format("write failed: {}", tmp.string()));
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

std::uint64_t file_digest(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, fmt::format("cannot open {}", path.string()));
  Fnv1a64 h;
  std::array<char, 1 << 16> buf;
  while (f) {
    f.read(buf.data(), buf.size());
    h.update(std::as_bytes(std::span(buf.data(), static_cast<std::size_t>(f.gcount()))));
  }
  return h.digest();
}

fs::path manifest_path(const fs::path& output) {
  fs::path p = output;
  p += ".manifest.json";
  return p;
}

Manifest::Manifest(std::string command, std::span<const std::string> argv)
    : command_(std::move(command)), argv_(argv.begin(), argv.end()), start_(std::chrono::steady_clock::now()) {}

namespace {

json file_entry(std::string_view role, const fs::path& path) {
  return {{"role", role},
          {"path", path.string()},
          {"bytes", fs::file_size(path)},
          {"digest", hex16(file_digest(path))}};
}

}  // namespace

void Manifest::add_input(std::string_view role, const fs::path& path) { inputs_.push_back(file_entry(role, path)); }

void Manifest::add_output(std::string_view role, const fs::path& path) {
  outputs_.push_back(file_entry(role, path));
}

void Manifest::write(const fs::path& primary) const {
  const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start_;
  json j = {{"tool", kToolName},     {"version", kToolVersion},   {"command", command_},
            {"argv", argv_},         {"inputs", inputs_},         {"outputs", outputs_},
            {"seeds", seeds_},       {"parameters", parameters_}, {"results", results_},
            {"wall_time_s", wall.count()}};
  write_atomic(manifest_path(primary), [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

// ---------------------------------------------------------------------------

json selection_to_json(const SampleSelection& s) {
  return {{"source_hash", hex16(s.source_hash)}, {"seed", s.seed}, {"fraction", s.fraction}, {"indices", s.indices}};
}

SampleSelection selection_from_json(const json& j) {
  try {
    SampleSelection s;
    s.source_hash = parse_hex16(j.at("source_hash").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.fraction = j.at("fraction").get<double>();
    s.indices = j.at("indices").get<std::vector<std::size_t>>();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, fmt::format("malformed sample selection: {}", e.what()));
  }
}

std::vector<std::size_t> resolve_samples(std::uint64_t side_hash, std::size_t side_size, const json* selection,
                                         const Dataset& dataset, std::string_view what) {
  std::vector<std::size_t> idx;
  if (side_hash == dataset.content_hash) {
    idx.resize(dataset.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  } else if (selection != nullptr) {
    const auto s = selection_from_json(*selection);
    if (s.source_hash != dataset.content_hash || s.digest(dataset.size()) != side_hash)
      throw Error(ErrorKind::mismatch,
                  fmt::format("{}: sample hash {} was not drawn from dataset {}", what, hex16(side_hash),
                              hex16(dataset.content_hash)));
    for (auto i : s.indices)
      if (i >= dataset.size()) throw Error(ErrorKind::shape, fmt::format("{}: selection index {} out of range", what, i));
    idx = s.indices;
  } else {
    throw Error(ErrorKind::mismatch, fmt::format("{}: sample hash {} does not match dataset hash {}", what,
                                                 hex16(side_hash), hex16(dataset.content_hash)));
  }
  if (idx.size() != side_size)
    throw Error(ErrorKind::shape, fmt::format("{}: {} samples for {} labels", what, side_size, idx.size()));
  return idx;
}

Dataset load_dataset(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, fmt::format("cannot open {}", path.string()));
  return parse_minimal_pairs(f, Adapter::canonical, path.stem().string());
}

int default_threads() {
  const char* v = std::getenv(kThreadsEnv);
  if (v == nullptr || *v == '\0') return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 0 || n > 4096)
    throw Error(ErrorKind::invalid, fmt::format("{} must be a non-negative integer, got '{}'", kThreadsEnv, v));
  return static_cast<int>(n);
}

}  // namespace lingsim::cli
