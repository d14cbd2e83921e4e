#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lingsim/core_model.hpp"
#include "lingsim/tensorstore.hpp"

namespace lingsim::cli {

inline constexpr std::string_view kToolName = "lingsim";
inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr const char* kThreadsEnv = "LINGSIM_THREADS";

/// Runs one subcommand. `args` excludes the program name. Returns the exit
/// code: 0 on success, 1 on a run-time error, 2 on a usage error.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

// ---------------------------------------------------------------------------
// Averaging of similarity matrices

/// Element-wise mean of dequantized similarities, requantized. A cell is
/// undefined if it is undefined in any input.
SimMatrix average_sims(std::span<const SimMatrix> inputs);

/// Streaming form over LSIM files; holds one row per input in memory.
void average_sims(std::span<const std::filesystem::path> inputs, std::ostream& out);

// ---------------------------------------------------------------------------
// CSV

std::string csv_field(std::string_view s);
/// Shortest round-trip decimal; NaN becomes an empty field.
std::string csv_number(double v);
void write_csv_row(std::ostream& out, std::span<const std::string> fields);

/// RFC 4180 style reader: quoted fields, doubled quotes, CRLF tolerated.
std::vector<std::vector<std::string>> read_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Files and manifests

/// Writes through a temporary sibling and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body);

/// FNV-1a of the whole file.
std::uint64_t file_digest(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& output);

class Manifest {
 public:
  Manifest(std::string command, std::span<const std::string> argv);

  void add_input(std::string_view role, const std::filesystem::path& path);
  void add_output(std::string_view role, const std::filesystem::path& path);
  nlohmann::json& parameters() { return parameters_; }
  nlohmann::json& seeds() { return seeds_; }
  nlohmann::json& results() { return results_; }

  /// Writes `<primary>.manifest.json`.
  void write(const std::filesystem::path& primary) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
  nlohmann::json parameters_ = nlohmann::json::object();
  nlohmann::json seeds_ = nlohmann::json::object();
  nlohmann::json results_ = nlohmann::json::object();
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Sample bookkeeping across chained artifacts

nlohmann::json selection_to_json(const SampleSelection& s);
SampleSelection selection_from_json(const nlohmann::json& j);

/// Dataset indices of the samples on one side of a matrix. The side hash must
/// equal the dataset hash, or be the digest of a recorded selection drawn
/// from it. Throws Error(mismatch) otherwise.
std::vector<std::size_t> resolve_samples(std::uint64_t side_hash, std::size_t side_size,
                                         const nlohmann::json* selection, const Dataset& dataset,
                                         std::string_view what);

Dataset load_dataset(const std::filesystem::path& path);

int default_threads();

}  // namespace lingsim::cli
