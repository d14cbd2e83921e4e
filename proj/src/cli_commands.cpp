#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>

#include "lingsim/alignment.hpp"
#include "lingsim/analysis.hpp"
#include "lingsim/cli.hpp"
#include "lingsim/common.hpp"
#include "lingsim/embed.hpp"
#include "lingsim/simkernel.hpp"

namespace lingsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Everything a subcommand needs besides its own options.
struct Context {
  std::span<const std::string> argv;
  std::ostream& out;
  int threads = 0;
};

fs::path sibling(const fs::path& p, std::string_view suffix) {
  return p.parent_path() / (p.stem().string() + std::string(suffix));
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

const json* find_selection(const SimMatrix& info, const char* key) {
  return info.provenance.contains(key) ? &info.provenance.at(key) : nullptr;
}

std::vector<std::string> pick(const std::vector<std::string>& all, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

// Labels present in the selected samples, grouped field -> term -> phenomenon
// by first appearance, so related classes sit next to each other.
std::vector<std::string> grouped_order(const Dataset& d, const std::vector<std::size_t>& idx, TaxonomyLevel level) {
  std::map<std::string, std::size_t> field_rank, term_rank, uid_rank;
  auto rank = [](std::map<std::string, std::size_t>& m, const std::string& k) {
    return m.try_emplace(k, m.size()).first->second;
  };
  struct Key {
    std::size_t f, t, u;
    std::string label;
  };
  std::vector<Key> keys;
  std::map<std::string, bool> seen;
  for (auto i : idx) {
    const auto& uid = d.pairs[i].phenomenon_uid;
    const auto& e = d.taxonomy.at(uid);
    Key k{rank(field_rank, e.field), rank(term_rank, e.term), rank(uid_rank, uid), {}};
    switch (level) {
      case TaxonomyLevel::phenomenon: k.label = uid; break;
      case TaxonomyLevel::term: k.label = e.term; k.u = 0; break;
      case TaxonomyLevel::field: k.label = e.field; k.t = k.u = 0; break;
    }
    if (seen.emplace(k.label, true).second) keys.push_back(std::move(k));
  }
  std::stable_sort(keys.begin(), keys.end(),
                   [](const Key& a, const Key& b) { return std::tie(a.f, a.t, a.u) < std::tie(b.f, b.t, b.u); });
  std::vector<std::string> out;
  for (auto& k : keys) out.push_back(std::move(k.label));
  return out;
}

double parse_double(const std::string& s, std::string_view what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno == ERANGE)
    throw Error(ErrorKind::parse, fmt::format("{}: not a number: '{}'", what, s));
  return v;
}

std::size_t parse_index(const std::string& s, std::string_view what) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw Error(ErrorKind::parse, fmt::format("{}: not an index: '{}'", what, s));
  return v;
}

std::vector<std::vector<std::string>> load_csv(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, fmt::format("cannot open {}", p.string()));
  return read_csv(f);
}

void write_square_csv(std::ostream& o, const std::vector<std::string>& labels, const std::vector<double>& values) {
  std::vector<std::string> row{"model"};
  row.insert(row.end(), labels.begin(), labels.end());
  write_csv_row(o, row);
  const std::size_t m = labels.size();
  for (std::size_t i = 0; i < m; ++i) {
    row.assign({labels[i]});
    for (std::size_t j = 0; j < m; ++j) row.push_back(csv_number(values[i * m + j]));
    write_csv_row(o, row);
  }
}

// ---------------------------------------------------------------------------

struct IngestOpts {
  std::string adapter = "canonical";
  fs::path input, out;
  std::string dataset_id;
};

void cmd_ingest(const Context& ctx, const IngestOpts& o) {
  Manifest man("ingest", ctx.argv);
  std::ifstream in(o.input, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot open {}", o.input.string()));
  const auto id = o.dataset_id.empty() ? o.input.stem().string() : o.dataset_id;
  const Dataset d = parse_minimal_pairs(in, parse_adapter(o.adapter), id);
  write_atomic(o.out, [&](std::ostream& f) { write_canonical(f, d); });
  man.add_input("records", o.input);
  man.add_output("pairs", o.out);
  man.parameters() = {{"adapter", o.adapter}, {"dataset_id", id}};
  man.results() = {{"dataset_hash", hex16(d.content_hash)}, {"pairs", d.size()}, {"phenomena", d.taxonomy.size()}};
  man.write(o.out);
  fmt::print(ctx.out, "{}: {} pairs, {} phenomena, dataset hash {}\n", o.out.string(), d.size(), d.taxonomy.size(),
             hex16(d.content_hash));
}

// ---------------------------------------------------------------------------

struct SimOpts {
  fs::path a, b, out;
  std::string mode = "layer_mean";
  std::size_t tile = 256;
  std::optional<int> threads;
  bool force = false;
  std::optional<double> fraction;
  std::uint64_t seed = 0;
};

void cmd_simmatrix(const Context& ctx, const SimOpts& o) {
  Manifest man("simmatrix", ctx.argv);
  SimConfig cfg;
  cfg.aggregation = parse_aggregation(o.mode);
  cfg.tile = o.tile;
  cfg.threads = o.threads.value_or(ctx.threads);
  cfg.force_cross_model = o.force;
  if (o.fraction && !(*o.fraction > 0.0 && *o.fraction <= 1.0))
    throw Error(ErrorKind::invalid, fmt::format("--fraction must be in (0, 1], got {}", *o.fraction));

  VectorSet a = VectorSetReader(o.a).read_all();
  std::optional<VectorSet> b;
  if (!o.b.empty()) b = VectorSetReader(o.b).read_all();
  json row_sel, col_sel;
  if (o.fraction) {
    auto draw = [&](VectorSet& vs) {
      const auto s = subsample(vs.n_samples, vs.dataset_hash, *o.fraction, o.seed);
      vs = select_samples(vs, s.indices, s.digest(vs.n_samples));
      return selection_to_json(s);
    };
    row_sel = draw(a);
    col_sel = b ? draw(*b) : row_sel;
  }
  SimMatrix m = b ? pairwise_similarity(a, *b, cfg) : pairwise_similarity(a, cfg);
  if (o.fraction) {
    m.provenance["row_selection"] = row_sel;
    m.provenance["col_selection"] = col_sel;
  }
  write_atomic(o.out, [&](std::ostream& f) { write_sim_matrix(m, f); });

  man.add_input("a", o.a);
  if (b) man.add_input("b", o.b);
  man.add_output("similarity", o.out);
  man.parameters() = {{"mode", o.mode}, {"tile", o.tile}, {"threads", cfg.threads}, {"force_cross_model", o.force}};
  if (o.fraction) {
    man.parameters()["fraction"] = *o.fraction;
    man.seeds()["subsample"] = o.seed;
  }
  man.results() = {{"rows", m.rows}, {"cols", m.cols}, {"row_hash", hex16(m.row_hash)}, {"col_hash", hex16(m.col_hash)}};
  man.write(o.out);
  fmt::print(ctx.out, "{}: {} x {} {} similarity\n", o.out.string(), m.rows, m.cols, to_string(m.aggregation));
}

// ---------------------------------------------------------------------------

struct AverageOpts {
  std::vector<fs::path> inputs;
  fs::path out;
};

void cmd_average(const Context& ctx, const AverageOpts& o) {
  Manifest man("average-sims", ctx.argv);
  write_atomic(o.out, [&](std::ostream& f) { average_sims(o.inputs, f); });
  for (const auto& p : o.inputs) man.add_input("similarity", p);
  man.add_output("similarity", o.out);
  man.parameters() = {{"inputs", o.inputs.size()}};
  man.write(o.out);
  fmt::print(ctx.out, "{}: mean of {} matrices\n", o.out.string(), o.inputs.size());
}

// ---------------------------------------------------------------------------

struct AlignOpts {
  std::vector<fs::path> sims;
  std::vector<std::string> names;
  std::string k = "auto";
  fs::path out, distances_out;
  std::optional<int> threads;
};

void cmd_align(const Context& ctx, const AlignOpts& o) {
  Manifest man("align", ctx.argv);
  if (o.sims.size() < 2) throw Error(ErrorKind::invalid, "align: need at least 2 similarity matrices");
  if (!o.names.empty() && o.names.size() != o.sims.size())
    throw Error(ErrorKind::invalid, fmt::format("align: {} names for {} matrices", o.names.size(), o.sims.size()));
  const int threads = o.threads.value_or(ctx.threads);

  std::vector<KnnTable> tables;
  std::size_t k = 0, n = 0;
  json skipped = json::object();
  for (std::size_t m = 0; m < o.sims.size(); ++m) {
    SimMatrixReader r(o.sims[m]);
    if (m == 0) {
      n = r.info().rows;
      k = o.k == "auto" ? k_from_pool(n) : parse_index(o.k, "--k");
    }
    tables.push_back(knn_table(r, k, threads));
    if (!o.names.empty()) tables.back().model_id = o.names[m];
    std::size_t missing = 0;
    for (const auto& row : tables.back().rows) missing += row ? 0 : 1;
    if (missing) skipped[tables.back().model_id] = missing;
  }
  std::map<std::string, int> dup;
  for (const auto& t : tables)
    if (++dup[t.model_id] > 1)
      throw Error(ErrorKind::invalid, fmt::format("align: model id '{}' appears twice; pass --names", t.model_id));

  const AlignmentMatrix am = alignment_matrix(tables);
  std::vector<double> dist(am.scores.size());
  for (std::size_t c = 0; c < dist.size(); ++c) dist[c] = distance_from_alignment(am.scores[c]);
  const fs::path dpath = o.distances_out.empty() ? sibling(o.out, ".distances.csv") : o.distances_out;
  write_atomic(o.out, [&](std::ostream& f) { write_square_csv(f, am.model_ids, am.scores); });
  write_atomic(dpath, [&](std::ostream& f) { write_square_csv(f, am.model_ids, dist); });

  for (const auto& p : o.sims) man.add_input("similarity", p);
  man.add_output("alignment", o.out);
  man.add_output("distances", dpath);
  man.parameters() = {{"k", k},
                      {"k_mode", o.k == "auto" ? "auto" : "fixed"},
                      {"self_excluded", true},
                      {"tie_break", "ascending index"},
                      {"distance_floor", kDistanceFloor},
                      {"threads", threads}};
  man.results() = {{"n", n}, {"sample_hash", hex16(tables.front().sample_hash)}, {"skipped_samples", skipped}};
  man.write(o.out);
  fmt::print(ctx.out, "{}: {} models, n = {}, k = {}\n", o.out.string(), am.size(), n, k);
}

// ---------------------------------------------------------------------------

struct EmbedOpts {
  fs::path distances, out;
};

void cmd_embed(const Context& ctx, const EmbedOpts& o) {
  Manifest man("embed", ctx.argv);
  const auto rows = load_csv(o.distances);
  if (rows.empty()) throw Error(ErrorKind::parse, "embed: empty distance file");
  const std::vector<std::string> labels(rows[0].begin() + 1, rows[0].end());
  const std::size_t m = labels.size();
  if (rows.size() != m + 1) throw Error(ErrorKind::shape, fmt::format("embed: {} labels but {} rows", m, rows.size() - 1));
  std::vector<double> d(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& r = rows[i + 1];
    if (r.size() != m + 1) throw Error(ErrorKind::shape, fmt::format("embed: row {} has {} fields", i + 1, r.size()));
    if (r[0] != labels[i])
      throw Error(ErrorKind::parse, fmt::format("embed: row {} is '{}', expected '{}'", i + 1, r[0], labels[i]));
    for (std::size_t j = 0; j < m; ++j) d[i * m + j] = parse_double(r[j + 1], "embed");
  }
  const EmbedCoords e = classical_mds(d, m, labels);
  const fs::path side = sibling(o.out, ".embed.json");
  write_atomic(o.out, [&](std::ostream& f) {
    write_csv_row(f, std::vector<std::string>{"label", "x", "y"});
    for (std::size_t i = 0; i < m; ++i)
      write_csv_row(f, std::vector<std::string>{e.labels[i], csv_number(e.at(i, 0)), csv_number(e.at(i, 1))});
  });
  const json sj = {{"method", "classical_mds"},
                   {"eigenvalues", e.eigenvalues},
                   {"negative_eigenvalues", e.negative_eigenvalues},
                   {"negative_mass", e.negative_mass},
                   {"stress", e.stress}};
  write_atomic(side, [&](std::ostream& f) { f << sj.dump(2) << '\n'; });
  man.add_input("distances", o.distances);
  man.add_output("coords", o.out);
  man.add_output("sidecar", side);
  man.results() = sj;
  man.write(o.out);
  fmt::print(ctx.out, "{}: {} points, stress {}\n", o.out.string(), m, e.stress);
}

// ---------------------------------------------------------------------------

struct StatsOpts {
  fs::path sim, pairs, out, hist_out;
  std::string level = "all";
  std::optional<std::size_t> sample_pairs;
  std::uint64_t seed = 0;
  std::optional<int> threads;
};

void cmd_stats(const Context& ctx, const StatsOpts& o) {
  Manifest man("stats", ctx.argv);
  const SimMatrixReader r(o.sim);
  const auto& info = r.info();
  if (info.rows != info.cols) throw Error(ErrorKind::shape, "stats: similarity matrix must be square");
  const Dataset d = load_dataset(o.pairs);
  const auto idx = resolve_samples(info.row_hash, info.rows, find_selection(info, "row_selection"), d, "stats");

  std::vector<TaxonomyLevel> levels;
  if (o.level == "all")
    levels = {TaxonomyLevel::phenomenon, TaxonomyLevel::term, TaxonomyLevel::field};
  else
    levels = {parse_taxonomy_level(o.level)};
  ClassStatsOptions opts;
  opts.sample_pairs = o.sample_pairs;
  opts.seed = o.seed;
  opts.threads = o.threads.value_or(ctx.threads);

  std::vector<ClassStats> all;
  std::vector<std::string> skipped;
  for (auto lv : levels) {
    try {
      all.push_back(class_similarity_stats(r, pick(d.labels(lv), idx), lv, opts));
    } catch (const Error& e) {
      // --level all tolerates levels that have one class or only singletons
      if (levels.size() == 1 || e.kind() != ErrorKind::invalid) throw;
      ctx.out << "skipping " << to_string(lv) << ": " << e.what() << "\n";
      skipped.emplace_back(to_string(lv));
    }
  }
  if (all.empty()) throw Error(ErrorKind::invalid, "stats: no taxonomy level has both intra and inter pairs");

  write_atomic(o.out, [&](std::ostream& f) {
    write_csv_row(f, std::vector<std::string>{"level", "mode", "intra_mean", "inter_mean", "gap", "intra_se",
                                              "inter_se", "intra_count", "inter_count", "sentinel_pairs"});
    for (const auto& s : all)
      write_csv_row(f, std::vector<std::string>{std::string(to_string(s.level)), s.exact ? "exact" : "sampled",
                                                csv_number(s.intra_mean), csv_number(s.inter_mean),
                                                csv_number(s.gap), csv_number(s.intra_se), csv_number(s.inter_se),
                                                std::to_string(s.intra_count), std::to_string(s.inter_count),
                                                std::to_string(s.sentinel_pairs)});
  });
  if (!o.hist_out.empty())
    write_atomic(o.hist_out, [&](std::ostream& f) {
      write_csv_row(f, std::vector<std::string>{"level", "bin", "lo", "hi", "intra", "inter"});
      for (const auto& s : all)
        for (std::size_t b = 0; b < kHistBins; ++b) {
          const double lo = -1.0 + 2.0 * static_cast<double>(b) / kHistBins;
          const double hi = -1.0 + 2.0 * static_cast<double>(b + 1) / kHistBins;
          write_csv_row(f, std::vector<std::string>{std::string(to_string(s.level)), std::to_string(b),
                                                    csv_number(lo), csv_number(hi), std::to_string(s.intra_hist[b]),
                                                    std::to_string(s.inter_hist[b])});
        }
    });

  man.add_input("similarity", o.sim);
  man.add_input("pairs", o.pairs);
  man.add_output("stats", o.out);
  if (!o.hist_out.empty()) man.add_output("histograms", o.hist_out);
  man.parameters() = {{"level", o.level},
                      {"mode", o.sample_pairs ? "sampled" : "exact"},
                      {"threads", opts.threads},
                      {"dataset_hash", hex16(d.content_hash)}};
  if (o.sample_pairs) {
    man.parameters()["sample_pairs"] = *o.sample_pairs;
    man.seeds()["pairs"] = o.seed;
  }
  if (!skipped.empty()) man.results()["skipped_levels"] = skipped;
  man.write(o.out);
  for (const auto& s : all)
    fmt::print(ctx.out, "{}: intra {:.4f} inter {:.4f} gap {:.4f}\n", to_string(s.level), s.intra_mean, s.inter_mean,
               s.gap);
}

// ---------------------------------------------------------------------------

struct PhenoOpts {
  fs::path sim, pairs, out;
  std::string level = "phenomenon";
};

void cmd_phenomatrix(const Context& ctx, const PhenoOpts& o) {
  Manifest man("phenomatrix", ctx.argv);
  const SimMatrix sim = SimMatrixReader(o.sim).read_all();
  if (sim.rows != sim.cols) throw Error(ErrorKind::shape, "phenomatrix: similarity matrix must be square");
  const Dataset d = load_dataset(o.pairs);
  const auto idx = resolve_samples(sim.row_hash, sim.rows, find_selection(sim, "row_selection"), d, "phenomatrix");
  const auto level = parse_taxonomy_level(o.level);
  const auto order = grouped_order(d, idx, level);
  const auto pm = phenomenon_matrix(sim, pick(d.labels(level), idx), order);

  // Taxonomy columns above the chosen level.
  std::vector<std::string> head;
  switch (level) {
    case TaxonomyLevel::phenomenon: head = {"phenomenon", "term", "field"}; break;
    case TaxonomyLevel::term: head = {"term", "field"}; break;
    case TaxonomyLevel::field: head = {"field"}; break;
  }
  std::map<std::string, TaxonomyEntry> parent;
  for (auto i : idx) {
    const auto& uid = d.pairs[i].phenomenon_uid;
    const auto& e = d.taxonomy.at(uid);
    const std::string key = level == TaxonomyLevel::phenomenon ? uid : level == TaxonomyLevel::term ? e.term : e.field;
    parent.try_emplace(key, e);
  }
  double diag = 0.0, off = 0.0;
  std::size_t nd = 0, no = 0;
  write_atomic(o.out, [&](std::ostream& f) {
    std::vector<std::string> row = head;
    row.insert(row.end(), pm.col_labels.begin(), pm.col_labels.end());
    write_csv_row(f, row);
    for (std::size_t p = 0; p < pm.row_labels.size(); ++p) {
      const auto& e = parent.at(pm.row_labels[p]);
      row.assign({pm.row_labels[p]});
      if (level == TaxonomyLevel::phenomenon) row.push_back(e.term);
      if (level != TaxonomyLevel::field) row.push_back(e.field);
      for (std::size_t q = 0; q < pm.col_labels.size(); ++q) {
        const double v = pm.at(p, q);
        row.push_back(csv_number(v));
        if (std::isnan(v)) continue;
        (p == q ? diag : off) += v;
        ++(p == q ? nd : no);
      }
      write_csv_row(f, row);
    }
  });
  man.add_input("similarity", o.sim);
  man.add_input("pairs", o.pairs);
  man.add_output("matrix", o.out);
  man.parameters() = {{"level", o.level}, {"dataset_hash", hex16(d.content_hash)}};
  man.results() = {{"classes", pm.row_labels.size()},
                   {"diagonal_mean", nd ? json(diag / static_cast<double>(nd)) : json(nullptr)},
                   {"off_diagonal_mean", no ? json(off / static_cast<double>(no)) : json(nullptr)}};
  man.write(o.out);
  fmt::print(ctx.out, "{}: {} x {} {} matrix\n", o.out.string(), pm.row_labels.size(), pm.col_labels.size(),
             o.level);
}

// ---------------------------------------------------------------------------

struct CrossOpts {
  fs::path sim, pairs_a, pairs_b, out;
  std::string level = "term";
};

void cmd_crosstable(const Context& ctx, const CrossOpts& o) {
  Manifest man("crosstable", ctx.argv);
  const SimMatrix sim = SimMatrixReader(o.sim).read_all();
  const Dataset da = load_dataset(o.pairs_a);
  const Dataset db = load_dataset(o.pairs_b);
  const auto ia = resolve_samples(sim.row_hash, sim.rows, find_selection(sim, "row_selection"), da, "crosstable rows");
  const auto ib = resolve_samples(sim.col_hash, sim.cols, find_selection(sim, "col_selection"), db, "crosstable cols");
  const auto level = parse_taxonomy_level(o.level);
  const auto ra = grouped_order(da, ia, level);
  const auto cb = grouped_order(db, ib, level);
  const auto t = cross_lingual_term_table(sim, pick(da.labels(level), ia), pick(db.labels(level), ib), ra, cb);
  write_atomic(o.out, [&](std::ostream& f) {
    std::vector<std::string> row{std::string(to_string(level))};
    row.insert(row.end(), t.col_labels.begin(), t.col_labels.end());
    write_csv_row(f, row);
    for (std::size_t p = 0; p < t.row_labels.size(); ++p) {
      row.assign({t.row_labels[p]});
      for (std::size_t q = 0; q < t.col_labels.size(); ++q) row.push_back(csv_number(t.at(p, q)));
      write_csv_row(f, row);
    }
  });
  man.add_input("similarity", o.sim);
  man.add_input("pairs_a", o.pairs_a);
  man.add_input("pairs_b", o.pairs_b);
  man.add_output("table", o.out);
  man.parameters() = {{"level", o.level}};
  man.write(o.out);
  fmt::print(ctx.out, "{}: {} x {} table\n", o.out.string(), t.row_labels.size(), t.col_labels.size());
}

// ---------------------------------------------------------------------------

struct JointOpts {
  fs::path sim, embeddings, out;
  std::string buckets;
  std::size_t per_bucket = 1000;
  std::uint64_t seed = 0;
};

void cmd_joint(const Context& ctx, const JointOpts& o) {
  Manifest man("joint", ctx.argv);
  const SimMatrix sim = SimMatrixReader(o.sim).read_all();
  VectorSet emb = VectorSetReader(o.embeddings).read_all();
  const std::uint64_t base_hash = emb.dataset_hash;
  std::vector<std::size_t> idx;
  if (emb.dataset_hash == sim.row_hash) {
    idx = iota_indices(sim.rows);
  } else if (const json* sel = find_selection(sim, "row_selection")) {
    const auto s = selection_from_json(*sel);
    if (s.source_hash != emb.dataset_hash || s.digest(emb.n_samples) != sim.row_hash)
      throw Error(ErrorKind::mismatch, fmt::format("joint: embeddings {} do not cover matrix samples {}",
                                                   hex16(emb.dataset_hash), hex16(sim.row_hash)));
    emb = select_samples(emb, s.indices, sim.row_hash);
    idx = s.indices;
  } else {
    throw Error(ErrorKind::mismatch, fmt::format("joint: embeddings hash {} vs matrix {}", hex16(emb.dataset_hash),
                                                 hex16(sim.row_hash)));
  }
  const auto buckets = o.buckets.empty() ? default_buckets() : parse_buckets(o.buckets);
  const JointSample js = joint_distribution_sample(sim, emb, buckets, o.per_bucket, o.seed);

  write_atomic(o.out, [&](std::ostream& f) {
    write_csv_row(f, std::vector<std::string>{"i", "j", "bucket", "linguistic_sim", "semantic_sim"});
    for (const auto& r : js.records)
      write_csv_row(f, std::vector<std::string>{std::to_string(idx[r.i]), std::to_string(idx[r.j]),
                                                js.buckets[r.bucket].label(), csv_number(r.linguistic_sim),
                                                csv_number(r.semantic_sim)});
  });
  json per = json::array();
  for (std::size_t b = 0; b < js.buckets.size(); ++b)
    per.push_back({{"bucket", js.buckets[b].label()}, {"eligible", js.eligible[b]}, {"shortfall", js.shortfall[b]}});
  man.add_input("similarity", o.sim);
  man.add_input("embeddings", o.embeddings);
  man.add_output("joint", o.out);
  man.parameters() = {{"per_bucket", o.per_bucket}, {"dataset_hash", hex16(base_hash)}};
  man.seeds()["joint"] = o.seed;
  man.results() = {{"records", js.records.size()},
                   {"pearson_r", js.pearson_r ? json(*js.pearson_r) : json(nullptr)},
                   {"pearson_note", "pooled over all records"},
                   {"buckets", per}};
  man.write(o.out);
  fmt::print(ctx.out, "{}: {} records, pearson r {}\n", o.out.string(), js.records.size(),
             js.pearson_r ? fmt::format("{:.4f}", *js.pearson_r) : std::string("undefined"));
}

// ---------------------------------------------------------------------------

struct QuadOpts {
  fs::path joint, pairs, out;
  double high = 0.6, low = 0.3;
  std::size_t per_quadrant = 5;
};

void cmd_quadrants(const Context& ctx, const QuadOpts& o) {
  Manifest man("quadrants", ctx.argv);
  const Dataset d = load_dataset(o.pairs);
  // The joint manifest, when present, pins the dataset the indices refer to.
  if (const auto mp = manifest_path(o.joint); fs::exists(mp)) {
    std::ifstream f(mp);
    const json jm = json::parse(f, nullptr, false);
    if (jm.is_discarded()) throw Error(ErrorKind::parse, fmt::format("quadrants: malformed {}", mp.string()));
    const auto h = jm.value(json::json_pointer("/parameters/dataset_hash"), std::string());
    if (!h.empty() && parse_hex16(h) != d.content_hash)
      throw Error(ErrorKind::mismatch,
                  fmt::format("quadrants: joint sample drawn from {} but pairs hash is {}", h, hex16(d.content_hash)));
  }
  const auto rows = load_csv(o.joint);
  const std::vector<std::string> expect{"i", "j", "bucket", "linguistic_sim", "semantic_sim"};
  if (rows.empty() || rows[0] != expect) throw Error(ErrorKind::parse, "quadrants: not a joint CSV");
  JointSample js;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != expect.size()) throw Error(ErrorKind::parse, fmt::format("quadrants: line {} malformed", r + 1));
    JointRecord rec;
    rec.i = parse_index(f[0], "quadrants");
    rec.j = parse_index(f[1], "quadrants");
    if (rec.i >= d.size() || rec.j >= d.size())
      throw Error(ErrorKind::shape, fmt::format("quadrants: line {} index out of range", r + 1));
    rec.linguistic_sim = parse_double(f[3], "quadrants");
    rec.semantic_sim = parse_double(f[4], "quadrants");
    js.records.push_back(rec);
  }
  const auto ex = quadrant_examples(js, d, o.high, o.low, o.per_quadrant);
  std::map<std::string, std::size_t> tally;
  write_atomic(o.out, [&](std::ostream& f) {
    write_csv_row(f, std::vector<std::string>{"quadrant", "i", "j", "linguistic_sim", "semantic_sim", "pair_id_i",
                                              "phenomenon_i", "good_i", "bad_i", "pair_id_j", "phenomenon_j",
                                              "good_j", "bad_j"});
    for (const auto& e : ex) {
      ++tally[std::string(to_string(e.quadrant))];
      write_csv_row(f, std::vector<std::string>{
                           std::string(to_string(e.quadrant)), std::to_string(e.record.i), std::to_string(e.record.j),
                           csv_number(e.record.linguistic_sim), csv_number(e.record.semantic_sim), e.pair_i.pair_id,
                           e.pair_i.phenomenon_uid, e.pair_i.sentence_good, e.pair_i.sentence_bad, e.pair_j.pair_id,
                           e.pair_j.phenomenon_uid, e.pair_j.sentence_good, e.pair_j.sentence_bad});
    }
  });
  man.add_input("joint", o.joint);
  man.add_input("pairs", o.pairs);
  man.add_output("examples", o.out);
  man.parameters() = {{"high", o.high}, {"low", o.low}, {"per_quadrant", o.per_quadrant}};
  man.results() = {{"per_quadrant", tally}};
  man.write(o.out);
  fmt::print(ctx.out, "{}: {} examples\n", o.out.string(), ex.size());
}

// ---------------------------------------------------------------------------

void cmd_info(const Context& ctx, const fs::path& file) {
  const auto magic = sniff_magic(file);
  if (magic == "LDIF") {
    const VectorSetReader r(file);
    const auto& h = r.header();
    const auto& v = r.info();
    fmt::print(ctx.out, "format: LDIF v{}\n", h.version);
    fmt::print(ctx.out, "model_id: {}\n", v.model_id);
    fmt::print(ctx.out, "dataset_hash: {}\n", hex16(v.dataset_hash));
    fmt::print(ctx.out, "shape: {} x {} x {}\n", v.n_samples, v.n_layers, v.dim);
    std::string layers;
    for (std::size_t k = 0; k < v.layer_indices.size(); ++k)
      layers += (k ? ", " : "") + std::to_string(v.layer_indices[k]);
    fmt::print(ctx.out, "layer_indices: [{}]\n", layers);
    fmt::print(ctx.out, "payload_bytes: {} scales + {} codes\n", h.scale_bytes(), h.code_bytes());
    fmt::print(ctx.out, "file_bytes: {}\n", h.file_size());
  } else if (magic == "LSIM") {
    const SimMatrixReader r(file);
    const auto& h = r.header();
    const auto& m = r.info();
    fmt::print(ctx.out, "format: LSIM v{}\n", h.version);
    fmt::print(ctx.out, "shape: {} x {}{}\n", m.rows, m.cols, m.symmetric ? " symmetric" : "");
    fmt::print(ctx.out, "aggregation: {}\n", to_string(m.aggregation));
    fmt::print(ctx.out, "row_model: {}\ncol_model: {}\n", m.row_model, m.col_model);
    fmt::print(ctx.out, "row_hash: {}\ncol_hash: {}\n", hex16(m.row_hash), hex16(m.col_hash));
    fmt::print(ctx.out, "payload_bytes: {}\n", h.code_bytes());
    fmt::print(ctx.out, "file_bytes: {}\n", h.file_size());
  } else {
    throw Error(ErrorKind::format, fmt::format("{}: unknown magic", file.string()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linguistic similarity of minimal-pair activation differences"};
  app.name(std::string(kToolName));
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  std::function<void(const Context&)> action;

  IngestOpts ing;
  auto* c = app.add_subcommand("ingest", "Map a minimal-pair corpus onto the canonical record form");
  c->add_option("--adapter", ing.adapter)->check(CLI::IsMember(std::vector<std::string>{"canonical", "blimp", "sling", "rublimp"}));
  c->add_option("--input", ing.input)->required()->check(CLI::ExistingFile);
  c->add_option("--out", ing.out)->required();
  c->add_option("--dataset-id", ing.dataset_id);
  c->callback([&] { action = [&](const Context& x) { cmd_ingest(x, ing); }; });

  SimOpts sim;
  c = app.add_subcommand("simmatrix", "Pairwise cosine similarity of activation differences");
  c->add_option("--a", sim.a)->required()->check(CLI::ExistingFile);
  c->add_option("--b", sim.b)->check(CLI::ExistingFile);
  c->add_option("--mode", sim.mode)->check(CLI::IsMember(std::vector<std::string>{"layer_mean", "concat"}));
  c->add_option("--out", sim.out)->required();
  c->add_option("--tile", sim.tile)->check(CLI::PositiveNumber);
  c->add_option("--threads", sim.threads)->check(CLI::NonNegativeNumber);
  c->add_flag("--force-cross-model", sim.force);
  c->add_option("--fraction", sim.fraction, "Keep a seeded random fraction of the samples");
  c->add_option("--seed", sim.seed);
  c->callback([&] { action = [&](const Context& x) { cmd_simmatrix(x, sim); }; });

  AverageOpts avg;
  c = app.add_subcommand("average-sims", "Element-wise mean of similarity matrices");
  c->add_option("--inputs", avg.inputs)->required()->check(CLI::ExistingFile);
  c->add_option("--out", avg.out)->required();
  c->callback([&] { action = [&](const Context& x) { cmd_average(x, avg); }; });

  AlignOpts al;
  c = app.add_subcommand("align", "Mutual k-NN alignment between models");
  c->add_option("--sims", al.sims)->required()->check(CLI::ExistingFile);
  c->add_option("--names", al.names, "Model labels, one per matrix (default: model id in each file)");
  c->add_option("--k", al.k, "Neighbour count or 'auto' (round(n / 100))");
  c->add_option("--out", al.out)->required();
  c->add_option("--distances-out", al.distances_out);
  c->add_option("--threads", al.threads)->check(CLI::NonNegativeNumber);
  c->callback([&] { action = [&](const Context& x) { cmd_align(x, al); }; });

  EmbedOpts em;
  c = app.add_subcommand("embed", "Classical MDS of a model distance matrix");
  c->add_option("--distances", em.distances)->required()->check(CLI::ExistingFile);
  c->add_option("--out", em.out)->required();
  c->callback([&] { action = [&](const Context& x) { cmd_embed(x, em); }; });

  StatsOpts st;
  c = app.add_subcommand("stats", "Intra- vs inter-class similarity per taxonomy level");
  c->add_option("--sim", st.sim)->required()->check(CLI::ExistingFile);
  c->add_option("--pairs", st.pairs)->required()->check(CLI::ExistingFile);
  c->add_option("--level", st.level)->check(CLI::IsMember(std::vector<std::string>{"phenomenon", "term", "field", "all"}));
  c->add_option("--sample-pairs", st.sample_pairs, "Estimate from this many random pairs instead of all pairs");
  c->add_option("--seed", st.seed);
  c->add_option("--threads", st.threads)->check(CLI::NonNegativeNumber);
  c->add_option("--out", st.out)->required();
  c->add_option("--hist-out", st.hist_out);
  c->callback([&] { action = [&](const Context& x) { cmd_stats(x, st); }; });

  PhenoOpts ph;
  c = app.add_subcommand("phenomatrix", "Mean similarity between every pair of classes");
  c->add_option("--sim", ph.sim)->required()->check(CLI::ExistingFile);
  c->add_option("--pairs", ph.pairs)->required()->check(CLI::ExistingFile);
  c->add_option("--level", ph.level)->check(CLI::IsMember(std::vector<std::string>{"phenomenon", "term", "field"}));
  c->add_option("--out", ph.out)->required();
  c->callback([&] { action = [&](const Context& x) { cmd_phenomatrix(x, ph); }; });

  CrossOpts cr;
  c = app.add_subcommand("crosstable", "Mean similarity between class blocks of a rectangular matrix");
  c->add_option("--sim", cr.sim)->required()->check(CLI::ExistingFile);
  c->add_option("--pairs-a", cr.pairs_a)->required()->check(CLI::ExistingFile);
  c->add_option("--pairs-b", cr.pairs_b)->required()->check(CLI::ExistingFile);
  c->add_option("--level", cr.level)->check(CLI::IsMember(std::vector<std::string>{"phenomenon", "term", "field"}));
  c->add_option("--out", cr.out)->required();
  c->callback([&] { action = [&](const Context& x) { cmd_crosstable(x, cr); }; });

  JointOpts jo;
  c = app.add_subcommand("joint", "Sample linguistic vs semantic similarity per bucket");
  c->add_option("--sim", jo.sim)->required()->check(CLI::ExistingFile);
  c->add_option("--embeddings", jo.embeddings)->required()->check(CLI::ExistingFile);
  c->add_option("--buckets", jo.buckets, "lo:hi,lo:hi,... with -inf allowed");
  c->add_option("--per-bucket", jo.per_bucket)->check(CLI::PositiveNumber);
  c->add_option("--seed", jo.seed);
  c->add_option("--out", jo.out)->required();
  c->callback([&] { action = [&](const Context& x) { cmd_joint(x, jo); }; });

  QuadOpts qu;
  c = app.add_subcommand("quadrants", "List sentence pairs by linguistic/semantic quadrant");
  c->add_option("--joint", qu.joint)->required()->check(CLI::ExistingFile);
  c->add_option("--pairs", qu.pairs)->required()->check(CLI::ExistingFile);
  c->add_option("--high", qu.high);
  c->add_option("--low", qu.low);
  c->add_option("--per-quadrant", qu.per_quadrant);
  c->add_option("--out", qu.out)->required();
  c->callback([&] { action = [&](const Context& x) { cmd_quadrants(x, qu); }; });

  fs::path info_file;
  c = app.add_subcommand("info", "Print the header of an LDIF or LSIM file");
  c->add_option("file", info_file)->required()->check(CLI::ExistingFile);
  c->callback([&] { action = [&](const Context& x) { cmd_info(x, info_file); }; });

  std::vector<std::string> owned{std::string(kToolName)};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : owned) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const Context ctx{args, out, default_threads()};
    action(ctx);
  } catch (const Error& e) {
    fmt::print(err, "error: {}: {}\n", to_string(e.kind()), e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(err, "error: internal: {}\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace lingsim::cli
