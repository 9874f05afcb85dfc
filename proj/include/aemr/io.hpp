#pragma once

// File formats: CSV ingestion with per-column label dictionaries, the
// groups/CATE/trace outputs and their readers, and SHA-256 digests.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aemr/core.hpp"
#include "aemr/estimate.hpp"
#include "aemr/match_state.hpp"

namespace aemr {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; throws kInput when absent.
  std::size_t column(const std::string& name, const std::string& what) const;
};

// RFC 4180 style: comma separated, optional double quotes, LF or CRLF.
CsvTable parse_csv(const std::string& text, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);
std::string csv_field(const std::string& value);

std::string read_file(const std::filesystem::path& path);
// Throws std::runtime_error on failure.
void write_file(const std::filesystem::path& path, const std::string& content);

struct IngestOptions {
  std::string treatment;
  std::string outcome;
  std::vector<std::string> drop_cols;
  std::optional<std::string> id_col;
  // Empty cells become the missing sentinel instead of an error.
  bool missing = false;
};

struct LabeledData {
  Dataset data;
  std::vector<std::string> unit_ids;
};

struct Ingested {
  std::vector<std::string> names;
  // labels[j][code] for every observed code of covariate j.
  std::vector<std::vector<std::string>> labels;
  LabeledData main;
  std::optional<LabeledData> holdout;
};

// Builds one label dictionary per covariate over both tables. Labels that
// all parse as numbers sort numerically, otherwise lexicographically.
Ingested ingest(const CsvTable& main, const CsvTable* holdout,
                const IngestOptions& opts);

// Two-column CSV "covariate,weight" naming every covariate once.
WeightVector read_weights(const std::filesystem::path& path,
                          const std::vector<std::string>& names);

// Shortest round-trip decimal; "nan" and "inf" spelled out.
std::string format_number(double v);
double parse_number(const std::string& s, const std::string& what);

std::string format_group_id(const GroupId& id);

std::string groups_jsonl(const MatchState& state, const Dataset& d,
                         const Ingested& in);
std::string cate_csv(const std::vector<CateRecord>& records,
                     const std::vector<std::string>& unit_ids);
std::string trace_csv(const std::vector<TraceEntry>& trace,
                      const std::vector<std::string>& names);

struct GroupLine {
  std::string id;
  std::size_t iteration = 0;
  std::vector<std::string> retained;
  std::vector<std::string> key_values;
  struct Member {
    std::string unit;
    bool treated = false;
    bool main = false;
  };
  std::vector<Member> members;
};

struct CateRow {
  std::string unit_id;
  bool treated = false;
  std::string group_id;
  double cate = 0.0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
};

struct TraceRow {
  std::size_t iteration = 0;
  std::vector<std::string> dropped;
  double set_weight = 0.0;
  double pe = 0.0;
  double bf = 0.0;
  double mq = 0.0;
  std::size_t newly_matched_treated = 0;
  std::size_t newly_matched_control = 0;
  std::size_t unmatched_treated = 0;
  std::size_t unmatched_control = 0;
  std::size_t groups_formed = 0;
};

// Readers validate structure and throw kInput on malformed content.
std::vector<GroupLine> read_groups_jsonl(const std::filesystem::path& path);
std::vector<CateRow> read_cate_csv(const std::filesystem::path& path);
std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace aemr
