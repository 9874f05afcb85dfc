#include "aemr/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "json.hpp"

namespace aemr {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void input_error(const std::string& msg) {
  throw Error(ErrorCode::kInput, msg);
}

std::optional<double> try_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end != begin + s.size() || errno == ERANGE) return std::nullopt;
  return v;
}

std::size_t parse_count(const std::string& s, const std::string& what) {
  const double v = parse_number(s, what);
  if (!(v >= 0.0) || v != std::floor(v)) {
    input_error(fmt::format("{}: '{}' is not a count", what, s));
  }
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string join_names(const CovariateSet& s,
                       const std::vector<std::string>& names) {
  std::string out;
  for (auto j : s) {
    if (!out.empty()) out.push_back(';');
    out += names[j];
  }
  return out;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name,
                             const std::string& what) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    input_error(fmt::format("{} column '{}' not found", what, name));
  }
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // Skip blank lines.
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
    }
    record.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && !field_started && field.empty()) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\n') {
      end_record();
      ++line;
    } else if (ch == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      end_record();
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (quoted) input_error(fmt::format("{}: unterminated quote", source));
  if (!field.empty() || !record.empty() || field_started) end_record();

  if (records.empty()) input_error(fmt::format("{}: no header row", source));
  CsvTable t;
  t.header = std::move(records[0]);
  std::set<std::string> seen;
  for (const auto& h : t.header) {
    if (!seen.insert(h).second) {
      input_error(fmt::format("{}: duplicate column '{}'", source, h));
    }
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      input_error(fmt::format("{}: row {} has {} fields, header has {}", source,
                              r, records[r].size(), t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) input_error(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_file(path), path.string());
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char ch : value) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

Ingested ingest(const CsvTable& main, const CsvTable* holdout,
                const IngestOptions& opts) {
  const std::size_t t_col = main.column(opts.treatment, "treatment");
  const std::size_t y_col = main.column(opts.outcome, "outcome");
  std::optional<std::size_t> id_col;
  if (opts.id_col) id_col = main.column(*opts.id_col, "id");
  std::set<std::size_t> skip{t_col, y_col};
  if (id_col) skip.insert(*id_col);
  for (const auto& name : opts.drop_cols) skip.insert(main.column(name, "dropped"));

  Ingested in;
  std::vector<std::size_t> main_cols;
  for (std::size_t c = 0; c < main.header.size(); ++c) {
    if (skip.count(c)) continue;
    main_cols.push_back(c);
    in.names.push_back(main.header[c]);
  }
  if (in.names.empty()) input_error("no covariate columns left");

  std::vector<std::size_t> hold_cols;
  if (holdout != nullptr) {
    for (const auto& name : in.names) {
      hold_cols.push_back(holdout->column(name, "holdout covariate"));
    }
  }

  const std::size_t p = in.names.size();
  // Label dictionaries over both tables.
  std::vector<std::set<std::string>> seen(p);
  auto collect = [&](const CsvTable& t, const std::vector<std::size_t>& cols) {
    for (const auto& row : t.rows) {
      for (std::size_t j = 0; j < p; ++j) {
        const auto& cell = row[cols[j]];
        if (!cell.empty()) seen[j].insert(cell);
      }
    }
  };
  collect(main, main_cols);
  if (holdout != nullptr) collect(*holdout, hold_cols);

  std::vector<std::map<std::string, Code>> code_of(p);
  std::vector<CovariateSpec> specs;
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<std::string> labels(seen[j].begin(), seen[j].end());
    const bool numeric = std::all_of(labels.begin(), labels.end(), [](const auto& s) {
      return try_number(s).has_value();
    });
    if (numeric) {
      std::stable_sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) {
        return *try_number(a) < *try_number(b);
      });
    }
    for (std::size_t k = 0; k < labels.size(); ++k) {
      code_of[j][labels[k]] = static_cast<Code>(k);
    }
    auto arity = static_cast<std::uint32_t>(std::max<std::size_t>(2, labels.size()));
    if (opts.missing) ++arity;
    specs.push_back({in.names[j], arity});
    in.labels.push_back(std::move(labels));
  }

  auto build = [&](const CsvTable& t, const std::vector<std::size_t>& cols,
                   const std::string& what) {
    const std::size_t tc = t.column(opts.treatment, what + " treatment");
    const std::size_t yc = t.column(opts.outcome, what + " outcome");
    std::optional<std::size_t> ic;
    if (opts.id_col) ic = t.column(*opts.id_col, what + " id");
    const std::size_t n = t.rows.size();
    std::vector<Code> codes(n * p);
    std::vector<std::uint8_t> treatment(n);
    std::vector<double> outcome(n);
    std::vector<std::uint8_t> mask;
    if (opts.missing) mask.assign(n * p, 0);
    LabeledData ld;
    for (std::size_t r = 0; r < n; ++r) {
      const auto& row = t.rows[r];
      const auto& tv = row[tc];
      if (tv == "1") {
        treatment[r] = 1;
      } else if (tv == "0") {
        treatment[r] = 0;
      } else {
        throw Error(ErrorCode::kValidation,
                    fmt::format("{} row {}: treatment '{}' is not 0 or 1", what,
                                r + 1, tv));
      }
      const auto y = try_number(row[yc]);
      if (!y || !std::isfinite(*y)) {
        throw Error(ErrorCode::kValidation,
                    fmt::format("{} row {}: outcome '{}' is not a finite number",
                                what, r + 1, row[yc]));
      }
      outcome[r] = *y;
      for (std::size_t j = 0; j < p; ++j) {
        const auto& cell = row[cols[j]];
        if (cell.empty()) {
          if (!opts.missing) {
            throw Error(ErrorCode::kValidation,
                        fmt::format("{} row {}: empty value in '{}' (use "
                                    "--missing to allow it)",
                                    what, r + 1, in.names[j]));
          }
          codes[r * p + j] = specs[j].arity - 1;
          mask[r * p + j] = 1;
        } else {
          codes[r * p + j] = code_of[j].at(cell);
        }
      }
      ld.unit_ids.push_back(ic ? row[*ic] : std::to_string(r));
    }
    ld.data = Dataset(specs, std::move(codes), std::move(treatment),
                      std::move(outcome), std::move(mask));
    return ld;
  };
  in.main = build(main, main_cols, "input");
  if (holdout != nullptr) in.holdout = build(*holdout, hold_cols, "holdout");
  return in;
}

WeightVector read_weights(const std::filesystem::path& path,
                          const std::vector<std::string>& names) {
  const auto t = read_csv(path);
  if (t.header.size() != 2) {
    input_error(fmt::format("{}: expected two columns covariate,weight",
                            path.string()));
  }
  std::map<std::string, double> by_name;
  for (const auto& row : t.rows) {
    const double w = parse_number(row[1], "weight of " + row[0]);
    if (!by_name.emplace(row[0], w).second) {
      input_error(fmt::format("{}: covariate '{}' listed twice", path.string(),
                              row[0]));
    }
  }
  std::vector<double> w;
  for (const auto& name : names) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      input_error(fmt::format("{}: no weight for covariate '{}'", path.string(),
                              name));
    }
    w.push_back(it->second);
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    input_error(fmt::format("{}: weight for unknown covariate '{}'",
                            path.string(), by_name.begin()->first));
  }
  return WeightVector(std::move(w));
}

std::string format_number(double v) { return fmt::format("{}", v); }

double parse_number(const std::string& s, const std::string& what) {
  const auto v = try_number(s);
  if (!v) input_error(fmt::format("{}: '{}' is not a number", what, s));
  return *v;
}

std::string format_group_id(const GroupId& id) {
  return fmt::format("{}:{}", id.iteration, id.rank);
}

std::string groups_jsonl(const MatchState& state, const Dataset& d,
                         const Ingested& in) {
  std::string out;
  for (const auto& g : state.groups) {
    Json line;
    line["id"] = format_group_id(g.id);
    line["iteration"] = g.id.iteration;
    Json retained = Json::array();
    Json key = Json::array();
    for (std::size_t k = 0; k < g.retained.size(); ++k) {
      const auto j = g.retained.members()[k];
      retained.push_back(in.names[j]);
      key.push_back(in.labels[j].at(g.key_values[k]));
    }
    line["retained"] = std::move(retained);
    line["key_values"] = std::move(key);
    line["n_treated"] = g.n_treated;
    line["n_control"] = g.n_control;
    Json members = Json::array();
    std::size_t next_main = 0;
    for (auto u : g.members) {
      const bool is_main =
          next_main < g.main_members.size() && g.main_members[next_main] == u;
      if (is_main) ++next_main;
      members.push_back(Json{{"unit", in.main.unit_ids[u]},
                             {"treated", d.treated(u) ? 1 : 0},
                             {"role", is_main ? "main" : "aux"}});
    }
    line["members"] = std::move(members);
    out += line.dump();
    out.push_back('\n');
  }
  return out;
}

std::string cate_csv(const std::vector<CateRecord>& records,
                     const std::vector<std::string>& unit_ids) {
  std::string out = "unit_id,treated,group_id,cate,n_treated,n_control\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{}\n", csv_field(unit_ids[r.unit]),
                       r.treated ? 1 : 0, format_group_id(r.group_id),
                       format_number(r.cate), r.n_treated, r.n_control);
  }
  return out;
}

std::string trace_csv(const std::vector<TraceEntry>& trace,
                      const std::vector<std::string>& names) {
  std::string out =
      "iteration,dropped,set_weight,pe,bf,mq,newly_matched_treated,"
      "newly_matched_control,unmatched_treated,unmatched_control,"
      "groups_formed\n";
  for (const auto& t : trace) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", t.iteration,
                       csv_field(join_names(t.dropped, names)),
                       format_number(t.set_weight), format_number(t.pe),
                       format_number(t.bf), format_number(t.mq),
                       t.newly_matched_treated, t.newly_matched_control,
                       t.unmatched_treated, t.unmatched_control,
                       t.groups_formed);
  }
  return out;
}

std::vector<GroupLine> read_groups_jsonl(const std::filesystem::path& path) {
  const auto text = read_file(path);
  std::vector<GroupLine> out;
  std::set<std::string> ids;
  std::istringstream lines(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(lines, raw)) {
    ++lineno;
    if (raw.empty()) continue;
    const auto where = fmt::format("{}:{}", path.string(), lineno);
    Json j;
    try {
      j = Json::parse(raw);
    } catch (const Json::exception& e) {
      input_error(fmt::format("{}: {}", where, e.what()));
    }
    try {
      GroupLine g;
      g.id = j.at("id").get<std::string>();
      g.iteration = j.at("iteration").get<std::size_t>();
      g.retained = j.at("retained").get<std::vector<std::string>>();
      g.key_values = j.at("key_values").get<std::vector<std::string>>();
      std::size_t n_t = 0;
      std::size_t n_c = 0;
      bool any_main = false;
      for (const auto& m : j.at("members")) {
        GroupLine::Member mem;
        mem.unit = m.at("unit").get<std::string>();
        mem.treated = m.at("treated").get<int>() == 1;
        const auto role = m.at("role").get<std::string>();
        if (role != "main" && role != "aux") {
          input_error(fmt::format("{}: unknown role '{}'", where, role));
        }
        mem.main = role == "main";
        any_main = any_main || mem.main;
        (mem.treated ? n_t : n_c)++;
        g.members.push_back(std::move(mem));
      }
      if (g.retained.size() != g.key_values.size() || g.retained.empty()) {
        input_error(fmt::format("{}: retained and key_values disagree", where));
      }
      if (n_t == 0 || n_c == 0 || !any_main) {
        input_error(fmt::format("{}: group lacks a treated, control or main "
                                "member",
                                where));
      }
      if (n_t != j.at("n_treated").get<std::size_t>() ||
          n_c != j.at("n_control").get<std::size_t>()) {
        input_error(fmt::format("{}: member counts disagree", where));
      }
      if (!ids.insert(g.id).second) {
        input_error(fmt::format("{}: duplicate group id {}", where, g.id));
      }
      out.push_back(std::move(g));
    } catch (const Json::exception& e) {
      input_error(fmt::format("{}: {}", where, e.what()));
    }
  }
  return out;
}

std::vector<CateRow> read_cate_csv(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  const std::vector<std::string> expected{"unit_id", "treated", "group_id",
                                          "cate", "n_treated", "n_control"};
  if (t.header != expected) {
    input_error(fmt::format("{}: unexpected header", path.string()));
  }
  std::vector<CateRow> out;
  for (const auto& row : t.rows) {
    CateRow r;
    r.unit_id = row[0];
    if (row[1] != "0" && row[1] != "1") {
      input_error(fmt::format("{}: bad treated flag '{}'", path.string(), row[1]));
    }
    r.treated = row[1] == "1";
    r.group_id = row[2];
    r.cate = parse_number(row[3], "cate");
    r.n_treated = parse_count(row[4], "n_treated");
    r.n_control = parse_count(row[5], "n_control");
    if (r.n_treated == 0 || r.n_control == 0) {
      input_error(fmt::format("{}: group {} lacks an arm", path.string(),
                              r.group_id));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  if (t.header.size() != 11 || t.header[0] != "iteration") {
    input_error(fmt::format("{}: unexpected header", path.string()));
  }
  std::vector<TraceRow> out;
  for (const auto& row : t.rows) {
    TraceRow r;
    r.iteration = parse_count(row[0], "iteration");
    r.dropped = split(row[1], ';');
    r.set_weight = parse_number(row[2], "set_weight");
    r.pe = parse_number(row[3], "pe");
    r.bf = parse_number(row[4], "bf");
    r.mq = parse_number(row[5], "mq");
    r.newly_matched_treated = parse_count(row[6], "newly_matched_treated");
    r.newly_matched_control = parse_count(row[7], "newly_matched_control");
    r.unmatched_treated = parse_count(row[8], "unmatched_treated");
    r.unmatched_control = parse_count(row[9], "unmatched_control");
    r.groups_formed = parse_count(row[10], "groups_formed");
    out.push_back(std::move(r));
  }
  return out;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

}  // namespace aemr
