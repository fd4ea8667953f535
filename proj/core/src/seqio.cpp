#include "seqgan/seqio.hpp"

#include "seqgan/error.hpp"
#include "seqgan/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace seqgan::seqio {

// ---------------------------------------------------------------------------
// Alphabet

Alphabet::Alphabet(std::string_view symbols) : symbols_(symbols) {
  index_.fill(-1);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    auto& slot = index_[static_cast<unsigned char>(symbols_[i])];
    if (slot >= 0) throw ConfigError(std::string("alphabet: duplicate symbol '") + symbols_[i] + "'");
    slot = static_cast<std::int16_t>(i);
  }
  if (symbols_.empty()) throw ConfigError("alphabet: empty");
}

Alphabet Alphabet::strict() { return Alphabet("ACDEFGHIKLMNPQRSTVWY"); }

Alphabet Alphabet::extended() { return Alphabet("ACDEFGHIKLMNPQRSTVWYXBZJUO-*"); }

std::optional<std::size_t> Alphabet::first_invalid(std::string_view residues) const noexcept {
  for (std::size_t i = 0; i < residues.size(); ++i) {
    if (!contains(residues[i])) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// LabeledCorpus

LabeledCorpus::LabeledCorpus(std::vector<SequenceRecord> records) : records_(std::move(records)) {
  for (const auto& r : records_) ids_.emplace(r.label, 0);
  names_.reserve(ids_.size());
  for (auto& [name, id] : ids_) {
    id = static_cast<Label>(names_.size());
    names_.push_back(name);
  }
  counts_.assign(names_.size(), 0);
  labels_.reserve(records_.size());
  for (const auto& r : records_) {
    const Label id = ids_.find(r.label)->second;
    labels_.push_back(id);
    ++counts_[static_cast<std::size_t>(id)];
  }
}

Label LabeledCorpus::class_id(std::string_view name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) throw ConfigError("unknown class '" + std::string(name) + "'");
  return it->second;
}

std::size_t LabeledCorpus::min_length() const noexcept {
  std::size_t m = records_.empty() ? 0 : SIZE_MAX;
  for (const auto& r : records_) m = std::min(m, r.residues.size());
  return m;
}

std::size_t LabeledCorpus::max_length() const noexcept {
  std::size_t m = 0;
  for (const auto& r : records_) m = std::max(m, r.residues.size());
  return m;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::vector<std::string_view> split_on(std::string_view text, char delimiter) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(delimiter, start);
    if (pos == std::string_view::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

/// Empty string when valid, else the reason.
std::string check_residues(const Alphabet& alphabet, std::string_view residues) {
  if (residues.empty()) return "empty sequence";
  if (auto pos = alphabet.first_invalid(residues)) {
    return std::string("illegal residue '") + residues[*pos] + "' at position " + std::to_string(*pos + 1);
  }
  return {};
}

/// Appends `record` or reports why it was rejected.
void accept(std::vector<SequenceRecord>& out, SequenceRecord record, const Alphabet& alphabet,
            bool skip_invalid, const std::string& where, ParseStats& stats) {
  const auto problem = check_residues(alphabet, record.residues);
  if (problem.empty()) {
    out.push_back(std::move(record));
    return;
  }
  if (!skip_invalid) throw ValidationError(where + ": " + problem);
  ++stats.skipped;
}

void log_skipped(const ParseStats& stats) {
  if (stats.skipped > 0) spdlog::warn("skipped {} invalid record(s)", stats.skipped);
}

}  // namespace

LabeledCorpus parse_fasta(std::istream& in, const FastaOptions& options, ParseStats* stats_out) {
  if (options.id_field == 0 || options.label_field == 0) {
    throw ConfigError("FASTA header fields are 1-based");
  }
  ParseStats stats;
  std::vector<SequenceRecord> records;
  std::optional<SequenceRecord> current;
  std::size_t current_line = 0;

  auto flush = [&] {
    if (!current) return;
    accept(records, std::move(*current), options.alphabet, options.skip_invalid,
           "record '" + current->id + "' (line " + std::to_string(current_line) + ")", stats);
    current.reset();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    if (line.front() == '>') {
      flush();
      const auto fields = split_on(std::string_view(line).substr(1), options.header_delimiter);
      const auto needed = std::max(options.id_field, options.label_field);
      if (fields.size() < needed) {
        throw ParseError("malformed FASTA header: expected at least " + std::to_string(needed) + " fields", line_no);
      }
      SequenceRecord r;
      r.id = std::string(trim(fields[options.id_field - 1]));
      r.label = std::string(trim(fields[options.label_field - 1]));
      if (r.id.empty() || r.label.empty()) throw ParseError("malformed FASTA header: empty id or label", line_no);
      current = std::move(r);
      current_line = line_no;
      continue;
    }
    if (!current) throw ParseError("sequence data before the first FASTA header", line_no);
    for (char c : line) {
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      current->residues.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  flush();
  log_skipped(stats);
  if (stats_out) *stats_out = stats;
  return LabeledCorpus(std::move(records));
}

namespace {

/// Splits one delimited line honoring double quotes ("" escapes a quote).
std::vector<std::string> split_delimited(std::string_view line, char delimiter, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back().push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"' && fields.back().empty()) {
      quoted = true;
    } else if (c == delimiter) {
      fields.emplace_back();
    } else {
      fields.back().push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  return fields;
}

std::size_t column_of(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == name) return i;
  }
  throw ConfigError("missing column '" + name + "'");
}

}  // namespace

LabeledCorpus parse_delimited(std::istream& in, const DelimitedOptions& options, ParseStats* stats_out) {
  ParseStats stats;
  std::string line;
  std::size_t line_no = 0;

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    header = split_delimited(line, options.delimiter, line_no);
    break;
  }
  if (header.empty()) throw ParseError("delimited input has no header row", line_no);

  const auto seq_col = column_of(header, options.seq_column);
  const auto label_col = column_of(header, options.label_column);
  const std::optional<std::size_t> id_col =
      options.id_column ? std::optional(column_of(header, *options.id_column)) : std::nullopt;

  std::vector<SequenceRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    ++row;
    auto fields = split_delimited(line, options.delimiter, line_no);
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                           " fields, header has " + std::to_string(header.size()),
                       line_no);
    }
    SequenceRecord r;
    r.id = id_col ? std::string(trim(fields[*id_col])) : std::to_string(row);
    r.label = std::string(trim(fields[label_col]));
    for (char c : trim(fields[seq_col])) {
      r.residues.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    if (r.label.empty()) throw ParseError("row " + std::to_string(row) + " has an empty label", line_no);
    accept(records, std::move(r), options.alphabet, options.skip_invalid,
           "row " + std::to_string(row) + " (line " + std::to_string(line_no) + ")", stats);
  }
  log_skipped(stats);
  if (stats_out) *stats_out = stats;
  return LabeledCorpus(std::move(records));
}

void write_fasta(std::ostream& out, const LabeledCorpus& corpus, char header_delimiter, std::size_t width) {
  if (width == 0) width = SIZE_MAX;
  for (const auto& r : corpus.records()) {
    out << '>' << r.id << header_delimiter << r.label << '\n';
    for (std::size_t i = 0; i < r.residues.size(); i += width) {
      out << std::string_view(r.residues).substr(i, width) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Stratified split

std::vector<std::size_t> stratified_test_counts(const std::vector<std::size_t>& class_counts,
                                                double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  const std::size_t total = std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(total) + 0.5));

  std::vector<std::size_t> out(class_counts.size());
  std::vector<double> remainder(class_counts.size());
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    const double quota = test_fraction * static_cast<double>(class_counts[c]);
    out[c] = static_cast<std::size_t>(std::floor(quota));
    remainder[c] = quota - static_cast<double>(out[c]);
    assigned += out[c];
  }

  // Largest remainder first; equal remainders go to the lower class id.
  std::vector<std::size_t> order(class_counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i) {
    const auto c = order[i];
    if (out[c] < class_counts[c] && remainder[c] > 0.0) {
      ++out[c];
      ++assigned;
    }
  }
  return out;
}

SplitIndices stratified_split(const LabeledCorpus& corpus, double test_fraction, std::uint64_t seed) {
  const auto& counts = corpus.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < 2) {
      throw ValidationError("class '" + corpus.class_name(static_cast<Label>(c)) +
                            "' has fewer than 2 members; cannot stratify");
    }
  }
  const auto test_counts = stratified_test_counts(counts, test_fraction);

  std::vector<std::vector<std::size_t>> members(counts.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    members[static_cast<std::size_t>(corpus.labels()[i])].push_back(i);
  }

  SplitIndices split;
  split.seed = seed;
  Rng rng(derive_seed(seed, "stratified_split"));
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& m = members[c];
    rng.shuffle(std::span(m));
    split.test.insert(split.test.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(test_counts[c]));
    split.train.insert(split.train.end(), m.begin() + static_cast<std::ptrdiff_t>(test_counts[c]), m.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace seqgan::seqio
