#pragma once

#include "seqgan/types.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace seqgan::seqio {

/// Residue alphabet with O(1) character lookup.
///
/// Strict mode holds the 20 canonical amino acids in alphabetical order of
/// their one-letter codes; extended mode appends X B Z J U O - *. The order
/// defines k-mer index encoding, so it is part of the embedding contract.
class Alphabet {
 public:
  enum class Mode { Strict, Extended };

  static Alphabet strict();
  static Alphabet extended();
  static Alphabet of(Mode mode) { return mode == Mode::Strict ? strict() : extended(); }

  /// Custom alphabet, mostly for tests. Characters must be unique.
  explicit Alphabet(std::string_view symbols);

  std::size_t size() const noexcept { return symbols_.size(); }
  const std::string& symbols() const noexcept { return symbols_; }
  char symbol(std::size_t i) const { return symbols_.at(i); }
  bool contains(char c) const noexcept { return index_[static_cast<unsigned char>(c)] >= 0; }
  /// -1 when c is not in the alphabet.
  int index(char c) const noexcept { return index_[static_cast<unsigned char>(c)]; }

  /// Position of the first residue outside the alphabet, if any.
  std::optional<std::size_t> first_invalid(std::string_view residues) const noexcept;

 private:
  std::string symbols_;
  std::array<std::int16_t, 256> index_{};
};

struct SequenceRecord {
  std::string id;
  std::string residues;
  std::string label;

  bool operator==(const SequenceRecord&) const = default;
};

/// Records plus a label index. Immutable once built.
///
/// Class ids are assigned in lexicographic order of class names so that the
/// encoding does not depend on record order.
class LabeledCorpus {
 public:
  LabeledCorpus() = default;
  explicit LabeledCorpus(std::vector<SequenceRecord> records);

  const std::vector<SequenceRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const SequenceRecord& operator[](std::size_t i) const { return records_[i]; }

  std::size_t n_classes() const noexcept { return names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return names_; }
  Label class_id(std::string_view name) const;
  const std::string& class_name(Label id) const { return names_.at(static_cast<std::size_t>(id)); }

  /// Class id of each record, aligned with records().
  const LabelVector& labels() const noexcept { return labels_; }
  /// Count per class id.
  const std::vector<std::size_t>& class_counts() const noexcept { return counts_; }

  std::size_t min_length() const noexcept;
  std::size_t max_length() const noexcept;

 private:
  std::vector<SequenceRecord> records_;
  std::vector<std::string> names_;
  std::map<std::string, Label, std::less<>> ids_;
  LabelVector labels_;
  std::vector<std::size_t> counts_;
};

struct FastaOptions {
  Alphabet alphabet = Alphabet::strict();
  /// Header field separator.
  char header_delimiter = '|';
  /// 1-based field of the header (after '>') holding the record id.
  std::size_t id_field = 1;
  /// 1-based field holding the class label.
  std::size_t label_field = 2;
  /// Drop invalid records instead of failing.
  bool skip_invalid = false;
};

struct DelimitedOptions {
  Alphabet alphabet = Alphabet::strict();
  std::string seq_column = "sequence";
  std::string label_column = "label";
  /// Column holding record ids; ids are 1-based row numbers when unset.
  std::optional<std::string> id_column;
  char delimiter = ',';
  bool skip_invalid = false;
};

struct ParseStats {
  std::size_t skipped = 0;
};

/// Parses FASTA. Residues are upper-cased; whitespace inside sequence lines
/// is dropped.
LabeledCorpus parse_fasta(std::istream& in, const FastaOptions& options, ParseStats* stats = nullptr);

/// Parses CSV/TSV with a header row. Fields may be double-quoted.
LabeledCorpus parse_delimited(std::istream& in, const DelimitedOptions& options, ParseStats* stats = nullptr);

/// Writes ">id<delim>label" headers with sequences folded at `width` columns.
void write_fasta(std::ostream& out, const LabeledCorpus& corpus, char header_delimiter = '|',
                 std::size_t width = 60);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  bool operator==(const SplitIndices&) const = default;
};

/// Per-class test counts for a stratified split (largest-remainder
/// apportionment of test_fraction * count, total = round(test_fraction * n)).
std::vector<std::size_t> stratified_test_counts(const std::vector<std::size_t>& class_counts,
                                                double test_fraction);

/// Stratified train/test split; both index lists are sorted ascending.
SplitIndices stratified_split(const LabeledCorpus& corpus, double test_fraction, std::uint64_t seed);

}  // namespace seqgan::seqio
