#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace seqgan {

/// Binary container shared by feature matrices, network checkpoints and
/// fitted classifiers.
///
/// Layout:
///   8 bytes   magic "SEQGAN01"
///   8 bytes   header length L, unsigned little-endian
///   L bytes   UTF-8 JSON header: {"kind", "meta", "arrays": [{name, shape, offset, count}]}
///   ...       every array's elements as little-endian IEEE-754 binary64, in order
///
/// Reading back a written container is bit-exact.
class Container {
 public:
  struct Array {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
  };

  Container() = default;
  explicit Container(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }
  nlohmann::json& meta() noexcept { return meta_; }
  const nlohmann::json& meta() const noexcept { return meta_; }

  void add(std::string name, std::vector<std::size_t> shape, std::vector<double> data);
  void add(std::string name, std::span<const double> data);

  bool has(const std::string& name) const;
  const Array& array(const std::string& name) const;
  const std::vector<Array>& arrays() const noexcept { return arrays_; }

  void write(std::ostream& out) const;
  static Container read(std::istream& in);

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

  /// Reads and checks the kind tag.
  static Container load(const std::filesystem::path& path, const std::string& expected_kind);

 private:
  std::string kind_;
  nlohmann::json meta_ = nlohmann::json::object();
  std::vector<Array> arrays_;
};

}  // namespace seqgan
