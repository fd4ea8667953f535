#include "seqgan/container.hpp"

#include "seqgan/error.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace seqgan {
namespace {

constexpr std::array<char, 8> kMagic = {'S', 'E', 'Q', 'G', 'A', 'N', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes;
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw IoError("container: truncated length field");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

void Container::add(std::string name, std::vector<std::size_t> shape, std::vector<double> data) {
  if (product(shape) != data.size()) {
    throw ShapeError("container: array '" + name + "' shape does not match element count");
  }
  if (has(name)) throw ConfigError("container: duplicate array '" + name + "'");
  arrays_.push_back({std::move(name), std::move(shape), std::move(data)});
}

void Container::add(std::string name, std::span<const double> data) {
  add(std::move(name), {data.size()}, std::vector<double>(data.begin(), data.end()));
}

bool Container::has(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return true;
  }
  return false;
}

const Container::Array& Container::array(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return a;
  }
  throw IoError("container: missing array '" + name + "'");
}

void Container::write(std::ostream& out) const {
  nlohmann::json header;
  header["kind"] = kind_;
  header["meta"] = meta_;
  auto index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& a : arrays_) {
    index.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.data.size()}});
    offset += a.data.size();
  }
  header["arrays"] = std::move(index);
  const std::string text = header.dump();

  out.write(kMagic.data(), kMagic.size());
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : arrays_) {
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(a.data.data()),
                static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    } else {
      for (double d : a.data) put_u64(out, std::bit_cast<std::uint64_t>(d));
    }
  }
  if (!out) throw IoError("container: write failed");
}

Container Container::read(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError("container: bad magic");
  const auto length = get_u64(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw IoError("container: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("container: bad header: ") + e.what());
  }

  Container c(header.at("kind").get<std::string>());
  c.meta_ = header.at("meta");
  for (const auto& entry : header.at("arrays")) {
    Array a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<std::vector<std::size_t>>();
    a.data.resize(entry.at("count").get<std::size_t>());
    if (product(a.shape) != a.data.size()) throw IoError("container: inconsistent array '" + a.name + "'");
    if constexpr (std::endian::native == std::endian::little) {
      in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
      if (!in) throw IoError("container: truncated array '" + a.name + "'");
    } else {
      for (double& d : a.data) d = std::bit_cast<double>(get_u64(in));
    }
    c.arrays_.push_back(std::move(a));
  }
  return c;
}

void Container::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write(out);
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read(in);
}

Container Container::load(const std::filesystem::path& path, const std::string& expected_kind) {
  auto c = load(path);
  if (c.kind() != expected_kind) {
    throw IoError("'" + path.string() + "' holds a " + c.kind() + ", expected " + expected_kind);
  }
  return c;
}

}  // namespace seqgan
