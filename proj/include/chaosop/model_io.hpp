#pragma once

// Versioned binary container for fitted surrogates.
//
//   magic "CHAOSOPM" | u32 version | u32 section count
//   per section: 4-byte tag | u64 payload length | payload | u32 crc32(tag + payload)
//
// Integers and doubles are little-endian; matrices are column-major.
// Sections: META (JSON text), SETA, SETB (index sets), DMAP (domain box),
// COEF (coefficients) and optionally KLMD (KL metadata of the inputs).

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <zlib.h>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "chaosop/error.hpp"
#include "chaosop/io.hpp"
#include "chaosop/operator_fit.hpp"

namespace chaosop {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[8] = {'C', 'H', 'A', 'O', 'S', 'O', 'P', 'M'};
inline constexpr const char* kLibraryVersion = "0.1.0";

/// Any malformed model file.
class ModelFormatError : public Error {
 public:
  using Error::Error;
};
class ModelVersionError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class ModelChecksumError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class ModelTruncatedError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
/// A well-formed model that does not match the problem it is used with.
class ModelIncompatibleError : public Error {
 public:
  using Error::Error;
};

struct KlRecord {
  std::string name;
  std::uint64_t offset = 0;
  double sigma = 0.0;
  double ell = 0.0;
  double mean = 0.0;
  double captured_fraction = 0.0;
  Eigen::VectorXd eigenvalues;

  friend bool operator==(const KlRecord&, const KlRecord&) = default;
};

struct ModelMeta {
  std::string problem;
  std::string mode;
  std::uint64_t seed = 0;
  std::vector<std::string> axis_names;
  std::string library_version = kLibraryVersion;

  friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

struct SavedModel {
  CoefficientMatrix coefficients;
  ModelMeta meta;
  std::vector<KlRecord> kl;
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xffU));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xffU));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(const char* p, std::size_t n, std::string where) : p_(p), n_(n), where_(std::move(where)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  std::string str() {
    const std::uint64_t len = u64();
    need(len);
    std::string s(p_ + pos_, static_cast<std::size_t>(len));
    pos_ += static_cast<std::size_t>(len);
    return s;
  }
  const char* take(std::uint64_t len) {
    need(len);
    const char* at = p_ + pos_;
    pos_ += static_cast<std::size_t>(len);
    return at;
  }
  // Element count that must fit in the remaining bytes at `width` bytes each.
  std::uint64_t count(std::uint64_t width) {
    const std::uint64_t c = u64();
    if (width > 0 && c > (n_ - pos_) / width) throw ModelTruncatedError(where_ + ": declared size exceeds the data");
    return c;
  }
  bool done() const { return pos_ == n_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::uint64_t k) const {
    if (k > n_ - pos_) throw ModelTruncatedError(where_ + ": unexpected end of data");
  }
  const char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string where_;
};

inline std::uint32_t crc32_of(const std::string& tag, const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(tag.data()), static_cast<uInt>(tag.size()));
  // zlib takes uInt lengths; feed large payloads in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::string encode_set(const MultiIndexSet& s) {
  ByteWriter w;
  w.u64(s.dim());
  w.u64(s.size());
  w.i64(s.total_degree());
  w.f64(s.q_norm());
  w.u64(s.hash());
  for (int e : s.raw()) w.u32(static_cast<std::uint32_t>(e));
  return std::move(w.bytes());
}

inline MultiIndexSet decode_set(const std::string& payload, const std::string& tag) {
  ByteReader r(payload.data(), payload.size(), tag);
  const std::uint64_t dim = r.u64(), size = r.u64();
  const auto p = static_cast<int>(r.i64());
  const double q = r.f64();
  const std::uint64_t hash = r.u64();
  if (dim == 0 || size == 0) throw ModelFormatError(tag + ": empty index set");
  if (size > r.remaining() / 4 / dim) throw ModelTruncatedError(tag + ": declared size exceeds the data");
  std::vector<int> data(static_cast<std::size_t>(dim * size));
  for (auto& e : data) e = static_cast<int>(r.u32());
  if (!r.done()) throw ModelFormatError(tag + ": trailing bytes");
  auto s = MultiIndexSet::from_raw(static_cast<std::size_t>(dim), p, q, std::move(data));
  if (s.hash() != hash) throw ModelChecksumError(tag + ": index-set hash does not match its contents");
  return s;
}

}  // namespace detail

/// Serialized bytes; identical models give identical bytes.
inline std::string serialize_model(const SavedModel& m) {
  m.coefficients.validate();
  std::vector<std::pair<std::string, std::string>> sections;

  nlohmann::ordered_json meta;
  meta["problem"] = m.meta.problem;
  meta["mode"] = m.meta.mode;
  meta["seed"] = m.meta.seed;
  meta["axis_names"] = m.meta.axis_names;
  meta["stochastic_family"] = std::string(to_string(m.coefficients.family));
  meta["spatial_family"] = "legendre";
  meta["library_version"] = m.meta.library_version;
  sections.emplace_back("META", meta.dump());
  sections.emplace_back("SETA", detail::encode_set(m.coefficients.set_a));
  sections.emplace_back("SETB", detail::encode_set(m.coefficients.set_b));
  {
    detail::ByteWriter w;
    const auto& map = m.coefficients.map;
    w.u64(map.dim());
    for (std::size_t k = 0; k < map.dim(); ++k) {
      w.f64(map.lo(k));
      w.f64(map.hi(k));
    }
    sections.emplace_back("DMAP", std::move(w.bytes()));
  }
  {
    detail::ByteWriter w;
    const auto& v = m.coefficients.values;
    w.u64(static_cast<std::uint64_t>(v.rows()));
    w.u64(static_cast<std::uint64_t>(v.cols()));
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v.data()[i]);
    sections.emplace_back("COEF", std::move(w.bytes()));
  }
  if (!m.kl.empty()) {
    detail::ByteWriter w;
    w.u64(m.kl.size());
    for (const auto& k : m.kl) {
      w.str(k.name);
      w.u64(k.offset);
      w.f64(k.sigma);
      w.f64(k.ell);
      w.f64(k.mean);
      w.f64(k.captured_fraction);
      w.u64(static_cast<std::uint64_t>(k.eigenvalues.size()));
      for (Eigen::Index i = 0; i < k.eigenvalues.size(); ++i) w.f64(k.eigenvalues(i));
    }
    sections.emplace_back("KLMD", std::move(w.bytes()));
  }

  detail::ByteWriter out;
  out.raw(kModelMagic, sizeof kModelMagic);
  out.u32(kModelFormatVersion);
  out.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [tag, payload] : sections) {
    out.raw(tag.data(), 4);
    out.u64(payload.size());
    out.raw(payload.data(), payload.size());
    out.u32(detail::crc32_of(tag, payload.data(), payload.size()));
  }
  return std::move(out.bytes());
}

inline SavedModel deserialize_model(const std::string& bytes) {
  detail::ByteReader r(bytes.data(), bytes.size(), "model header");
  const char* magic = r.take(sizeof kModelMagic);
  if (std::memcmp(magic, kModelMagic, sizeof kModelMagic) != 0) throw ModelFormatError("not a chaosop model file");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw ModelVersionError("model format version " + std::to_string(version) + " (this build reads " +
                            std::to_string(kModelFormatVersion) + ")");
  const std::uint32_t count = r.u32();

  std::map<std::string, std::string> sections;
  for (std::uint32_t s = 0; s < count; ++s) {
    const std::string tag(r.take(4), 4);
    const std::uint64_t len = r.u64();
    const char* payload = r.take(len);
    const std::uint32_t crc = r.u32();
    if (crc != detail::crc32_of(tag, payload, static_cast<std::size_t>(len)))
      throw ModelChecksumError("section " + tag + ": checksum mismatch");
    if (!sections.emplace(tag, std::string(payload, static_cast<std::size_t>(len))).second)
      throw ModelFormatError("duplicate section " + tag);
  }
  if (!r.done()) throw ModelFormatError("trailing bytes after the last section");
  for (const char* need : {"META", "SETA", "SETB", "DMAP", "COEF"})
    if (!sections.count(need)) throw ModelFormatError(std::string("missing section ") + need);

  SavedModel m;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(sections["META"]);
    m.meta.problem = meta.at("problem").get<std::string>();
    m.meta.mode = meta.at("mode").get<std::string>();
    m.meta.seed = meta.at("seed").get<std::uint64_t>();
    m.meta.axis_names = meta.at("axis_names").get<std::vector<std::string>>();
    m.meta.library_version = meta.at("library_version").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("META: ") + e.what());
  }
  const std::string family = meta.value("stochastic_family", "hermite");
  if (family != "hermite" && family != "legendre") throw ModelFormatError("META: unknown family " + family);

  auto set_a = detail::decode_set(sections["SETA"], "SETA");
  auto set_b = detail::decode_set(sections["SETB"], "SETB");

  std::vector<double> lo, hi;
  {
    const auto& p = sections["DMAP"];
    detail::ByteReader d(p.data(), p.size(), "DMAP");
    const std::uint64_t dim = d.count(16);
    for (std::uint64_t k = 0; k < dim; ++k) {
      lo.push_back(d.f64());
      hi.push_back(d.f64());
    }
    if (!d.done()) throw ModelFormatError("DMAP: trailing bytes");
  }

  Eigen::MatrixXd values;
  {
    const auto& p = sections["COEF"];
    detail::ByteReader c(p.data(), p.size(), "COEF");
    const std::uint64_t rows = c.u64(), cols = c.u64();
    if (rows != set_b.size() || cols != set_a.size())
      throw ModelFormatError("COEF: dimensions disagree with the index sets");
    if (rows * cols > c.remaining() / 8) throw ModelTruncatedError("COEF: declared size exceeds the data");
    values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < values.size(); ++i) values.data()[i] = c.f64();
    if (!c.done()) throw ModelFormatError("COEF: trailing bytes");
  }

  if (auto it = sections.find("KLMD"); it != sections.end()) {
    detail::ByteReader k(it->second.data(), it->second.size(), "KLMD");
    const std::uint64_t n = k.count(8);
    for (std::uint64_t i = 0; i < n; ++i) {
      KlRecord rec;
      rec.name = k.str();
      rec.offset = k.u64();
      rec.sigma = k.f64();
      rec.ell = k.f64();
      rec.mean = k.f64();
      rec.captured_fraction = k.f64();
      const std::uint64_t modes = k.count(8);
      rec.eigenvalues.resize(static_cast<Eigen::Index>(modes));
      for (Eigen::Index e = 0; e < rec.eigenvalues.size(); ++e) rec.eigenvalues(e) = k.f64();
      m.kl.push_back(std::move(rec));
    }
    if (!k.done()) throw ModelFormatError("KLMD: trailing bytes");
  }

  try {
    m.coefficients = CoefficientMatrix(std::move(values), std::move(set_a), std::move(set_b),
                                       DomainMap(std::move(lo), std::move(hi)),
                                       family == "hermite" ? Family::HermiteProbabilist : Family::Legendre);
  } catch (const Error& e) {
    throw ModelFormatError(std::string("inconsistent model: ") + e.what());
  }
  return m;
}

inline void save_model(const std::filesystem::path& path, const SavedModel& m) {
  atomic_write(path, serialize_model(m));
}

inline SavedModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

/// Throws ModelIncompatibleError unless the model was fitted with exactly
/// these index sets, domain and input KL spectra.
inline void check_compatible(const SavedModel& m, const MultiIndexSet& set_a, const MultiIndexSet& set_b,
                             const DomainMap& map, const std::vector<KlRecord>& kl) {
  auto hex = [](std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  };
  const auto& c = m.coefficients;
  if (c.set_a.hash() != set_a.hash() || !(c.set_a == set_a))
    throw ModelIncompatibleError("stochastic index set differs: model " + hex(c.set_a.hash()) + ", requested " +
                                 hex(set_a.hash()));
  if (c.set_b.hash() != set_b.hash() || !(c.set_b == set_b))
    throw ModelIncompatibleError("spatial index set differs: model " + hex(c.set_b.hash()) + ", requested " +
                                 hex(set_b.hash()));
  if (c.map.dim() != map.dim()) throw ModelIncompatibleError("domain dimension differs");
  for (std::size_t k = 0; k < map.dim(); ++k)
    if (c.map.lo(k) != map.lo(k) || c.map.hi(k) != map.hi(k)) throw ModelIncompatibleError("domain bounds differ");
  if (m.kl.size() != kl.size()) throw ModelIncompatibleError("input field count differs");
  for (std::size_t i = 0; i < kl.size(); ++i) {
    const auto& a = m.kl[i];
    const auto& b = kl[i];
    if (a.offset != b.offset || a.eigenvalues.size() != b.eigenvalues.size() || a.sigma != b.sigma || a.ell != b.ell ||
        a.mean != b.mean)
      throw ModelIncompatibleError("input field '" + a.name + "' differs");
    if ((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff() > 1e-12 * b.eigenvalues.cwiseAbs().maxCoeff())
      throw ModelIncompatibleError("input field '" + a.name + "' has a different KL spectrum");
  }
}

}  // namespace chaosop
