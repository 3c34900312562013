#include "bnnp/data_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "bnnp/errors.hpp"

namespace bnnp {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'B', 'N', 'N', 'D', 'A', 'T', 'A', '\0'};

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string("BNNDATA truncated reading ") + what + ": expected " +
                        std::to_string(pos_ + n) + " bytes, got " + std::to_string(bytes_.size()));
  }

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_matrix(std::string& out, const RowMatrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) put(out, static_cast<float>(m(i, j)));
}

RowMatrix get_matrix(Reader& in, Index rows, Index cols, const char* what) {
  in.need(static_cast<std::size_t>(rows * cols) * sizeof(float), what);
  RowMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<double>(in.get<float>(what));
  return m;
}

std::size_t packed_bytes(const BitMatrix& b) { return static_cast<std::size_t>((b.rows() * b.cols() + 7) / 8); }

void put_bits(std::string& out, const BitMatrix& b) {
  std::string packed(packed_bytes(b), '\0');
  Index k = 0;
  for (Index r = 0; r < b.rows(); ++r)
    for (Index c = 0; c < b.cols(); ++c, ++k)
      if (b.get(r, c)) packed[static_cast<std::size_t>(k / 8)] |= static_cast<char>(1u << (k % 8));
  out += packed;
}

BitMatrix get_bits(Reader& in, Index rows, Index cols, const char* what) {
  BitMatrix b(rows, cols);
  const auto bytes = in.take(packed_bytes(b), what);
  Index k = 0;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c, ++k)
      b.set(r, c, (static_cast<std::uint8_t>(bytes[static_cast<std::size_t>(k / 8)]) >> (k % 8)) & 1u);
  return b;
}

}  // namespace

std::string encode_dataset(const Dataset& d) {
  if (d.targets.rows() != d.features.rows()) throw InvalidShape("features and targets differ in rows");
  json meta = {
      {"task", to_string(d.task)},
      {"rows", d.features.rows()},
      {"feature_dim", d.features.cols()},
      {"target_dim", d.targets.cols()},
      {"mask_cols", d.masks.empty() ? 0 : d.masks.cols()},
      {"flag_cols", d.flags.empty() ? 0 : d.flags.cols()},
      {"meta", d.meta},
  };
  const std::string text = meta.dump();
  std::string out(kMagic, sizeof(kMagic));
  put(out, kDataFormatVersion);
  put(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put_matrix(out, d.features);
  put_matrix(out, d.targets);
  if (!d.masks.empty()) put_bits(out, d.masks);
  if (!d.flags.empty()) put_bits(out, d.flags);
  return out;
}

Dataset decode_dataset(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic), "magic") != std::string_view(kMagic, sizeof(kMagic)))
    throw FormatError("not a BNNDATA file (bad magic)");
  const auto version = in.get<std::uint16_t>("version");
  if (version != kDataFormatVersion) throw FormatError("unsupported BNNDATA version " + std::to_string(version));
  const auto len = in.get<std::uint32_t>("metadata length");
  json meta;
  try {
    meta = json::parse(in.take(len, "metadata"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("BNNDATA metadata is not valid JSON: ") + e.what());
  }
  Dataset d;
  try {
    d.task = parse_task(meta.at("task").get<std::string>());
    const Index rows = meta.at("rows").get<Index>();
    const Index fdim = meta.at("feature_dim").get<Index>();
    const Index tdim = meta.at("target_dim").get<Index>();
    const Index mcols = meta.at("mask_cols").get<Index>();
    const Index fcols = meta.at("flag_cols").get<Index>();
    if (rows < 0 || fdim < 0 || tdim < 0 || mcols < 0 || fcols < 0) throw FormatError("negative BNNDATA size");
    const std::size_t expected = static_cast<std::size_t>(rows * (fdim + tdim)) * sizeof(float) +
                                 static_cast<std::size_t>((rows * mcols + 7) / 8) +
                                 static_cast<std::size_t>((rows * fcols + 7) / 8);
    if (in.remaining() != expected)
      throw FormatError("BNNDATA payload size mismatch: expected " + std::to_string(expected) + " bytes, got " +
                        std::to_string(in.remaining()));
    d.features = get_matrix(in, rows, fdim, "features");
    d.targets = get_matrix(in, rows, tdim, "targets");
    if (mcols > 0) d.masks = get_bits(in, rows, mcols, "masks");
    if (fcols > 0) d.flags = get_bits(in, rows, fcols, "flags");
    d.meta = meta.at("meta");
  } catch (const json::exception& e) {
    throw FormatError(std::string("BNNDATA metadata incomplete: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw FormatError(std::string("BNNDATA metadata invalid: ") + e.detail());
  }
  return d;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_file(const std::string& path, std::string_view bytes) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

void save_dataset(const std::string& path, const Dataset& d) { write_file(path, encode_dataset(d)); }

Dataset load_dataset(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    return decode_dataset(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.detail());
  }
}

}  // namespace bnnp
