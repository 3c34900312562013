#include "bnnp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <cstdio>
#include <filesystem>

#include "bnnp/data_io.hpp"
#include "bnnp/errors.hpp"
#include "bnnp/rng.hpp"

namespace bnnp {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'B', 'N', 'N', 'P', 'R', 'I', 'O', 'R'};

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_doubles(std::string& out, const double* data, Index n) {
  out.append(reinterpret_cast<const char*>(data), static_cast<std::size_t>(n) * sizeof(double));
}

template <class T>
T read_at(std::string_view bytes, std::size_t pos) {
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  return v;
}

json arch_json(const ArchSpec& a) {
  return {{"layer_sizes", a.layer_sizes}, {"activation", to_string(a.activation)}, {"head", to_string(a.head)}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec a;
  a.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  a.activation = parse_activation(j.at("activation").get<std::string>());
  a.head = parse_output_head(j.at("head").get<std::string>());
  a.validate();
  return a;
}

json component_json(const LowRankGaussian& q) {
  json j = {{"rank", q.rank()}, {"diag", q.diag.has_value()}};
  if (!q.diag) j["sigma"] = q.jitter_sigma;
  return j;
}

void put_component(std::string& out, const LowRankGaussian& q) {
  put_doubles(out, q.mean.data(), q.mean.size());
  put_doubles(out, q.factors.data(), q.factors.size());  // column-major storage
  if (q.diag) put_doubles(out, q.diag->data(), q.diag->size());
}

// Number of f64 values the metadata promises.
std::size_t expected_values(const json& meta, Index n) {
  const std::string family = meta.at("family").get<std::string>();
  if (family == "isotropic") return 0;
  if (family == "point") return static_cast<std::size_t>(n);
  if (family == "diag") return static_cast<std::size_t>(2 * n);
  std::size_t total = 0;
  for (const auto& c : meta.at("components")) {
    const Index r = c.at("rank").get<Index>();
    if (r < 0) throw FormatError("negative rank in BNNPRIOR metadata");
    total += static_cast<std::size_t>(n + n * r + (c.at("diag").get<bool>() ? n : 0));
  }
  return total;
}

class Payload {
 public:
  explicit Payload(std::string_view bytes) : bytes_(bytes) {}
  Vector vector(Index n) {
    Vector v(n);
    copy(v.data(), n);
    return v;
  }
  Matrix matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    copy(m.data(), rows * cols);
    return m;
  }

 private:
  void copy(double* dst, Index n) {
    const std::size_t len = static_cast<std::size_t>(n) * sizeof(double);
    std::memcpy(dst, bytes_.data() + pos_, len);
    pos_ += len;
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

LowRankGaussian read_component(Payload& p, const json& c, Index n) {
  LowRankGaussian q;
  const Index r = c.at("rank").get<Index>();
  q.mean = p.vector(n);
  q.factors = p.matrix(n, r);
  if (c.at("diag").get<bool>())
    q.diag = p.vector(n);
  else
    q.jitter_sigma = c.at("sigma").get<double>();
  return q;
}

std::string container(const json& meta, const std::string& payload) {
  const std::string text = meta.dump();
  std::string out(kMagic, sizeof(kMagic));
  put(out, kPriorFormatVersion);
  put(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out += payload;
  return out;
}

constexpr std::size_t kHeaderBytes = sizeof(kMagic) + sizeof(std::uint16_t) + sizeof(std::uint32_t);

// Verifies magic, version and the exact payload length; returns the metadata.
json open_container(std::string_view bytes, std::string_view& payload) {
  if (bytes.size() < kHeaderBytes)
    throw FormatError("BNNPRIOR truncated header: expected " + std::to_string(kHeaderBytes) + " bytes, got " +
                      std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("bad BNNPRIOR magic");
  const auto version = read_at<std::uint16_t>(bytes, sizeof(kMagic));
  if (version != kPriorFormatVersion)
    throw FormatError("unsupported BNNPRIOR version " + std::to_string(version) + " (expected " +
                      std::to_string(kPriorFormatVersion) + ")");
  const auto meta_len = read_at<std::uint32_t>(bytes, sizeof(kMagic) + sizeof(std::uint16_t));
  if (bytes.size() - kHeaderBytes < meta_len)
    throw FormatError("BNNPRIOR truncated metadata: expected " + std::to_string(kHeaderBytes + meta_len) +
                      " bytes, got " + std::to_string(bytes.size()));
  json meta;
  try {
    meta = json::parse(bytes.substr(kHeaderBytes, meta_len));
    const ArchSpec arch = arch_from_json(meta.at("arch"));
    const Index n = arch.param_count();
    if (meta.at("dim").get<Index>() != n) throw FormatError("BNNPRIOR dimension disagrees with the architecture");
    const std::size_t expected = kHeaderBytes + meta_len + expected_values(meta, n) * sizeof(double);
    if (bytes.size() != expected)
      throw FormatError("BNNPRIOR payload size mismatch: expected " + std::to_string(expected) + " bytes, got " +
                        std::to_string(bytes.size()));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed BNNPRIOR metadata: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError("invalid BNNPRIOR metadata: " + e.detail());
  }
  payload = bytes.substr(kHeaderBytes + meta_len);
  return meta;
}

}  // namespace

std::string family_tag(const Prior& prior) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IsotropicPrior>) return "isotropic";
        else if constexpr (std::is_same_v<T, LowRankGaussian>) return "lowrank";
        else if constexpr (std::is_same_v<T, DiagGaussian>) return "diag";
        else return "mixture";
      },
      prior);
}

std::string encode_prior(const PriorCheckpoint& c) {
  c.arch.validate();
  const Index n = c.arch.param_count();
  json meta = {{"arch", arch_json(c.arch)},
               {"family", family_tag(c.prior)},
               {"dim", n},
               {"seed", c.seed},
               {"phi_kind", c.phi_kind},
               {"provenance", c.provenance}};
  std::string payload;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IsotropicPrior>) {
          meta["variance"] = p.variance;
          meta["K"] = 0;
          meta["components"] = json::array();
        } else if constexpr (std::is_same_v<T, LowRankGaussian>) {
          p.validate();
          if (p.dim() != n) throw InvalidShape("prior dimension differs from the architecture");
          meta["K"] = 1;
          meta["components"] = json::array();
          meta["components"].push_back(component_json(p));
          put_component(payload, p);
        } else if constexpr (std::is_same_v<T, DiagGaussian>) {
          p.validate();
          if (p.dim() != n) throw InvalidShape("prior dimension differs from the architecture");
          meta["K"] = 1;
          meta["components"] = json::array();
          put_doubles(payload, p.mean.data(), n);
          put_doubles(payload, p.log_std.data(), n);
        } else {
          p.validate();
          if (p.dim() != n) throw InvalidShape("prior dimension differs from the architecture");
          meta["K"] = p.components.size();
          meta["components"] = json::array();
          for (const auto& q : p.components) {
            meta["components"].push_back(component_json(q));
            put_component(payload, q);
          }
        }
      },
      c.prior);
  return container(meta, payload);
}

PriorCheckpoint decode_prior(std::string_view bytes) {
  std::string_view payload;
  const json meta = open_container(bytes, payload);
  PriorCheckpoint c;
  try {
    c.arch = arch_from_json(meta.at("arch"));
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.phi_kind = meta.at("phi_kind").get<std::string>();
    c.provenance = meta.at("provenance");
    const Index n = c.arch.param_count();
    Payload p(payload);
    const std::string family = meta.at("family").get<std::string>();
    if (family == "isotropic") {
      c.prior = IsotropicPrior{meta.at("variance").get<double>()};
    } else if (family == "diag") {
      DiagGaussian q;
      q.mean = p.vector(n);
      q.log_std = p.vector(n);
      c.prior = std::move(q);
    } else if (family == "lowrank") {
      const auto& comps = meta.at("components");
      if (comps.size() != 1) throw FormatError("lowrank BNNPRIOR needs exactly one component");
      c.prior = read_component(p, comps.front(), n);
    } else if (family == "mixture") {
      GaussianMixturePrior mix;
      for (const auto& comp : meta.at("components")) mix.components.push_back(read_component(p, comp, n));
      if (mix.components.empty()) throw FormatError("mixture BNNPRIOR without components");
      c.prior = std::move(mix);
    } else {
      throw FormatError("BNNPRIOR family '" + family + "' is not a prior");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed BNNPRIOR metadata: ") + e.what());
  }
  return c;
}

std::string encode_weights(const ArchSpec& arch, const ParamVector& w, const nlohmann::json& provenance) {
  arch.validate();
  if (w.size() != arch.param_count()) throw InvalidShape("weight vector length differs from the architecture");
  const json meta = {{"arch", arch_json(arch)}, {"family", "point"}, {"dim", w.size()},
                     {"seed", 0},               {"phi_kind", "none"}, {"provenance", provenance}};
  std::string payload;
  put_doubles(payload, w.data(), w.size());
  return container(meta, payload);
}

std::pair<ArchSpec, ParamVector> decode_weights(std::string_view bytes) {
  std::string_view payload;
  const json meta = open_container(bytes, payload);
  if (meta.at("family").get<std::string>() != "point") throw FormatError("BNNPRIOR file does not hold weights");
  ArchSpec arch = arch_from_json(meta.at("arch"));
  Payload p(payload);
  ParamVector w = p.vector(arch.param_count());
  return {std::move(arch), std::move(w)};
}

void save_ensemble(const std::string& dir, const Ensemble& e, const nlohmann::json& extra) {
  e.validate();
  json manifest = {{"members", e.size()},
                   {"averaging", to_string(e.averaging)},
                   {"arch", arch_json(e.arch)},
                   {"files", json::array()},
                   {"info", extra}};
  for (Index k = 0; k < e.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "member_%03lld.bnnp", static_cast<long long>(k));
    write_file((std::filesystem::path(dir) / name).string(),
               encode_weights(e.arch, e.members[static_cast<std::size_t>(k)], json::object()));
    manifest["files"].push_back(name);
  }
  write_file((std::filesystem::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

Ensemble load_ensemble(const std::string& dir, nlohmann::json* extra) {
  const std::string text = read_file((std::filesystem::path(dir) / "manifest.json").string());
  Ensemble e;
  try {
    const json manifest = json::parse(text);
    e.arch = arch_from_json(manifest.at("arch"));
    e.averaging = parse_averaging(manifest.at("averaging").get<std::string>());
    const auto& files = manifest.at("files");
    if (files.size() != manifest.at("members").get<std::size_t>())
      throw FormatError("ensemble manifest member count disagrees with its file list");
    for (const auto& f : files) {
      auto [arch, w] = decode_weights(read_file((std::filesystem::path(dir) / f.get<std::string>()).string()));
      if (!(arch == e.arch)) throw FormatError("ensemble member architecture differs from the manifest");
      e.members.push_back(std::move(w));
    }
    if (extra) *extra = manifest.value("info", json::object());
  } catch (const json::exception& ex) {
    throw FormatError(std::string("malformed ensemble manifest: ") + ex.what());
  }
  e.validate();
  return e;
}

void save_prior(const std::string& path, const PriorCheckpoint& c) { write_file(path, encode_prior(c)); }

PriorCheckpoint load_prior(const std::string& path) { return decode_prior(read_file(path)); }

std::string content_hash(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace bnnp
