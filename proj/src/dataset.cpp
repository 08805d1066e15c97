#include "beamkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "beamkit/crc64.hpp"
#include "beamkit/io_util.hpp"
#include "beamkit/rng.hpp"

namespace beamkit {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'B', 'F', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagLabels = 1u << 0;
constexpr std::uint32_t kFlagVariousK = 1u << 1;
// Hard budget on total complex entries per dataset.
constexpr std::uint64_t kMaxEntries = 1ull << 30;

struct Writer {
  std::vector<unsigned char> bytes;
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
};

struct Reader {
  const std::vector<unsigned char>& bytes;
  std::uint64_t pos = 0;
  template <typename T>
  T get(const char* what) {
    if (pos + sizeof(T) > bytes.size())
      throw FormatError(std::string("truncated dataset while reading ") + what,
                        pos);
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

const char* dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::TRAIN: return "train";
    case DatasetKind::TEST: return "test";
    case DatasetKind::BOTH: return "both";
  }
  return "?";
}

DatasetKind dataset_kind_from_name(const std::string& name) {
  if (name == "train") return DatasetKind::TRAIN;
  if (name == "test") return DatasetKind::TEST;
  if (name == "both") return DatasetKind::BOTH;
  throw InvalidInputError("unknown dataset kind: " + name);
}

void DatasetSpec::validate() const {
  if (n_antennas < 1) throw InvalidInputError("n_antennas must be >= 1");
  if (k_users_list.empty())
    throw InvalidInputError("k_users_list must be nonempty");
  for (int k : k_users_list)
    if (k < 1) throw InvalidInputError("every K must be >= 1");
  if (!(gamma > 0)) throw InvalidInputError("gamma must be > 0");
  if (count < 1) throw InvalidInputError("count must be >= 1");
  if (xi < 0) throw InvalidInputError("xi must be >= 0");
  const int k_max = *std::max_element(k_users_list.begin(),
                                      k_users_list.end());
  const std::uint64_t entries =
      count * static_cast<std::uint64_t>(k_max) *
      static_cast<std::uint64_t>(n_antennas);
  if (entries > kMaxEntries)
    throw CapacityError("dataset would exceed the entry budget");
}

double pathloss_gain(double d_km) {
  return std::pow(10.0, -(140.7 + 36.7 * std::log10(d_km)) / 10.0);
}

Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  ds.samples.resize(spec.count);
  for (std::uint64_t i = 0; i < spec.count; ++i) {
    // Per-sample stream: results do not depend on generation order.
    Philox rng(Philox::split(spec.seed, i));
    int k_users = spec.k_users_list.front();
    if (spec.various())
      k_users = spec.k_users_list[static_cast<std::size_t>(
          rng.next_below(spec.k_users_list.size()))];
    // Distances are drawn in both modes so the fading draws line up.
    RVector gains = RVector::Ones(k_users);
    for (int k = 0; k < k_users; ++k) {
      const double d = rng.next_uniform(kPathlossDistMinKm, kPathlossDistMaxKm);
      if (spec.raw_pathloss) gains[k] = pathloss_gain(d);
    }
    CMatrix h(k_users, spec.n_antennas);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int k = 0; k < k_users; ++k) {
      const double amp = std::sqrt(gains[k]);
      for (int j = 0; j < spec.n_antennas; ++j) {
        auto [a, b] = rng.next_normal_pair();
        h(k, j) = Complex(a * inv_sqrt2, b * inv_sqrt2) * amp;
      }
    }
    ds.samples[i].h = std::move(h);
  }
  return ds;
}

namespace {

std::vector<unsigned char> encode_payload(const Dataset& ds) {
  Writer w;
  w.put_raw(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.spec.n_antennas));
  w.put<std::uint64_t>(ds.spec.count);
  std::uint32_t flags = 0;
  if (ds.has_labels()) flags |= kFlagLabels;
  if (ds.spec.various()) flags |= kFlagVariousK;
  w.put<std::uint32_t>(flags);
  for (const ChannelSet& s : ds.samples) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.k_users()));
    for (int k = 0; k < s.k_users(); ++k)
      for (int j = 0; j < s.n_antennas(); ++j) {
        w.put<double>(s.h(k, j).real());
        w.put<double>(s.h(k, j).imag());
      }
  }
  for (double v : ds.labels) w.put<double>(v);
  return w.bytes;
}

json spec_to_json(const DatasetSpec& spec) {
  return json{{"n_antennas", spec.n_antennas},
              {"k_users_list", spec.k_users_list},
              {"gamma", spec.gamma},
              {"xi", spec.xi},
              {"count", spec.count},
              {"seed", spec.seed},
              {"kind", dataset_kind_name(spec.kind)},
              {"raw_pathloss", spec.raw_pathloss}};
}

DatasetSpec spec_from_json(const json& j) {
  DatasetSpec spec;
  spec.n_antennas = j.at("n_antennas").get<int>();
  spec.k_users_list = j.at("k_users_list").get<std::vector<int>>();
  spec.gamma = j.at("gamma").get<double>();
  spec.xi = j.at("xi").get<double>();
  spec.count = j.at("count").get<std::uint64_t>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.kind = dataset_kind_from_name(j.at("kind").get<std::string>());
  spec.raw_pathloss = j.at("raw_pathloss").get<bool>();
  return spec;
}

}  // namespace

void save(const Dataset& ds, const std::string& path,
          const std::string& run_id) {
  if (ds.has_labels() && ds.labels.size() != ds.samples.size())
    throw InvalidInputError("label count does not match sample count");
  const auto payload = encode_payload(ds);
  json manifest{
      {"format", "bfds"},
      {"version", kVersion},
      {"spec", spec_to_json(ds.spec)},
      {"labels_present", ds.has_labels()},
      {"payload_crc64", hex64(crc64(payload.data(), payload.size()))},
      {"bandwidth_hz", kBandwidthHz},
      {"noise_dbm_per_hz", kNoiseDbmPerHz},
      {"pathloss",
       {{"model_db", "140.7 + 36.7*log10(d_km)"},
        {"d_km", {kPathlossDistMinKm, kPathlossDistMaxKm}},
        {"normalized", !ds.spec.raw_pathloss}}},
  };
  // Labels on a pure training set are legal but worth surfacing.
  if (ds.has_labels() && ds.spec.kind == DatasetKind::TRAIN)
    manifest["labels_on_train_kind"] = true;
  if (!run_id.empty()) manifest["run_id"] = run_id;
  write_file_atomic(path, payload.data(), payload.size());
  write_text_atomic(path + ".manifest.json", manifest.dump(2) + "\n");
}

Dataset load(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  Reader r{bytes};
  char magic[4];
  if (bytes.size() < 4) throw FormatError("truncated dataset header", 0);
  std::memcpy(magic, bytes.data(), 4);
  r.pos = 4;
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic; not a BFDS dataset", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion)
    throw FormatError("unsupported dataset version " + std::to_string(version),
                      r.pos - 4);
  const auto n_antennas = r.get<std::uint32_t>("n_antennas");
  const auto count = r.get<std::uint64_t>("count");
  const auto flags = r.get<std::uint32_t>("flags");

  const std::string manifest_path = path + ".manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_file_bytes(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError("bad dataset manifest: " + std::string(e.what()), 0);
  }
  Dataset ds;
  try {
    ds.spec = spec_from_json(manifest.at("spec"));
  } catch (const json::exception& e) {
    throw FormatError("bad dataset manifest spec: " + std::string(e.what()),
                      0);
  }
  const std::string expect_crc =
      manifest.at("payload_crc64").get<std::string>();
  if (hex64(crc64(bytes.data(), bytes.size())) != expect_crc)
    throw FormatError("payload checksum mismatch", 0);

  if (ds.spec.n_antennas != static_cast<int>(n_antennas))
    throw FormatError("manifest/header antenna count mismatch", 8);
  if (ds.spec.count != count)
    throw FormatError("manifest/header sample count mismatch", 12);

  ds.samples.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto k_users = r.get<std::uint32_t>("sample user count");
    if (k_users < 1 || k_users > 100000)
      throw FormatError("implausible user count in sample", r.pos - 4);
    CMatrix h(k_users, n_antennas);
    for (std::uint32_t k = 0; k < k_users; ++k)
      for (std::uint32_t j = 0; j < n_antennas; ++j) {
        const double re = r.get<double>("channel entry");
        const double im = r.get<double>("channel entry");
        h(k, j) = Complex(re, im);
      }
    ds.samples[i].h = std::move(h);
  }
  if (flags & kFlagLabels) {
    ds.labels.resize(count);
    for (std::uint64_t i = 0; i < count; ++i)
      ds.labels[i] = r.get<double>("label");
  }
  if (r.pos != bytes.size())
    throw FormatError("trailing bytes after dataset payload", r.pos);
  return ds;
}

Dataset attach_labels(const Dataset& ds, const std::vector<double>& labels) {
  if (labels.size() != ds.samples.size())
    throw InvalidInputError("label count does not match sample count");
  Dataset out = ds;
  out.labels = labels;
  return out;
}

SystemConfig make_config(const DatasetSpec& spec, int k_users, double p_max,
                         double p_circuit) {
  // Raw mode keeps the physical noise floor: -162 dBm/Hz over 10 MHz.
  const double sigma2 =
      spec.raw_pathloss
          ? std::pow(10.0, (kNoiseDbmPerHz +
                            10.0 * std::log10(kBandwidthHz) - 30.0) /
                               10.0)
          : spec.gamma;
  return SystemConfig::uniform(k_users, p_max, p_circuit, sigma2, spec.xi);
}

}  // namespace beamkit
