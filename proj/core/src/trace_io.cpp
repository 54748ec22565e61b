#include <bit>
#include <cstring>
#include <fstream>

#include "levent/error.hpp"
#include "levent/synth.hpp"

namespace levent {

namespace {

constexpr char kMagic[8] = {'L', 'E', 'V', 'T', 'R', 'C', '0', '1'};
constexpr const char* kTraceSchema = "levent-trace/1";
constexpr std::uint64_t kMaxHeader = 1 << 20;

static_assert(std::endian::native == std::endian::little, "trace files assume a little-endian host");

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw InvalidInput("trace file: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_trace(const HeterodyneTrace& t, const std::filesystem::path& path) {
  nlohmann::json h;
  h["schema"] = kTraceSchema;
  h["sample_rate"] = t.sample_rate;
  h["n_samples"] = t.samples.size();
  h["lo_freq_a_hz"] = to_hz(t.lo_freq_a);
  h["lo_freq_b_hz"] = to_hz(t.lo_freq_b);
  h["kind"] = std::string(to_string(t.kind));
  h["seed"] = t.seed;
  h["coherent"] = nlohmann::json::array();
  for (const auto& c : t.coherent) h["coherent"].push_back({{"amplitude", c.amplitude}, {"phase_rad", c.phase}});
  h["lo_fraction_a"] = t.lo_fraction_a;
  h["detector_cutoff_hz"] = t.detector_cutoff_hz;
  h["segment_seconds"] = t.segment_seconds;
  h["sample_format"] = "f64le";
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out.write(kMagic, 8);
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(t.samples.data()),
            static_cast<std::streamsize>(t.samples.size() * sizeof(double)));
  if (!out) throw NumericalError("write failed: " + path.string());
}

HeterodyneTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open trace file " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw InvalidInput("trace file: bad magic");
  const std::uint64_t len = get_u64(in);
  if (len > kMaxHeader) throw InvalidInput("trace file: header too large");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw InvalidInput("trace file: truncated header");

  HeterodyneTrace t;
  std::uint64_t n = 0;
  try {
    const auto h = nlohmann::json::parse(header);
    if (h.value("schema", "") != kTraceSchema) throw InvalidInput("trace file: unsupported schema");
    t.sample_rate = h.at("sample_rate").get<double>();
    n = h.at("n_samples").get<std::uint64_t>();
    t.lo_freq_a = hz(h.at("lo_freq_a_hz").get<double>());
    t.lo_freq_b = hz(h.at("lo_freq_b_hz").get<double>());
    t.kind = trace_kind_from_string(h.at("kind").get<std::string>());
    t.seed = h.value("seed", std::uint64_t{0});
    if (h.contains("coherent")) {
      const auto& c = h.at("coherent");
      for (std::size_t i = 0; i < std::min<std::size_t>(2, c.size()); ++i) {
        t.coherent[i] = {c[i].at("amplitude").get<double>(), c[i].at("phase_rad").get<double>()};
      }
    }
    t.lo_fraction_a = h.value("lo_fraction_a", 0.5);
    t.detector_cutoff_hz = h.value("detector_cutoff_hz", 0.0);
    t.segment_seconds = h.value("segment_seconds", 0.010);
    if (h.value("sample_format", "f64le") != std::string("f64le")) {
      throw InvalidInput("trace file: unsupported sample format");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("trace file: bad header: ") + e.what());
  }
  if (!(t.sample_rate > 0.0)) throw InvalidInput("trace file: bad sample rate");

  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(here);
  if (static_cast<std::uint64_t>(end - here) != n * sizeof(double)) {
    throw InvalidInput("trace file: sample count does not match file size");
  }
  t.samples.resize(n);
  in.read(reinterpret_cast<char*>(t.samples.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw InvalidInput("trace file: truncated samples");
  return t;
}

}  // namespace levent
