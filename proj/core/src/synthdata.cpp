#include "interconnect/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/dataflow_exception.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <nlohmann/json.hpp>

#include "interconnect/decoder.hpp"
#include "interconnect/rng.hpp"

namespace interconnect {

namespace {

constexpr std::uint64_t kTemplateStream = hash_name("synth.template");
constexpr std::uint64_t kMapStream = hash_name("synth.map");
constexpr std::uint64_t kSplitStream = hash_name("synth.split");
constexpr std::uint64_t kSampleStream = hash_name("synth.sample");

std::size_t direction_index(Direction d) noexcept { return static_cast<std::size_t>(d); }

std::vector<int> permutation(std::size_t n, std::uint64_t key) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(key, i) * static_cast<double>(i));
    std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
  }
  return perm;
}

}  // namespace

const char* to_string(Direction d) noexcept {
  switch (d) {
    case Direction::A: return "A";
    case Direction::B: return "B";
    case Direction::C: return "C";
  }
  return "?";
}

Direction direction_from_string(std::string_view name) {
  if (name == "A" || name == "a") return Direction::A;
  if (name == "B" || name == "b") return Direction::B;
  if (name == "C" || name == "c") return Direction::C;
  throw ConfigError("unknown direction '" + std::string(name) + "' (expected A, B or C)");
}

int lang_tag(Direction d) noexcept {
  return tokens::kFirstLangTag + static_cast<int>(direction_index(d));
}

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "dev") return Split::Dev;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, dev or test)");
}

void TaskSpec::validate(const DownsamplerSpec& downsampler) const {
  if (source_vocab == 0) throw ConfigError("source_vocab must be positive");
  if (min_len == 0 || max_len < min_len) {
    throw ConfigError("sequence lengths need 1 <= min_len <= max_len");
  }
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise_std must be >= 0");
  const std::size_t stride = downsampler.total_stride();
  if (samples_per_token == 0 || samples_per_token % stride != 0) {
    throw ConfigError("samples_per_token " + std::to_string(samples_per_token) +
                      " must be a positive multiple of the downsampler stride " +
                      std::to_string(stride));
  }
  if (samples_per_token < downsampler.receptive_field()) {
    throw ConfigError("samples_per_token " + std::to_string(samples_per_token) +
                      " is below the downsampler receptive field " +
                      std::to_string(downsampler.receptive_field()));
  }
}

int TaskSpec::first_target_token(Direction d) const noexcept {
  const int first_content = tokens::kFirstLangTag + 3;
  return first_content + static_cast<int>(direction_index(d) * source_vocab);
}

std::size_t TaskSpec::required_vocab() const noexcept {
  return static_cast<std::size_t>(first_target_token(Direction::C)) + source_vocab;
}

int map_token(const TaskSpec& spec, Direction d, int source_token) {
  if (source_token < 0 || static_cast<std::size_t>(source_token) >= spec.source_vocab) {
    throw IndexError("source token " + std::to_string(source_token) + " outside vocab of " +
                     std::to_string(spec.source_vocab));
  }
  // Recomputed per call; vocabularies are tiny.
  const auto perm = permutation(spec.source_vocab,
                                mix_keys(mix_keys(spec.seed, kMapStream), direction_index(d)));
  return spec.first_target_token(d) + perm[static_cast<std::size_t>(source_token)];
}

std::vector<int> apply_rule(const TaskSpec& spec, Direction d, std::span<const int> source) {
  std::vector<int> out;
  out.reserve(source.size());
  for (int t : source) out.push_back(map_token(spec, d, t));
  switch (d) {
    case Direction::A: break;
    case Direction::B: std::reverse(out.begin(), out.end()); break;
    case Direction::C:
      for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
      break;
  }
  return out;
}

void normalize_in_place(std::span<float> wave) {
  if (wave.empty()) return;
  double mean = 0.0;
  for (float v : wave) mean += v;
  mean /= static_cast<double>(wave.size());
  double var = 0.0;
  for (float v : wave) var += (v - mean) * (v - mean);
  var /= static_cast<double>(wave.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  for (float& v : wave) v = static_cast<float>((v - mean) * inv);
}

std::vector<float> render_waveform(std::span<const int> source, const TaskSpec& spec,
                                   std::uint64_t noise_key) {
  const std::size_t s = spec.samples_per_token;
  std::vector<double> raw(source.size() * s);
  const std::uint64_t template_key = mix_keys(spec.seed, kTemplateStream);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int tok = source[i];
    if (tok < 0 || static_cast<std::size_t>(tok) >= spec.source_vocab) {
      throw IndexError("source token " + std::to_string(tok) + " outside vocab of " +
                       std::to_string(spec.source_vocab));
    }
    const std::uint64_t key = mix_keys(template_key, static_cast<std::uint64_t>(tok));
    for (std::size_t j = 0; j < s; ++j) raw[i * s + j] = standard_normal(key, j);
  }
  if (spec.noise_std > 0.0) {
    for (std::size_t k = 0; k < raw.size(); ++k) raw[k] += spec.noise_std * standard_normal(noise_key, k);
  }
  // Normalize in double, then round once.
  double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
  double var = 0.0;
  for (double v : raw) var += (v - mean) * (v - mean);
  var /= static_cast<double>(raw.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  std::vector<float> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) out[k] = static_cast<float>((raw[k] - mean) * inv);
  return out;
}

Split split_of(const TaskSpec& spec, std::span<const int> source) {
  std::uint64_t h = mix_keys(spec.seed, kSplitStream);
  for (int t : source) h = mix_keys(h, static_cast<std::uint64_t>(t) + 1);
  h = mix_keys(h, source.size());
  const std::uint64_t bucket = h % 10;
  if (bucket < 8) return Split::Train;
  return bucket == 8 ? Split::Dev : Split::Test;
}

namespace {

Sample make_sample(const TaskSpec& spec, Split split, std::size_t index) {
  const std::uint64_t base =
      mix_keys(mix_keys(mix_keys(spec.seed, kSampleStream), static_cast<std::uint64_t>(split)), index);
  const std::size_t span = spec.max_len - spec.min_len + 1;
  Sample sample;
  sample.direction = kAllDirections[index % 3];
  // Rejection-sample until the sequence hashes into the requested split.
  for (std::uint64_t attempt = 0;; ++attempt) {
    const std::uint64_t key = mix_keys(base, attempt);
    const std::size_t len =
        spec.min_len + std::min(span - 1, static_cast<std::size_t>(uniform01(key, 0) * static_cast<double>(span)));
    sample.source.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
      const auto tok = static_cast<std::size_t>(uniform01(key, i + 1) * static_cast<double>(spec.source_vocab));
      sample.source[i] = static_cast<int>(std::min(tok, spec.source_vocab - 1));
    }
    if (split_of(spec, sample.source) == split) break;
    if (attempt > 100000) throw ConfigError("task space too small to populate the requested split");
  }
  sample.target = apply_rule(spec, sample.direction, sample.source);
  sample.waveform = render_waveform(sample.source, spec, mix_keys(base, hash_name("noise")));
  return sample;
}

}  // namespace

std::vector<Sample> generate_corpus(const TaskSpec& spec, std::size_t n_samples, Split split,
                                    std::size_t jobs) {
  std::vector<Sample> out(n_samples);
  jobs = std::max<std::size_t>(1, std::min(jobs, n_samples));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n_samples; ++i) out[i] = make_sample(spec, split, i);
    return out;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t j = 0; j < jobs; ++j) {
    workers.emplace_back([&, j] {
      try {
        for (std::size_t i = j; i < n_samples; i += jobs) out[i] = make_sample(spec, split, i);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<float> augment_waveform(std::span<const float> wave, double prob, std::uint64_t key) {
  std::vector<float> out(wave.begin(), wave.end());
  if (out.empty() || uniform01(key, 0) >= prob) return out;
  // Linear gain ramp plus white noise.
  const double g0 = 0.6 + 0.8 * uniform01(key, 1);
  const double g1 = 0.6 + 0.8 * uniform01(key, 2);
  const double noise = 0.2 * uniform01(key, 3);
  const std::uint64_t noise_key = mix_keys(key, 4);
  const double denom = out.size() > 1 ? static_cast<double>(out.size() - 1) : 1.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = g0 + (g1 - g0) * static_cast<double>(i) / denom;
    out[i] = static_cast<float>(out[i] * g + noise * standard_normal(noise_key, i));
  }
  normalize_in_place(out);
  return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  using Encoder = boost::archive::iterators::base64_from_binary<
      boost::archive::iterators::transform_width<const std::uint8_t*, 6, 8>>;
  std::string out(Encoder(bytes.data()), Encoder(bytes.data() + bytes.size()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw IoError("base64 length is not a multiple of 4");
  const std::size_t body = text.find_last_not_of('=') + 1;
  const std::size_t pad = text.size() - body;
  if (!text.empty() && (pad > 2 || text.substr(0, body).find('=') != std::string_view::npos)) {
    throw IoError("misplaced base64 padding");
  }
  using Decoder = boost::archive::iterators::transform_width<
      boost::archive::iterators::binary_from_base64<const char*>, 8, 6>;
  std::vector<std::uint8_t> out;
  try {
    out.assign(Decoder(text.data()), Decoder(text.data() + body));
  } catch (const boost::archive::iterators::dataflow_exception&) {
    throw IoError("invalid base64 character");
  }
  out.resize(text.size() / 4 * 3 - pad);
  return out;
}

namespace {

static_assert(std::endian::native == std::endian::little, "corpus encoding assumes a little-endian host");

std::string encode_floats(std::span<const float> values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(float));
  std::memcpy(bytes.data(), values.data(), bytes.size());
  return base64_encode(bytes);
}

std::vector<float> decode_floats(std::string_view text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % sizeof(float) != 0) throw IoError("waveform payload is not a float32 array");
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace

void write_corpus(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& s : samples) {
    nlohmann::ordered_json rec;
    rec["waveform_b64"] = encode_floats(s.waveform);
    rec["direction"] = to_string(s.direction);
    rec["source_ids"] = s.source;
    rec["target_ids"] = s.target;
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Sample> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Sample s;
      s.waveform = decode_floats(rec.at("waveform_b64").get<std::string>());
      s.direction = direction_from_string(rec.at("direction").get<std::string>());
      if (rec.contains("source_ids")) s.source = rec["source_ids"].get<std::vector<int>>();
      s.target = rec.at("target_ids").get<std::vector<int>>();
      samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return samples;
}

}  // namespace interconnect
