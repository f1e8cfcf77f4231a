#include "maldistill/featurize/ember.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string_view>

namespace maldistill::featurize {

namespace {

template <std::size_t N>
double entropy_bits(const std::array<double, N>& counts, double total) {
  double h = 0;
  for (double c : counts) {
    if (c > 0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

void normalise(FeatureVector& v) {
  double s = 0;
  for (float x : v) s += x;
  if (s > 0) {
    for (auto& x : v) x = static_cast<float>(x / s);
  }
}

std::size_t count_ci(std::span<const std::uint8_t> bytes, std::string_view needle) {
  std::size_t n = 0;
  if (bytes.size() < needle.size()) return 0;
  for (std::size_t i = 0; i + needle.size() <= bytes.size(); ++i) {
    bool hit = true;
    for (std::size_t k = 0; k < needle.size() && hit; ++k) {
      hit = std::tolower(bytes[i + k]) == std::tolower(static_cast<unsigned char>(needle[k]));
    }
    if (hit) {
      ++n;
      i += needle.size() - 1;
    }
  }
  return n;
}

}  // namespace

FeatureVector byte_histogram(std::span<const std::uint8_t> bytes) {
  FeatureVector h(kByteHistogramDim, 0.0f);
  for (auto b : bytes) h[b] += 1.0f;
  normalise(h);
  return h;
}

double shannon_entropy_bits(std::span<const std::uint8_t> bytes) {
  std::array<double, 256> c{};
  for (auto b : bytes) c[b] += 1;
  return bytes.empty() ? 0.0 : entropy_bits(c, static_cast<double>(bytes.size()));
}

FeatureVector byte_entropy_histogram(std::span<const std::uint8_t> bytes) {
  FeatureVector out(kByteEntropyDim, 0.0f);
  if (bytes.empty()) return out;
  auto add_window = [&](std::span<const std::uint8_t> w) {
    std::array<double, 16> coarse{};
    for (auto b : w) coarse[b >> 4] += 1;
    // Entropy of the 16-bin distribution is at most 4 bits; doubling puts it
    // on the 0..8 scale of the full byte alphabet.
    const double h = entropy_bits(coarse, static_cast<double>(w.size())) * 2;
    const std::size_t bin = std::min<std::size_t>(static_cast<std::size_t>(h * 2), 15);
    for (std::size_t k = 0; k < 16; ++k) out[bin * 16 + k] += static_cast<float>(coarse[k]);
  };
  if (bytes.size() < kEntropyWindow) {
    add_window(bytes);
  } else {
    for (std::size_t start = 0; start + kEntropyWindow <= bytes.size(); start += kEntropyStride) {
      add_window(bytes.subspan(start, kEntropyWindow));
    }
  }
  normalise(out);
  return out;
}

FeatureVector string_features(std::span<const std::uint8_t> bytes) {
  std::array<double, 96> dist{};
  double num_strings = 0, printables = 0;
  std::size_t run = 0;
  auto close_run = [&](std::size_t end) {
    if (run >= 5) {
      num_strings += 1;
      printables += static_cast<double>(run);
      for (std::size_t i = end - run; i < end; ++i) dist[bytes[i] - 0x20] += 1;
    }
    run = 0;
  };
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] >= 0x20 && bytes[i] <= 0x7f) {
      ++run;
    } else {
      close_run(i);
    }
  }
  close_run(bytes.size());

  FeatureVector f;
  f.reserve(kStringsDim);
  f.push_back(static_cast<float>(num_strings));
  f.push_back(static_cast<float>(num_strings > 0 ? printables / num_strings : 0.0));
  f.push_back(static_cast<float>(printables));
  for (double c : dist) f.push_back(static_cast<float>(printables > 0 ? c / printables : 0.0));
  f.push_back(static_cast<float>(printables > 0 ? entropy_bits(dist, printables) : 0.0));
  f.push_back(static_cast<float>(count_ci(bytes, "c:\\")));
  f.push_back(static_cast<float>(count_ci(bytes, "http://") + count_ci(bytes, "https://")));
  f.push_back(static_cast<float>(count_ci(bytes, "HKEY_")));
  std::size_t mz = 0;
  for (std::size_t i = 0; i + 1 < bytes.size(); ++i) {
    if (bytes[i] == 'M' && bytes[i + 1] == 'Z') ++mz;
  }
  f.push_back(static_cast<float>(mz));
  return f;
}

FeatureVector ember_lite(std::span<const std::uint8_t> bytes,
                         std::optional<std::span<const float>> parsed) {
  if (bytes.empty()) throw std::invalid_argument("ember_lite: empty input");
  FeatureVector row;
  row.reserve(kEmberDim);
  for (const auto& group : {byte_histogram(bytes), byte_entropy_histogram(bytes), string_features(bytes)}) {
    row.insert(row.end(), group.begin(), group.end());
  }
  if (parsed) {
    if (parsed->size() != kParsedDim) {
      throw std::invalid_argument("parsed feature sidecar must hold " + std::to_string(kParsedDim) +
                                  " values, got " + std::to_string(parsed->size()));
    }
    row.insert(row.end(), parsed->begin(), parsed->end());
  } else {
    row.resize(kEmberDim, 0.0f);
    row[kParsedOffset] = static_cast<float>(bytes.size());
  }
  return row;
}

FeatureVector aggregate_org(const std::vector<FeatureVector>& rows) {
  if (rows.size() < 2) throw std::invalid_argument("aggregate_org needs at least two rows");
  FeatureVector out;
  for (const auto& r : rows) {
    if (r.empty()) throw std::invalid_argument("aggregate_org: empty feature vector");
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace maldistill::featurize
