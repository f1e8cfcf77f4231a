#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace maldistill::featurize {

using FeatureVector = std::vector<float>;

inline constexpr std::size_t kEmberDim = 2381;
inline constexpr std::size_t kByteHistogramDim = 256;
inline constexpr std::size_t kByteEntropyDim = 256;
inline constexpr std::size_t kStringsDim = 104;
inline constexpr std::size_t kParsedDim = 1765;
inline constexpr std::size_t kEntropyWindow = 2048;
inline constexpr std::size_t kEntropyStride = 1024;

// Group offsets inside the 2381-dim row.
inline constexpr std::size_t kByteEntropyOffset = kByteHistogramDim;
inline constexpr std::size_t kStringsOffset = kByteEntropyOffset + kByteEntropyDim;
inline constexpr std::size_t kParsedOffset = kStringsOffset + kStringsDim;

/// Normalised 256-bin byte histogram.
FeatureVector byte_histogram(std::span<const std::uint8_t> bytes);

/// 16x16 joint histogram of (window entropy bin, high nibble), flattened
/// row-major and normalised. Windows of 2048 bytes step by 1024; a file
/// shorter than a window is treated as one window.
FeatureVector byte_entropy_histogram(std::span<const std::uint8_t> bytes);

/// Shannon entropy in bits of a byte distribution.
double shannon_entropy_bits(std::span<const std::uint8_t> bytes);

/// Printable-string statistics (runs of >= 5 printable ASCII characters):
/// count, mean length, printable count, 96-bin character distribution,
/// character entropy, then counts of paths, URLs, registry keys and "MZ".
FeatureVector string_features(std::span<const std::uint8_t> bytes);

/// Format-agnostic EMBER-layout row. `parsed` supplies the header, section,
/// import, export and data-directory groups (1765 values); without it those
/// groups are zero except the file size in the first slot.
FeatureVector ember_lite(std::span<const std::uint8_t> bytes,
                         std::optional<std::span<const float>> parsed = std::nullopt);

/// Concatenation in argument order. Needs at least two non-empty rows.
FeatureVector aggregate_org(const std::vector<FeatureVector>& rows);

}  // namespace maldistill::featurize
