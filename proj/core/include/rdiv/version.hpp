#pragma once

namespace rdiv {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kHypothesisFormatVersion = 1;

}  // namespace rdiv
