#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace licaf {

/// The five cross-modal modeling orders. L is the depth-image (LiDAR) stream,
/// C the silhouette (camera) stream; "C<-L" means the C stream is modeled with
/// guidance from L. The two sequential orders differ in which stream is
/// modeled first and guide the second step with the first step's output.
enum class Strategy {
  kClOnly,        // C<-L only
  kLcOnly,        // L<-C only
  kSimultaneous,  // C<-L and L<-C simultaneously
  kLcThenCl,      // L<-C, then C<-F(L<-C)   (ACCA default)
  kClThenLc,      // C<-L, then L<-F(C<-L)   (ICTM default)
};

inline Strategy parse_strategy(const std::string& key) {
  if (key == "cl_only") return Strategy::kClOnly;
  if (key == "lc_only") return Strategy::kLcOnly;
  if (key == "simultaneous") return Strategy::kSimultaneous;
  if (key == "lc_then_cl") return Strategy::kLcThenCl;
  if (key == "cl_then_lc") return Strategy::kClThenLc;
  throw std::invalid_argument("unknown strategy '" + key +
                              "' (valid: cl_only, lc_only, simultaneous, cl_then_lc, lc_then_cl)");
}

inline const char* strategy_key(Strategy s) {
  switch (s) {
    case Strategy::kClOnly: return "cl_only";
    case Strategy::kLcOnly: return "lc_only";
    case Strategy::kSimultaneous: return "simultaneous";
    case Strategy::kLcThenCl: return "lc_then_cl";
    case Strategy::kClThenLc: return "cl_then_lc";
  }
  return "?";
}

/// Human-readable row label used by the ablation tables.
inline const char* strategy_label(Strategy s) {
  switch (s) {
    case Strategy::kClOnly: return "C<-L only";
    case Strategy::kLcOnly: return "L<-C only";
    case Strategy::kSimultaneous: return "C<-L and L<-C simultaneously";
    case Strategy::kLcThenCl: return "L<-C, then C<-F(L<-C)";
    case Strategy::kClThenLc: return "C<-L, then L<-F(C<-L)";
  }
  return "?";
}

constexpr Strategy kAccaDefaultStrategy = Strategy::kLcThenCl;
constexpr Strategy kIctmDefaultStrategy = Strategy::kClThenLc;

inline constexpr std::array<Strategy, 5> kAllStrategies = {Strategy::kClOnly, Strategy::kLcOnly,
                                                           Strategy::kSimultaneous, Strategy::kLcThenCl,
                                                           Strategy::kClThenLc};

}  // namespace licaf
