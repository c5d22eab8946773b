#include "mtgrr/common.hpp"

#include <cstdio>

namespace mtgrr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::InconsistentN: return "InconsistentN";
    case ErrorCode::ChannelCountMismatch: return "ChannelCountMismatch";
    case ErrorCode::NoValidNegative: return "NoValidNegative";
    case ErrorCode::DegenerateNegative: return "DegenerateNegative";
    case ErrorCode::ConfigConflict: return "ConfigConflict";
    case ErrorCode::NaNLoss: return "NaNLoss";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::TooFewRegions: return "TooFewRegions";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string_view name_of(Modality m) {
  switch (m) {
    case Modality::Region: return "region";
    case Modality::Poi: return "poi";
    case Modality::Taxi: return "taxi";
    case Modality::LandUse: return "landuse";
    case Modality::Road: return "road";
    case Modality::Remote: return "remote";
  }
  return "unknown";
}

Modality modality_from_name(std::string_view name) {
  for (Modality m : kAllModalities) {
    if (name_of(m) == name) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown modality '" + std::string(name) + "'");
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace mtgrr
