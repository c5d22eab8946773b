#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace mtgrr {

/// Dense row-major matrix used for every feature table and parameter block.
/// Rows index regions / nodes / images.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class ErrorCode {
  MissingFile,
  SchemaMismatch,
  DanglingReference,
  NonFiniteValue,
  InvalidSpec,
  KTooLarge,
  InconsistentN,
  ChannelCountMismatch,
  NoValidNegative,
  DegenerateNegative,
  ConfigConflict,
  NaNLoss,
  VersionMismatch,
  CorruptFile,
  SingularSystem,
  TooFewRegions,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Node-block / channel order shared by the heterogeneous graph, the expert
/// bank and the gating network.
enum class Modality : int { Region = 0, Poi = 1, Taxi = 2, LandUse = 3, Road = 4, Remote = 5 };

inline constexpr int kNumModalities = 6;
inline constexpr int kNumAggregated = 5;  // every modality except Region

inline constexpr std::array<Modality, kNumModalities> kAllModalities = {
    Modality::Region, Modality::Poi, Modality::Taxi, Modality::LandUse, Modality::Road, Modality::Remote};
inline constexpr std::array<Modality, kNumAggregated> kAggregatedModalities = {
    Modality::Poi, Modality::Taxi, Modality::LandUse, Modality::Road, Modality::Remote};

constexpr int index_of(Modality m) { return static_cast<int>(m); }

/// Short lowercase name, also used as the on-disk file stem ("poi" -> poi.csv).
std::string_view name_of(Modality m);
Modality modality_from_name(std::string_view name);

/// POI, taxi, land-use and road tables hold nonnegative integer counts.
constexpr bool is_count_modality(Modality m) {
  return m == Modality::Poi || m == Modality::Taxi || m == Modality::LandUse || m == Modality::Road;
}

/// 64-bit FNV-1a, used for config and dataset fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace mtgrr
