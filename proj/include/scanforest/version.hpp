#pragma once

namespace scanforest {

inline constexpr const char* kVersion = "0.1.0";

// Bump when the corresponding on-disk format changes; readers reject
// versions they do not know.
inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kModelSchemaVersion = 1;
inline constexpr int kGeneratorSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;
inline constexpr int kBaselineTableVersion = 1;

}  // namespace scanforest
