#pragma once

#include <filesystem>
#include <iostream>

#include "rtd/config.hpp"

#ifndef RTD_CACHE_DIR
#define RTD_CACHE_DIR "artifacts"
#endif

namespace rtd::testing {

// Default offline artifacts, built once into the shared cache and reused by
// every test binary.
inline const OfflineArtifacts& shared_offline() {
  static const OfflineArtifacts a = [] {
    const std::filesystem::path dir = RTD_CACHE_DIR;
    std::filesystem::create_directories(dir);
    PipelineLog log{[](const std::string& s) { std::cerr << "[offline] " << s << "\n"; }};
    return prepare_offline(OfflineConfig{}, dir, log);
  }();
  return a;
}

inline const FrsPolynomial& entry_for(double speed) {
  const auto& lib = shared_offline().library;
  return lib.entries[select_frs(lib, speed, 0.0).index];
}

}  // namespace rtd::testing
