#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "cml/pinn.hpp"

namespace cml {

/// Everything needed to rebuild a trained material backend.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelFamily family = ModelFamily::Damage;
  Task task = Task::Damage;
  MaterialSet material;
  LossWeights weights;
  SwitchOptions switches;
  TrainingConfig training;  // echo; training.seed is the RNG seed
  StateNets nets;
};

// Binary layout, all integers and floats little-endian:
//   "CPNN"                       4 bytes
//   version                      u32
//   family, task                 u32, u32
//   plasticity E sy0 h1 h2       4 x f64
//   damage K Y0 h1 h2            4 x f64
//   cz3d Kn Ks1 Ks2 Y0 h1 h2     6 x f64
//   weights ue ux ev yl ke ky    6 x f64
//   smooth, symmetric_sign       u8, u8
//   switch R                     f64
//   lr, epochs, batch, seed      f64, u32, u32, u64
//   beta1 beta2 eps_adam R       4 x f64
//   n_nets                       u32 (= 2)
//   per net:
//     name                       u32 length + bytes
//     activation kind, R         u32, f64
//     n_sizes, sizes             u32, n_sizes x u32
//     per layer: W (row-major, out x in) then b, f64

/// Throws IoFailure.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);

/// Validates magic, version, enum tags and shapes before building any
/// network. Throws BadMagic, UnsupportedVersion, ShapeMismatch, IoFailure.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace cml
