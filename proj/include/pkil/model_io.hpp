#pragma once

// Model files (.pkil) are JSON documents:
//
//   {
//     "format": "pkil-model", "version": 1,
//     "pk": {"checksum": "fnv1a64:...", "source": "<canonical pk text>"},
//     "kernel": {"kind": "gaussian", "scale": 0.5},
//     "tau": 0.05,
//     "thetas": {"C1": 0.41, ...},
//     "gammas": {"C1": -0.12, ...},
//     "embedder": {"kind": "hash", "dim": 512, "seed": 7},     (optional)
//     "training": {"optimizer": "grid", "final_loss": ..., "epochs": ...,
//                  "converged": true, "grid_step": 0.001, "batch_size": 16,
//                  "seed": 0, "examples": 400}
//   }
//
// Doubles are written with round-trip precision.

#include <filesystem>

#include "pkil/rule_engine.hpp"
#include "pkil/text_util.hpp"

namespace pkil {

Json model_to_json(const ThresholdModel& model);
/// Verifies the embedded pk against its checksum.
ThresholdModel model_from_json(const Json& doc);

void save_model(const ThresholdModel& model, const std::filesystem::path& path);
ThresholdModel load_model(const std::filesystem::path& path);
/// Also checks that the model was trained against `pk`.
ThresholdModel load_model(const std::filesystem::path& path, const ProcessKnowledge& pk);

}  // namespace pkil
