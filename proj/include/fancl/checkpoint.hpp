#pragma once

#include <cstdint>
#include <string>

#include "fancl/adam.hpp"
#include "fancl/encoder.hpp"
#include "fancl/fana.hpp"
#include "fancl/memory_bank.hpp"

// Checkpoints are tensor containers with named sections: encoder geometry
// and counters under meta/, the three parameter sets under theta/,
// theta_prime/ and fusion/ (including batchnorm running statistics), the
// frozen probe under probe/, the epoch's banks under banks/, and optimizer
// moments under adam/. Loading restores training to the byte-exact state.

namespace fancl {

struct TrainState {
    EncoderConfig encoder;
    BranchParams<float> theta;
    BranchParams<float> theta_prime;
    FusionParams<float> fusion;
    ActivationProbe<float> probe;
    BankSet<float> banks;
    Adam<float> adam;
    std::int64_t epochs_done = 0;  // number of completed epochs
    std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

}  // namespace fancl
