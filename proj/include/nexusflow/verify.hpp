#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nexusflow/coupling.hpp"

namespace nexusflow {

struct PropertyResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerifyOptions {
    std::uint64_t seed = 0;
    // Round-trip property runs on stacks with the clamp disabled and weights
    // blown up by fault_scale; it is expected to fail.
    bool inject_fault = false;
    double fault_scale = 50.0;
    std::size_t round_trip_inputs = 100;
    std::size_t gradient_configs = 5;  // per checked component
    std::size_t identity_trials = 1000;
    std::size_t lemma_stack_pairs = 5;
    std::size_t lemma_fit_samples = 10000;
    std::size_t lemma_held_out = 1000;
    double lemma_radius = 3.0;
    double lemma_safety = 1.5;
    // Held-out pairs: two independent points of the ball by default; with
    // close pairs they follow the sample_pairs scheme used for L-hat.
    bool lemma_close_pairs = false;
};

/// Random stack with non-trivial s/t nets (no identity initialization).
CouplingStack random_stack(std::size_t dim, std::size_t depth, Prng& prng, double clamp = 2.0);
// Multiplies every weight and bias of the stack by `scale`.
void scale_stack(CouplingStack& stack, double scale);

PropertyResult check_round_trip(const VerifyOptions& options);
PropertyResult check_identity_half(const VerifyOptions& options);
PropertyResult check_mlp_gradients(const VerifyOptions& options);
PropertyResult check_coupling_gradients(const VerifyOptions& options);
PropertyResult check_stack_gradients(const VerifyOptions& options);
PropertyResult check_surrogate_gradients(const VerifyOptions& options);
PropertyResult check_alignment_gradients(const VerifyOptions& options);
PropertyResult check_task_loss_gradients(const VerifyOptions& options);
PropertyResult check_alignment_identities(const VerifyOptions& options);
PropertyResult check_lemma_bound(const VerifyOptions& options);
PropertyResult check_mmd_sanity(const VerifyOptions& options);

std::vector<PropertyResult> run_verify_suite(const VerifyOptions& options);

}  // namespace nexusflow
