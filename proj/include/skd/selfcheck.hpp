// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace skd::selfcheck {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;  // worst observed error, or the first failure
  double seconds = 0.0;
};

/// Vectorised losses against scalar-loop oracles, 1e-6 absolute.
SuiteResult loss_oracles(int instances = 100, std::uint64_t seed = 1);
/// Analytic gradients against central differences (h = 1e-5), relative error < 1e-4.
SuiteResult gradients(int instances = 100, std::uint64_t seed = 2);
/// Gradients w.r.t. the detached projections are exactly zero, w.r.t. predictions nonzero.
SuiteResult stop_gradient(int instances = 100, std::uint64_t seed = 3);
/// Mechanism reductions on random loss inputs and on real model batches, 1e-9.
SuiteResult reduction_identities(int instances = 100, std::uint64_t seed = 4);
/// total_loss unchanged by swapping the two views, 1e-9.
SuiteResult view_swap_symmetry(int instances = 100, std::uint64_t seed = 5);
/// Shape, range, crop offsets, flip involution and seeded determinism of views.
SuiteResult augmentation_contracts(int views = 1000, std::uint64_t seed = 6);
/// Accuracy streams through plateau_update against hand-derived lr sequences.
SuiteResult plateau_schedule();
/// Momentum-SGD recurrence on scalar probes.
SuiteResult sgd_recurrence();

std::vector<SuiteResult> run_all();
/// Prints one PASS/FAIL line per suite; returns true when all pass.
bool report(const std::vector<SuiteResult>& results, std::ostream& os);

}  // namespace skd::selfcheck
