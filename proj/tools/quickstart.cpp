// Simulate a FAR(1) sample with a mean shift halfway and test it.

#include <cstdio>

#include "fcusum/cusum.hpp"
#include "fcusum/simulate.hpp"

int main() {
  fcusum::SimSpec spec;
  spec.n = 200;
  spec.kernel = fcusum::KernelKind::Wiener;
  spec.psi = 0.4;
  spec.change = fcusum::ChangeSpec{0.5, fcusum::ChangeShape::Sin, 0.5};
  spec.seed = 2024;
  const fcusum::FunctionalSample sample = fcusum::far1_generate(spec);

  fcusum::TestConfig cfg;
  cfg.d = 2;
  cfg.h = fcusum::default_bandwidth(spec.n);
  const fcusum::TestResult r = fcusum::run_test(sample, cfg);

  std::printf("T = %.3f, critical = %.3f, p = %.3g -> %s\n", r.statistic, r.critical_value, r.p_vostrikova,
              r.reject ? "reject" : "keep");
  std::printf("change estimate: %d (true %d)\n", r.k_hat.standardized, spec.change->change_index(spec.n));
}
