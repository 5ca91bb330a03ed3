// Fits a shift-share regression on synthetic shares and prints the
// standard error under each inference method.

#include <cstdio>

#include "shiftshare/dgp.hpp"
#include "shiftshare/estimate.hpp"
#include "shiftshare/infer.hpp"

using namespace shiftshare;

int main() {
  RngStream rng(2024, kSetupStream);
  ShareSynthesis spec;
  spec.regions = 300;
  spec.sectors = 60;
  spec.concentration = 0.5;
  const SharesMatrix shares = synth_shares(spec, rng);

  const Shifters x = draw_shifters(ShifterDgp::iid_normal(1.0), shares.n_sectors(), rng);
  const Shifters placebo = draw_shifters(ShifterDgp::iid_normal(1.0), shares.n_sectors(), rng);

  // Outcome loads on a shift-share term with the same shares but unrelated shocks.
  Design d;
  d.y1 = 0.5 * (shares.w() * x.values) + shares.w() * placebo.values;
  for (Index i = 0; i < d.y1.size(); ++i) d.y1(i) += 0.3 * rng.normal();
  d.z = Matrix::Ones(shares.n_regions(), 1);

  const FitResult fit = ols_fit(d, shares, x);
  const SectorProjection proj = sector_project(shares, fit.x_dotdot);

  const InferenceResult rows[] = {
      se_conventional(fit, 0.95),
      se_akm(fit, shares, proj, 0.95),
      infer_akm0(fit, shares, proj, 0.95),
  };
  std::printf("%-8s %10s %10s %22s\n", "method", "estimate", "eff. se", "95% set");
  for (const auto& r : rows) {
    std::printf("%-8s %10.4f %10.4f   [%9.4f, %9.4f] %s\n", to_string(r.method), r.estimate,
                r.ci.effective_se, r.ci.lo, r.ci.hi, to_string(r.ci.shape));
  }
  return 0;
}
