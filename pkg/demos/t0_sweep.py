"""How the admissible range of t shrinks as the metric gets bumpier.

t0 is the largest t for which the twisted curvature stays above a floor.
Scaling a fixed perturbation up lowers the minimum curvature density and
with it t0.  With a cutoff profile the curvature of the cutoff itself is the
binding term, so t0 no longer sees the perturbation at these scales.

    python3 demos/t0_sweep.py
"""
from bergman_lab.geometry import CutoffProfile, MetricSpec, Mode, estimate_t0

prof = CutoffProfile(-0.8, -0.16)
print(f"{'scale':>6} {'min density':>12} {'t0 (eta=1)':>11} {'t0 (cutoff)':>12}")
for s in (0.0, 0.25, 0.5, 1.0, 1.5):
    modes = (Mode(1, 1, 0.03 * s), Mode(2, 0, 0.02 * s), Mode(2, -1, 0.005 * s))
    m = MetricSpec(modes if s else (), hsigma_scale=0.9)
    dmin = m.check_positive()
    print(f"{s:6.2f} {dmin:12.4f} {estimate_t0(m, None, None):11.3f} {estimate_t0(m, None, prof):12.3f}")
