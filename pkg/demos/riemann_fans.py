"""Wave fans at a lane drop.

A two-lane road meets a one-lane road. Depending on the two densities the
boundary passes the upstream flow, discharges at capacity, or backs traffic
up behind a standing wave. Each case is solved exactly and checked against
the supply-demand flux the network engine uses.
"""

from kinwave import riemann_link as rl
from kinwave.fundamental_diagram import Triangular

fd = Triangular(rho_j=1.0, vf=1.0, rho_c=0.2)

cases = [
    ("light traffic flows through", (2, 0.1), (1, 0.05)),
    ("upstream demand exceeds the narrow road", (2, 0.35), (1, 0.1)),
    ("a jam downstream spills back", (2, 0.3), (1, 0.9)),
    ("queue discharging into an empty road", (2, 1.2), (1, 0.0)),
]

for title, (al, rl_), (ar, rr) in cases:
    left, right = rl.RoadState(al, rl_, fd), rl.RoadState(ar, rr, fd)
    fan = rl.classify(left, right)
    print(f"{title}: type {fan.as_dict()['type']}, boundary flux {fan.flux:.4f}")
    for w in fan.as_dict()["waves"]:
        lo, hi = w["speed"]
        speed = f"{lo:+.4f}" if lo == hi else f"{lo:+.4f} .. {hi:+.4f}"
        print(f"    {w['kind']:<11} {w['left']['rho']:.3f} -> {w['right']['rho']:.3f}  speed {speed}")
    assert abs(fan.flux - rl.boundary_flux_sd(left, right)) < 1e-12
print("every fan flux matches min(demand, supply)")
