"""Travel times on two routes from cumulative counts.

Six hours of demand leave one origin. Seventy percent take a 20-mile route
and the rest a 40-mile route; both rejoin before the destination. Average
travel times per route come from the areas between the cumulative curves
at the origin and at the destination.
"""

import numpy as np

from kinwave import analysis as an
from kinwave import network as nw
from kinwave import scenarios as sc

built = sc.build(sc.load_builtin("ch6-network"))
print(f"CFL number {nw.cfl_number(built.scenario):.3f}, {built.scenario.steps} steps")
run = nw.run(built.scenario)
up = an.n_curve(run.exit_flux("0"), run.dt, "origin")
down = an.n_curve(run.entry_flux("1"), run.dt, "destination")
names = [c.id for c in built.scenario.network.commodities]
for p, name in enumerate(names):
    rep = an.travel_time_report(up.commodity(p), down.commodity(p), commodity=p)
    print(f"{name:>6} route: {rep.vehicles:8.0f} vehicles, average travel time {rep.att:.4f} h")
left = up.total[-1] - down.total[-1]
print(f"vehicles still in the network at the end: {left:.3g}")
print(f"mean departure time from the origin: {an.loading_time(run.exit_flux('0').sum(axis=1), run.dt):.3f} h")
print(f"largest link content at any time: {np.max(run.link_counts.sum(axis=2)):.0f} vehicles")
