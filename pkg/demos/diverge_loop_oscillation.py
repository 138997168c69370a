"""A diverge-merge loop that never settles.

With a share xi of traffic sent over the short branch, the loop either
settles to an equilibrium or keeps oscillating, depending on whether xi is
above or below one third. Here xi = 0.45 oscillates; the density at the end
of the shared link is fitted with a periodic logistic waveform.
"""

from kinwave import analysis as an
from kinwave import network as nw
from kinwave import scenarios as sc

built = sc.build(sc.load_builtin("ch7-periodic(0.45)"))
run = nw.run(built.scenario, probes=[nw.ProbeSpec("2", -1, 1)])
fd = built.scenario.network.link("2").fd
probe = run.probes["2:-1"]
fit = an.fit_periodic(probe.t, probe.rho[:, 0] / fd.rho_j)
print(f"oscillating: {fit.ok}, {fit.crossings} cycles after the transient")
print(f"period {fit.period:.4f} h, density between {fit.rho_min:.3f} and {fit.rho_max:.3f} of jam")
late = probe.t >= 0.4 * probe.t[-1]
print(f"mean flow at the end of link 2: {(probe.q[late, 0] / fd.lane_capacity).mean():.3f} lane capacities")

calm = nw.run(sc.build(sc.apply_overrides(sc.load_builtin("ch7-periodic(0.25)"),
                                          ["numerics.horizon=4.2", "numerics.steps=24000"])).scenario)
reached, t_eq = an.equilibrium_from_changes(calm.max_change, calm.dt)
print(f"with xi = 0.25 the loop settles: {reached} (at {t_eq:.2f} h)")
