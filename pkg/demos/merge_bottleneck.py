"""A freeway merge and what ramp metering does to it.

Two roads feed one. After the start-up transient a queue sits on the
mainline while the ramp flows freely. Metering the ramp shifts the queue
without changing anything downstream of the merge.
"""

from kinwave import experiments as ex

plain = ex.measure_merge()
print("stationary merge (densities over jam density, flows over jam density times l/tau)")
for key in ("rho_B", "rho_C", "rho_E", "q_B", "q_E"):
    print(f"    {key:<6} {plain[key]:.4f}")

metered = ex.measure_merge_metered()
print("with the ramp metered")
for key in ("rho_B", "rho_E"):
    print(f"    {key:<6} {metered[key]:.4f}")
print(f"    largest downstream density change caused by metering: {metered['downstream_difference']:.1e}")
