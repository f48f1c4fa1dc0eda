"""
Per-client delay, energy and reliability
========================================

One client profile, then how its costs move with target accuracy and CPU speed.
"""

from dataclasses import replace

import numpy as np

from otafl.cost_model import client_costs
from otafl.domain import ClientProfile, SystemConfig

cfg = SystemConfig(noise_psd=1e-17, total_bandwidth=1e7, model_size_bits=2e6)
client = ClientProfile(
    id=0, data_size=120, cycles_per_sample=2e6, cpu_freq=1e9, cpu_freq_max=1.5e9,
    iteration_factor=2.0, target_accuracy=0.3, energy_coeff=1e-28, tx_power=0.1, tx_power_max=0.2,
    bandwidth=1e6, channel_gain=5e-8, failure_count=1, delay_budget=5.0, energy_budget=1.0,
    min_selection_fraction=0.1, historical_loss=1.1,
)

c = client_costs(client, cfg)
print(f"compute delay  {c.comp_delay:.3f} s")
print(f"uplink rate    {c.tx_rate / 1e6:.2f} Mbit/s -> airtime {c.tx_delay:.3f} s")
print(f"energy         {c.comp_energy:.4f} J compute + {c.tx_energy:.4f} J radio")
print(f"reliability    {c.reliability:.3f} (MTBF {c.mtbf:.3f} s)")

# A looser local accuracy target means fewer local iterations.
for eps in (0.05, 0.1, 0.3, 0.6):
    ci = client_costs(replace(client, target_accuracy=eps), cfg)
    print(f"eps={eps:<4}  delay {ci.comp_delay + ci.tx_delay:6.3f} s  energy {ci.comp_energy + ci.tx_energy:.4f} J")

# Doubling the clock halves compute time and quadruples compute energy.
for f in np.linspace(0.5e9, 1.5e9, 3):
    ci = client_costs(replace(client, cpu_freq=float(f)), cfg)
    print(f"f={f / 1e9:.1f} GHz  compute {ci.comp_delay:.3f} s  {ci.comp_energy:.4f} J")
