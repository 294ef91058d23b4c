"""
Example 2: a battery cell cross-section under two random heat pulses.

The cell is held at T_o = 18 C on its boundary. Two pulses of random onset,
duration and intensity heat it during a six hour horizon, and a deterministic
volumetric heating rate (K/s) is optimized so that the expected temperature
stays near T_o.

The full 29 x 100 grid takes a few minutes. This demo uses a coarser grid; pass
``--full`` for the default resolution.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from adagrad_control.config import ExperimentConfig
from adagrad_control.experiments import run_experiment

overrides = {"problem": "example2", "seed": 7}
if "--full" not in sys.argv:
    overrides.update({"grid.n_cells": [8, 30], "grid.n_t": 96, "iters": 20})
config = ExperimentConfig.from_dict(overrides)

# %% run: trace, controls, energy and monitor curves land in one directory
out = Path(tempfile.mkdtemp(prefix="battery_"))
result = run_experiment(config, out=out)
meta = result.metadata
print(f"artifacts in {out}")
print(f"M = {meta['constants']['M']:.4g}, 4 eta M < sqrt(b0): {meta['hypothesis_4_eta_M_below_sqrt_b0']}")


def read(name):
    rows = [ln for ln in open(out / name) if not ln.startswith("#")]
    return np.array([[float(x) for x in ln.split(",")] for ln in rows[1:]])


# %% expected deviation energy with and without control
energy = read("energy.csv")
t_min = energy[:, 0] / 60
peak = np.argmax(energy[:, 1])
print(f"\npeak uncontrolled energy {energy[peak, 1]:.3e} at {t_min[peak]:.0f} min, "
      f"controlled there {energy[peak, 2]:.3e}")
print(f"time-integrated energy reduction {meta['energy']['reduction']:.1%}")

# %% temperature at the monitoring node
mon = read("monitor.csv")
print("\n  t [min]   uncontrolled   controlled")
for i in np.linspace(0, len(mon) - 1, 9).astype(int):
    print(f"{mon[i, 0] / 60:>9.0f} {mon[i, 1]:>14.5f} {mon[i, 2]:>12.5f}")
