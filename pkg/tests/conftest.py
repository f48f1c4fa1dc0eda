import math
from dataclasses import replace

import numpy as np
import pytest

from otafl.domain import ClientProfile, SystemConfig


def make_profile(i=0, **kw) -> ClientProfile:
    base = dict(
        id=i,
        data_size=100,
        cycles_per_sample=1e6,
        cpu_freq=1e9,
        cpu_freq_max=1.2e9,
        iteration_factor=2.0,
        target_accuracy=0.5,
        energy_coeff=1e-28,
        tx_power=0.1,
        tx_power_max=0.2,
        bandwidth=1e6,
        channel_gain=1e-7,
        failure_count=0,
        delay_budget=10.0,
        energy_budget=1.0,
        min_selection_fraction=0.0,
        historical_loss=math.log(3),
    )
    base.update(kw)
    return ClientProfile(**base)


def make_cfg(**kw) -> SystemConfig:
    base = dict(noise_psd=1e-17, total_bandwidth=1e7, model_size_bits=1e6, min_reliability=0.0, min_accuracy=0.01)
    base.update(kw)
    return SystemConfig(**base)


def random_fleet(n, seed, **kw):
    """Small heterogeneous fleet with every client individually feasible."""
    rng = np.random.default_rng(seed)
    fleet = []
    for i in range(n):
        f = rng.uniform(0.5e9, 2e9)
        p = rng.uniform(0.05, 0.2)
        fleet.append(make_profile(
            i,
            data_size=int(rng.integers(50, 200)),
            cycles_per_sample=rng.uniform(1e6, 3e6),
            cpu_freq=f,
            cpu_freq_max=f * 1.2,
            iteration_factor=rng.uniform(1, 3),
            target_accuracy=rng.uniform(0.1, 0.5),
            tx_power=p,
            tx_power_max=p * 1.2,
            bandwidth=rng.uniform(0.5e6, 2e6),
            channel_gain=rng.uniform(1e-8, 1e-7),
            delay_budget=50.0,
            energy_budget=50.0,
            historical_loss=rng.uniform(0.2, 1.2),
            **kw,
        ))
    return fleet


@pytest.fixture
def cfg():
    return make_cfg()


@pytest.fixture
def profile():
    return make_profile()


__all__ = ["make_profile", "make_cfg", "random_fleet", "record", "replace"]


# -- acceptance report ------------------------------------------------------------

# criterion number -> list of (ok, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, list] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for c in sorted(ACCEPTANCE):
        results = ACCEPTANCE[c]
        ok = all(r[0] for r in results)
        if len(results) == 1:
            detail = results[0][1]
        else:
            bad = [d for r, d in results if not r]
            detail = f"{len(results) - len(bad)}/{len(results)} checks pass" + (f"; failing: {'; '.join(bad)}" if bad else "")
        terminalreporter.write_line(f"criterion {c:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
