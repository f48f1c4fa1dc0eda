import json

import numpy as np
import pytest

from otafl.domain import SelectionHistory, SelectionMask, validate_fleet
from otafl.fitness import feasibility
from otafl.scenario import (
    ConfigError,
    GeneratorSpec,
    generate_scenario,
    load_scenario,
    reference_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_json,
)


def test_generator_is_clean_at_n50():
    sc = generate_scenario(GeneratorSpec(n=50), seed=1)
    assert len(sc.fleet) == 50
    assert not [m for m in validate_fleet(sc.fleet, sc.system) if not m.startswith("warning:")]


def test_generator_deterministic_bytes():
    a = scenario_to_json(generate_scenario(GeneratorSpec(n=8), seed=4))
    b = scenario_to_json(generate_scenario(GeneratorSpec(n=8), seed=4))
    c = scenario_to_json(generate_scenario(GeneratorSpec(n=8), seed=5))
    assert a == b and a != c


def test_inverted_range_rejected():
    with pytest.raises(ConfigError) as err:
        GeneratorSpec(cpu_freq=(2e9, 1e9))
    assert err.value.field == "fleet.generator.cpu_freq"


def test_default_ranges_make_constraints_bind():
    binding = 0
    for seed in range(100):
        sc = generate_scenario(GeneratorSpec(), seed=seed)
        n = len(sc.fleet)
        rep = feasibility(SelectionMask.from_array(np.ones(n)), sc.fleet, sc.system, SelectionHistory.empty(n))
        binding += not rep.feasible
    assert binding / 100 >= 0.9


def test_roundtrip_equals_in_memory(tmp_path):
    sc = generate_scenario(GeneratorSpec(n=6), seed=2, selector={"kind": "ga", "population": 20})
    path = save_scenario(sc, tmp_path / "s.json")
    again = load_scenario(path)
    assert again == sc
    assert scenario_to_json(again) == path.read_text()


def test_generator_block_equals_explicit_profiles():
    spec = GeneratorSpec(n=5, seed=3)
    sc = generate_scenario(spec, 3)
    d = json.loads(scenario_to_json(sc))
    d["fleet"] = {"generator": spec.to_dict()}
    for k in ("total_bandwidth", "master_seed"):
        d["system"].pop(k)
    assert scenario_from_dict(d) == sc


def test_reference_scenario():
    a = reference_scenario(0)
    assert len(a.fleet) == 10 and a.selector == {"kind": "gwo", "population_size": 40}
    assert a.data.noisy_clients == 3
    assert reference_scenario(0, "random", k=3).selector == {"kind": "random", "k": 3}
    assert reference_scenario(1).fleet != a.fleet


def _base():
    return json.loads(scenario_to_json(generate_scenario(GeneratorSpec(n=3), seed=0)))


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda d: d.pop("system"), "system"),
        (lambda d: d["system"].pop("noise_psd"), "system.noise_psd"),
        (lambda d: d["fleet"]["profiles"][1].pop("cpu_freq"), "fleet.profiles[1].cpu_freq"),
        (lambda d: d["selector"].update(kind="sa"), "selector.kind"),
        (lambda d: d["selector"].update(bogus=1), "selector.bogus"),
        (lambda d: d.update(extra={}), "extra"),
        (lambda d: d["fleet"].update(generator={"n": 3}), "fleet"),
        (lambda d: d["trainer"].update(learning_rate=-1), "trainer"),
    ],
)
def test_config_errors_name_the_field(mutate, field):
    d = _base()
    mutate(d)
    with pytest.raises(ConfigError) as err:
        scenario_from_dict(d)
    assert err.value.field == field


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "fleet": {},\n  oops\n}\n')
    with pytest.raises(ConfigError) as err:
        load_scenario(p)
    assert err.value.line == 3
