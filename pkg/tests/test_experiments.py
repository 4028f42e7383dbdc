import numpy as np
import pytest

from fmou import experiments, simgen
from fmou.errors import ContractError


def test_load_spec_from_mapping():
    spec, reps = experiments.load_spec({"kind": "DIFFUSION", "noise_var": 0.0025, "replicates": 4}, seed=9)
    assert spec.kind == "DIFFUSION" and reps == 4 and spec.seed == 9


@pytest.mark.parametrize(
    "doc",
    [{"noise_var": 1.0}, {"kind": "FMOU_SYNTH", "replicates": 0}, {"kind": "FMOU_SYNTH", "colour": "red"}],
)
def test_load_spec_rejects(doc):
    with pytest.raises(ContractError):
        experiments.load_spec(doc)


def test_generate_is_reproducible_and_replicates_differ():
    spec = simgen.ExperimentSpec("FMOU_SYNTH", k=6, d=2, n=30, seed=5)
    a, b, c = experiments.generate(spec, 0), experiments.generate(spec, 0), experiments.generate(spec, 1)
    assert np.array_equal(a.Y, b.Y) and np.array_equal(a.U0, b.U0)
    assert not np.array_equal(a.Y, c.Y)
    assert np.allclose(a.U0.T @ a.U0, np.eye(2), atol=1e-12)


def test_substreams_are_independent_of_call_order():
    x = simgen.substream(3, "a", 1).standard_normal(4)
    simgen.substream(3, "b", 1).standard_normal(4)
    assert np.array_equal(x, simgen.substream(3, "a", 1).standard_normal(4))
    assert not np.array_equal(x, simgen.substream(3, "a", 2).standard_normal(4))


def test_ellipse_setup_scaling():
    spec = simgen.ExperimentSpec("ELLIPSE_SLIP", k=40, k_prime=60, n=20, noise_var=1e-4, seed=0)
    G, slips = experiments.ellipse_setup(spec)
    assert G.shape == (40, 60) and slips.shape == (60, 20)
    assert np.std(G @ slips) == pytest.approx(0.19, rel=1e-12)


def test_ellipse_needs_even_k():
    spec = simgen.ExperimentSpec("ELLIPSE_SLIP", k=41, k_prime=60, n=20, seed=0)
    with pytest.raises(ContractError):
        experiments.ellipse_setup(spec)


def test_run_replicate_greens_rows():
    spec = simgen.ExperimentSpec("GREENS_SYNTH", k=10, k_prime=30, d=3, n=40, noise_var=0.01, seed=2)
    rows = experiments.run_replicate(spec, 0)
    assert [r["method"] for r in rows] == ["FMOU"]
    assert rows[0]["error"] is None and rows[0]["rmse_s"] is not None and rows[0]["d_hat"] == 3


def test_summarize_means():
    rows = [
        experiments._row(simgen.ExperimentSpec("BRANIN"), "FMOU", r, rmse_m=v, wall_time_s=1.0)
        for r, v in enumerate([1.0, 2.0, 6.0])
    ]
    rows.append(experiments._row(simgen.ExperimentSpec("BRANIN"), "FMOU", 3, error="boom"))
    (s,) = experiments.summarize(rows)
    assert s["rmse_m"] == 3.0 and s["replicates"] == 4 and s["failures"] == 1 and s["rmse_s"] is None
