import json
import warnings

import numpy as np
import pandas as pd
import pytest

from exciton_transfer import io, scenarios
from exciton_transfer.errors import InvalidModelError
from exciton_transfer.scenarios import (EnsembleSummary, PRESETS, SweepConfig, coupling_ratio_table,
                                        expand_values, preset_params, reproduce_figure, run_disorder_ensemble,
                                        run_scaling_study, run_sweep)

FAST = {"phonon_cutoff": 4}


def _fast_config(**kw):
    base = dict(preset="p1", values=[3.0], overrides=FAST, t_final=60.0, n_records=201, fit=False)
    base.update(kw)
    return SweepConfig(**base)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def test_presets_expand_exactly():
    expected = {"p1": (0.039552, 1.0), "p2": (0.010506, 1.0), "p3": (0.111707, 1.0), "p4": (0.030263, 1.5)}
    for name, (gamma, p) in expected.items():
        m = preset_params(name)
        assert (m.gamma, m.p) == (gamma, p)
        assert (m.J, m.epsilon, m.nbar, m.g, m.omega) == (0.3, 3.0, 0.01, 1.0, 1.0)
    assert preset_params("p2", gamma=0.5).gamma == 0.5
    with pytest.raises(InvalidModelError):
        preset_params("p9")


def test_expand_values_forms():
    assert expand_values([1, 2.5]) == (1.0, 2.5)
    assert expand_values({"start": 0.2, "stop": 0.3, "step": 0.02}) == (0.2, 0.22, 0.24, 0.26, 0.28, 0.3)
    assert expand_values({"start": 0.0, "stop": 1.0, "num": 3}) == (0.0, 0.5, 1.0)
    assert expand_values({"start": 1e-3, "stop": 1e-1, "num": 3, "log": True}) == pytest.approx((1e-3, 1e-2, 1e-1))
    assert len(expand_values({"start": 0.2, "stop": 4.5, "step": 0.02})) == 216


@pytest.mark.parametrize("kw", [
    {"values": []},
    {"values": [1.0, float("nan")]},
    {"replicates": 0},
    {"replicates": 1.5},
    {"n_records": 50},
    {"sigma_g": -0.1},
    {"axis": "colour"},
    {"overrides": {"gamma": -1.0}},
])
def test_config_validation(kw):
    base = {"values": [1.0]}
    base.update(kw)
    with pytest.raises(InvalidModelError):
        SweepConfig(**base)


def test_config_roundtrip_and_aliases():
    cfg = SweepConfig(axis="L", values=[2, 3], preset="p4")
    assert cfg.axis == "sites_per_monomer"
    assert cfg.params_at(3.0).sites_per_monomer == 3
    assert SweepConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(InvalidModelError):
        SweepConfig.from_dict({"values": [1.0], "bogus": 1})


def test_sweep_table_layout():
    cfg = _fast_config(axis="epsilon", values=[1.0, 3.0], replicates=2, fit=True)
    df = run_sweep(cfg)
    assert list(df["value"]) == [1.0, 1.0, 3.0, 3.0]
    assert list(df["replicate"]) == [0, 1, 0, 1]
    assert (df["status"] == "ok").all()
    assert df["run_id"].nunique() == 1
    assert df["run_id"].iloc[0] == scenarios.sweep_run_id(cfg)
    for col in ("k_T", "Gamma", "P_SS", "C12_final", "C_acceptor_final", "purity_final", "J_TT_over_gamma"):
        assert col in df
    # no disorder: replicates are the same run
    assert df["k_T"].iloc[0] == df["k_T"].iloc[1]


def test_sweep_marks_failures_and_continues():
    cfg = _fast_config(axis="epsilon", values=[3.0, 3.5], rtol=1e-8, atol=1e-10)
    with pytest.MonkeyPatch.context() as mp:
        original = scenarios.simulate

        def flaky(params, *a, **kw):
            if params.epsilon == 3.5:
                from exciton_transfer.errors import IntegrationFailure
                raise IntegrationFailure("step size underflow")
            return original(params, *a, **kw)

        mp.setattr(scenarios, "simulate", flaky)
        df = run_sweep(cfg)
    assert list(df["status"]) == ["ok", "failed"]
    assert "IntegrationFailure" in df["diagnostic"].iloc[1]


def test_sweep_output_is_byte_identical(tmp_path):
    cfg = _fast_config(axis="sigma_g", values=[0.1, 0.2], replicates=2, master_seed=7)
    paths = []
    for k in range(2):
        paths.append(io.write_table(run_sweep(cfg), tmp_path / f"run{k}"))
    assert paths[0].read_bytes() == paths[1].read_bytes()
    other = io.write_table(run_sweep(cfg.replace(master_seed=8)), tmp_path / "other")
    assert other.read_bytes() != paths[0].read_bytes()


def test_parallel_sweep_matches_serial():
    cfg = _fast_config(axis="sigma_eps", values=[0.05], replicates=3, master_seed=3)
    a, b = run_sweep(cfg, threads=1), run_sweep(cfg, threads=2)
    pd.testing.assert_frame_equal(a, b)


def test_ensemble_zero_width_has_no_spread():
    cfg = _fast_config(replicates=3)
    (s,) = run_disorder_ensemble(cfg, [0.0], "g")
    assert isinstance(s, EnsembleSummary)
    assert s.q25 == s.median == s.q75 == pytest.approx(1.0, rel=1e-12)
    assert s.n_realizations == 3 and s.n_failed == 0


def test_ensemble_summary_order_and_permutation_invariance():
    cfg = _fast_config(replicates=4, master_seed=11)
    summaries, table = run_disorder_ensemble(cfg, [0.1, 0.3], "eps", return_table=True)
    for s in summaries:
        assert s.q25 <= s.median <= s.q75
        assert s.n_realizations == 4
    assert summaries[1].q75 - summaries[1].q25 > summaries[0].q75 - summaries[0].q25
    # reversing execution order changes nothing
    reversed_run, _ = run_disorder_ensemble(cfg, [0.3, 0.1], "eps", return_table=True)
    assert {s.axis_value: s for s in reversed_run} == {s.axis_value: s for s in summaries}
    shuffled = table.sample(frac=1.0, random_state=0)
    for s in summaries:
        ratios = shuffled[shuffled["sigma"] == s.axis_value]["k_T_ratio"]
        assert np.median(ratios) == pytest.approx(s.median, rel=1e-15)


def test_ensemble_preconditions():
    with pytest.raises(InvalidModelError):
        run_disorder_ensemble(_fast_config(replicates=1), [0.1])
    with pytest.raises(InvalidModelError):
        run_disorder_ensemble(_fast_config(replicates=2), [0.1], "J")


def test_scaling_respects_resource_cap():
    df = run_scaling_study("monomer-size", 3, overrides={"phonon_cutoff": 4}, resource_cap=20, n_records=101)
    assert list(df["size"]) == [2, 2, 3, 3]
    assert list(df["status"]) == ["ok", "ok", "skipped", "skipped"]
    assert "exceeds cap" in df["diagnostic"].iloc[-1]
    with pytest.raises(InvalidModelError):
        run_scaling_study("tower", 3)


def test_chain_length_runs_both_truncations():
    df = run_scaling_study("chain-length", 3, overrides={"phonon_cutoff": 3}, min_size=3, n_records=101)
    assert [t if t == t else None for t in df["truncation"]] == [None, 5.0]
    assert (df["k_T_definition"] == "one-minus-acceptor").all()


def test_coupling_ratio_table_reference_point():
    df = coupling_ratio_table(p_values=[1.0], d_values=[2])
    row = df[(df["sweep"] == "p")].iloc[0]
    # J=1, p=1, d=2: couplings 31/60, -1/60, 1/15
    assert row["TT_over_SS_sq"] == pytest.approx(31 ** 2, rel=1e-12)
    assert row["TT_over_TS_sq"] == pytest.approx((31 / 4) ** 2, rel=1e-12)


def test_reproduce_figure_writes_dataset_and_manifest(tmp_path):
    data, man = reproduce_figure("fig7", tmp_path)
    df = pd.read_csv(data)
    manifest = json.loads(man.read_text())
    assert set(df["run_id"]) == {manifest["run_id"]}
    for key in ("schema_version", "inputs", "seed", "tolerances", "version", "wall_time_s"):
        assert key in manifest
    assert manifest["inputs"]["figure"] == "fig7"
    with pytest.raises(KeyError):
        reproduce_figure("fig99", tmp_path)


def test_every_figure_tag_has_a_recipe():
    tags = {"fig2a", "fig2b", "fig2c", "fig2d", "fig3a", "fig3b", "fig3c", "fig3d", "fig4a", "fig4c",
            "fig4d", "fig5a", "fig5b", "fig5c", "fig5d", "fig7", "fig8", "fig9"}
    assert set(scenarios.FIGURES) == tags
    assert set(PRESETS) >= {"p1", "p2", "p3", "p4"}
