import json

import numpy as np
import pytest

from mmot_ggr.assembly import assemble, energy
from mmot_ggr.densities import builtin
from mmot_ggr.ggr import GgrConfig, GgrError, beta_for, ggr_run, initial_mesh, load_level
from mmot_ggr.multistart import MultistartConfig, multistart_solve
from mmot_ggr.pbcd import PbcdConfig


def small_config(**kw):
    spec = builtin(kw.pop("system", "system1"))
    ms = MultistartConfig(n_starts=kw.pop("n_starts", 4), seed=kw.pop("seed", 0))
    return GgrConfig(spec=spec, K0=kw.pop("K0", 8), levels=kw.pop("levels", 1), multistart=ms, **kw)


def test_beta_table():
    expected = {1: 4.0, 9: 4.0, 10: 2.0, 35: 2.0, 36: 1.0, 79: 1.0, 80: 0.25, 159: 0.25, 160: 0.125,
                320: 2 ** -4, 640: 2 ** -5, 1280: 2 ** -6, 2560: 2 ** -7, 5120: 2 ** -8, 10 ** 6: 2 ** -8}
    for K, beta in expected.items():
        assert beta_for(K) == beta
    with pytest.raises(ValueError):
        beta_for(0)


def test_config_validation():
    spec = builtin("system1")
    with pytest.raises(ValueError):
        GgrConfig(spec=spec, K0=1)
    with pytest.raises(ValueError):
        GgrConfig(spec=spec, K0=8, levels=-1)
    with pytest.raises(ValueError):
        GgrConfig(spec=spec, K0=8, r=0.0)
    with pytest.raises(ValueError):
        GgrConfig(spec=spec, K0=8, split="thirds")
    with pytest.raises(ValueError):
        GgrConfig(spec=spec, K0=8, sigma={1: -1.0})


def test_level_params_overrides():
    cfg = small_config(beta={"1": 0.5}, sigma={2: 1e-6}, eps_outer={0: 1e-9})
    beta, pbcd = cfg.level_params(0, 12)
    assert beta == beta_for(12) and pbcd.sigma == 1e-3 and pbcd.eps_outer == 1e-9
    beta, pbcd = cfg.level_params(1, 24)
    assert beta == 0.5 and pbcd.eps_outer == 1e-8
    assert cfg.level_params(2, 48)[1].sigma == 1e-6


def test_zero_levels_equals_multistart():
    cfg = small_config(levels=0)
    res = ggr_run(cfg)
    mesh = initial_mesh(cfg.spec, cfg.K0)
    p = assemble(mesh, cfg.spec, beta_for(mesh.K), "point")
    Z, _ = multistart_solve(p, cfg.multistart)
    assert np.array_equal(res.Z, Z)
    assert len(res.levels) == 1 and res.levels[0].err_s is None


def test_levels_refine_and_record():
    res = ggr_run(small_config(levels=2))
    assert [lvl.K for lvl in res.levels] == [8, 16, 32]
    assert [m.K for m in res.meshes] == [8, 16, 32]
    for lvl, Z, mesh in zip(res.levels, res.plans, res.meshes):
        assert Z.shape == (2, mesh.K, mesh.K)
        assert lvl.feas <= 1e-8 and lvl.err_e is not None
        assert lvl.beta == beta_for(lvl.K)
    assert res.levels[0].winner is not None and res.levels[1].winner is None
    assert res.levels[1].err_s is not None
    # energies of refined levels are evaluated with the refined data
    p = assemble(res.meshes[-1], builtin("system1"), beta_for(32))
    assert res.levels[-1].energy == pytest.approx(energy(res.Z, p))


def test_checkpoint_and_resume(tmp_path):
    cfg = small_config(levels=2)
    full = ggr_run(cfg, checkpoint=tmp_path / "a")
    for k in range(3):
        assert (tmp_path / "a" / f"level_{k}" / "report.json").exists()
    mesh, Z, result, report = load_level(tmp_path / "a", 1)
    assert np.array_equal(Z, full.plans[1]) and mesh.K == 16
    assert result.to_dict(timings=False) == full.levels[1].to_dict(timings=False)
    # drop the last level and resume: the missing level is recomputed identically
    (tmp_path / "a" / "level_2" / "report.json").unlink()
    resumed = ggr_run(cfg, checkpoint=tmp_path / "a", resume=True)
    assert np.array_equal(resumed.Z, full.Z)
    assert [lvl.to_dict(timings=False) for lvl in resumed.levels] == \
        [lvl.to_dict(timings=False) for lvl in full.levels]


def test_level_report_is_json_serialisable(tmp_path):
    res = ggr_run(small_config(levels=1), checkpoint=tmp_path)
    payload = json.loads((tmp_path / "level_1" / "report.json").read_text())
    assert payload["level"]["K"] == 16 and "time" not in payload["level"]
    assert payload["trace"]["sweeps"] == res.reports[1].sweeps


def test_failure_carries_partial_result(monkeypatch):
    import mmot_ggr.ggr as ggr_mod

    def broken(*args, **kwargs):
        raise RuntimeError("synthetic")

    monkeypatch.setattr(ggr_mod, "pbcd_solve", broken)
    with pytest.raises(GgrError) as info:
        ggr_run(small_config(levels=2))
    assert len(info.value.partial.levels) == 1


def test_two_dimensional_pipeline_runs():
    cfg = GgrConfig(spec=builtin("system7"), K0=12, levels=1,
                    multistart=MultistartConfig(n_starts=2, seed=0), pbcd=PbcdConfig(max_sweeps=200))
    res = ggr_run(cfg)
    assert res.levels[1].K == 4 * res.levels[0].K
    assert res.levels[0].err_e is None
    assert res.levels[1].feas <= 1e-8
