import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmot_ggr.grinit import SUPPORT_THRESHOLD, gr_init
from mmot_ggr.mesh import Mesh, RefinementMap, refine


def _lift_by_loops(Zc, rmap, r, threshold):
    n = rmap.n_fine
    out = np.zeros((Zc.shape[0], n, n))
    for i in range(Zc.shape[0]):
        for j, cj in enumerate(rmap.children):
            for k, ck in enumerate(rmap.children):
                if Zc[i, j, k] > threshold:
                    for a in cj:
                        for b in ck:
                            out[i, a, b] = r * Zc[i, j, k]
    return out


def _sparse_plan(rng, blocks, K):
    Z = rng.uniform(0, 1, (blocks, K, K)) * (rng.uniform(size=(blocks, K, K)) < 0.4)
    Z[rng.uniform(size=Z.shape) < 0.1] = 0.5 * SUPPORT_THRESHOLD    # below the lifting threshold
    return Z


@pytest.mark.parametrize("dim,factor", [(1, 4), (2, 16)])
def test_lift_matches_loops(rng, dim, factor):
    K = 6
    lower = np.column_stack([np.arange(K, dtype=float)] + [np.zeros(K)] * (dim - 1))
    mesh = Mesh(lower, lower + 1.0)
    _, rmap = refine(mesh)
    for r in (1.0, 0.5, 2.0):
        Zc = _sparse_plan(rng, 2, K)
        Zf = gr_init(Zc, rmap, r)
        assert np.array_equal(Zf, _lift_by_loops(Zc, rmap, r, SUPPORT_THRESHOLD))
        lifted = Zc > SUPPORT_THRESHOLD
        # every supported coarse entry becomes exactly factor fine entries
        assert np.count_nonzero(Zf) == factor * np.count_nonzero(lifted)
        assert np.isclose(Zf.sum(), factor * r * Zc[lifted].sum())


def test_threshold_and_validation(rng):
    _, rmap = refine(Mesh(np.arange(3.0)[:, None], np.arange(1.0, 4.0)[:, None]))
    Zc = np.full((2, 3, 3), 1e-3)
    assert np.count_nonzero(gr_init(Zc, rmap, threshold=1e-2)) == 0
    with pytest.raises(ValueError):
        gr_init(Zc, rmap, r=0.0)
    with pytest.raises(ValueError):
        gr_init(np.zeros((2, 4, 4)), rmap)


@settings(max_examples=40, deadline=None)
@given(K=st.integers(1, 9), blocks=st.integers(1, 4), seed=st.integers(0, 2 ** 32 - 1),
       split=st.lists(st.integers(1, 4), min_size=9, max_size=9))
def test_lift_with_irregular_children(K, blocks, seed, split):
    rng = np.random.default_rng(seed)
    sizes = split[:K]
    bounds = np.cumsum([0] + sizes)
    rmap = RefinementMap(tuple(tuple(range(bounds[j], bounds[j + 1])) for j in range(K)), int(bounds[-1]))
    Zc = _sparse_plan(rng, blocks, K)
    r = float(rng.uniform(0.1, 3.0))
    assert np.array_equal(gr_init(Zc, rmap, r), _lift_by_loops(Zc, rmap, r, SUPPORT_THRESHOLD))
