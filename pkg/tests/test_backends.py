import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipslab import _backend
from ipslab.engine import RngStream, evolve_block
from ipslab.instances import toy_model

pytestmark = pytest.mark.skipif("cython" not in _backend.BACKENDS, reason="compiled kernel not built")

MODELS = {
    "sep1": toy_model(-1, 1),
    "sep2": toy_model(-1, 2, L=5),
    "sip": toy_model(1, 1.5),
    "rtp": toy_model(0, kappa=0.5, lam=1.0),
    "sip2d": toy_model(1, 0.7, d=2, L=4, layers=1),
}


def run(model, rep_ptr, pos0, times, seed, backend):
    bitgen = RngStream(seed).bit_generator()
    out, stats = evolve_block(model, rep_ptr, pos0, times, bitgen, backend=backend)
    return out, stats, bitgen.state["state"]


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(MODELS)), st.data(), st.integers(0, 2**63))
def test_backends_bit_identical(name, data, seed):
    model = MODELS[name]
    n_rep = data.draw(st.integers(1, 6))
    cap = int(model.alpha) if model.kind == -1 else 4
    pos, ptr = [], [0]
    for _ in range(n_rep):
        occ = data.draw(st.lists(st.integers(0, cap), min_size=model.num_sites, max_size=model.num_sites))
        pos += [v for v, k in enumerate(occ) for _ in range(k)]
        ptr.append(len(pos))
    times = sorted(data.draw(st.lists(st.floats(0, 3), min_size=1, max_size=3)))
    a = run(model, ptr, pos, times, seed, "python")
    b = run(model, ptr, pos, times, seed, "cython")
    assert np.array_equal(a[0], b[0])
    assert a[1] == b[1]
    # both consumed exactly the same random numbers
    assert a[2] == b[2]


def test_absorbed_count_agrees():
    m = toy_model(-1, 1, L=3)
    full = list(range(m.num_sites))
    for name in ("python", "cython"):
        _, (events, absorbed), _ = run(m, [0, len(full), 2 * len(full)], full + full, [1.0], 1, name)
        assert events == 0 and absorbed == 2


def test_unknown_backend():
    with pytest.raises(ValueError, match="unavailable"):
        _backend.get_evolve("fortran")


def test_default_backend_is_compiled():
    assert _backend.BACKEND in ("cython", "python")
    if not __import__("os").environ.get("IPSLAB_PURE_PYTHON"):
        assert _backend.BACKEND == "cython"
