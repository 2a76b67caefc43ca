import numpy as np
import pytest

from sobtop import DECSphere3, hopf_linking, hopf_whitehead
from sobtop.builtins import hopf_fibration
from sobtop.errors import NonClosedForm
from sobtop.fields import SampledSphereMap
from sobtop.geometry import TriangulatedSphere
from sobtop.hopf import dec_sphere, whitney_pairing_matrix


def test_dec_structure():
    dec = dec_sphere(2)
    assert abs(dec.d1 @ dec.d0).max() == 0.0
    assert abs(dec.d2 @ dec.d1).max() == 0.0
    assert np.all(dec.star1 > 0) and np.all(dec.star2 > 0)
    V = len(dec.sphere.vertices)
    E, F, T = len(dec.edges), len(dec.faces), len(dec.sphere.simplices)
    assert V - E + F - T == 0  # Euler characteristic of S^3


def test_whitney_matrix_is_universal():
    K = whitney_pairing_matrix()
    assert K.shape == (6, 4)
    # wedge of an edge with a face not containing complementary vertices vanishes
    assert abs(K).max() <= 1.0 / 12.0 + 1e-15


def test_hopf_whitehead_fibration():
    v3 = hopf_fibration(3)
    assert abs(hopf_whitehead(v3) - 1.0) < 0.05
    v4 = hopf_fibration(4)
    assert abs(hopf_whitehead(v4) - 1.0) < 0.15


def test_hopf_whitehead_constant():
    sph = TriangulatedSphere(3, 3)
    const = SampledSphereMap(sphere=sph, values=np.tile([0.0, 0.0, 1.0], (len(sph.vertices), 1)))
    assert abs(hopf_whitehead(const)) < 1e-8
    assert hopf_linking(const) == 0


def test_hopf_linking_fibration_exact():
    for r in (3, 4):
        assert hopf_linking(hopf_fibration(r)) == 1


def test_hopf_reverse_orientation():
    v = hopf_fibration(4, reverse=True)
    assert hopf_linking(v) == -1
    assert abs(hopf_whitehead(v) + 1.0) < 0.15


def test_hopf_target_squared_gives_four():
    # postcomposing with a degree-2 self-map of the target multiplies by 4
    v = hopf_fibration(4, squared=True)
    lk = hopf_linking(v)
    wh = hopf_whitehead(v)
    assert lk == 4
    assert abs(wh - lk) <= 0.2


def test_whitehead_linking_agreement_corpus():
    for kwargs in ({}, {"reverse": True}):
        v = hopf_fibration(4, **kwargs)
        assert abs(hopf_whitehead(v) - hopf_linking(v)) <= 0.2


def test_linking_value_independence():
    v = hopf_fibration(3)
    q1 = np.array([0.1, 0.2, 0.97])
    q2 = np.array([-0.3, 0.1, -0.94])
    assert hopf_linking(v, q1 / np.linalg.norm(q1), q2 / np.linalg.norm(q2)) == 1


def test_non_closed_form_rejected():
    sph = TriangulatedSphere(3, 1)
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(len(sph.vertices), 3))
    vals /= np.linalg.norm(vals, axis=1, keepdims=True)
    v = SampledSphereMap(sphere=sph, values=vals)
    with pytest.raises(NonClosedForm):
        hopf_whitehead(v)


def test_dec_reuse_is_cached():
    assert dec_sphere(2) is dec_sphere(2)
