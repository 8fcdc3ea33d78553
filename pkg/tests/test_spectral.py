import numpy as np
import pytest

from conftest import random_graph
from modgae.communities import Partition
from modgae.spectral import (
    ContractError, check_prop1, check_prop2, check_prop3, complete_graph, eigendecompose, regular_components,
    ring_lattice, run_suite, spectrum_union_residual,
)


def test_eigendecompose_matches_lapack():
    m = np.random.default_rng(0).normal(size=(30, 30))
    m = m + m.T
    eig = eigendecompose(m)
    np.testing.assert_allclose(np.sort(eig.eigenvalues), np.linalg.eigvalsh(m), atol=1e-10)
    assert eig.reconstruction_error(m) < 1e-10 and eig.orthogonality_error() < 1e-12
    assert np.all(np.diff(eig.eigenvalues) <= 0)


def test_eigendecompose_contract():
    with pytest.raises(ContractError):
        eigendecompose(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ContractError):
        eigendecompose(np.ones((2, 3)))
    eig = eigendecompose(np.diag([3.0, -1.0, 2.0]))
    assert eig.eigenvalues.tolist() == [3.0, 2.0, -1.0]


def test_prop1_examples():
    assert check_prop1([0, 0, 0, 1, 1]).passed
    rep = check_prop1(np.arange(6))
    assert rep.passed and rep.worst < 1e-12


def test_regular_families():
    assert ring_lattice(8, 2).m == 8
    assert complete_graph(5).m == 10
    g = regular_components(3, 6, 2)
    assert np.all(g.degrees() == 3) and g.n == 12
    with pytest.raises(ValueError):
        regular_components(3, 5, 1)


def test_prop2_literal_form_only_at_lambda_one():
    rep = check_prop2(2, 6, 2, 0.0)
    assert rep.passed and rep.info["literal_residual"] > 0.1
    rep = check_prop2(2, 6, 2, 1.0)
    assert rep.passed and rep.info["literal_residual"] < 1e-9


def test_prop3_and_infeasible():
    p = Partition.from_labels(np.repeat(np.arange(3), [6, 8, 10]))
    assert check_prop3(p, 2, seed=0).passed
    assert check_prop3(p, 3, seed=0).passed
    with pytest.raises(ValueError):
        check_prop3(Partition.from_labels([0] * 5), 1)


def test_spectrum_union():
    g = random_graph(20, 0.08, 2)
    assert spectrum_union_residual(g) < 1e-10


def test_suite_passes():
    reports = run_suite("all", seed=0)
    assert len(reports) > 10 and all(r.passed for r in reports)
    assert reports[0].line().startswith("PASS\t")
    with pytest.raises(ValueError):
        run_suite("nope")
