import numpy as np
import pytest

from slcurv.identities import SUITES, run_all, run_suite


@pytest.mark.parametrize("name", sorted(SUITES))
def test_suite_passes(name):
    res = run_suite(name, 11, samples=500)
    assert res.ok, (name, res.counterexample)
    assert res.per_n


@pytest.mark.parametrize("name", sorted(SUITES))
def test_fault_is_caught(name):
    res = run_suite(name, 11, samples=200, fault=1e-3)
    assert not res.ok
    n, values, err = res.counterexample
    assert np.all(np.isfinite(values)) and err > 0


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suite("nope")


def test_seed_changes_samples_not_verdicts():
    a = run_all(1, samples=300)
    b = run_all(2, samples=300)
    assert [r.ok for r in a] == [r.ok for r in b]
    assert [r.max_error for r in a] != [r.max_error for r in b]
    c = run_all(1, samples=300)
    assert [r.max_error for r in a] == [r.max_error for r in c]
