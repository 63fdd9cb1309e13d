"""Validation behaviour of the observational sample container."""

import numpy as np
import pytest

from didmed import DataError, EmptyGroupError, ObservationalDataset

from conftest import random_dataset


def make_dataset(**overrides):
    base = dict(
        g=np.array([1, 0, 1, 0]),
        m=np.array([0.2, -0.1, 0.4, 0.0]),
        y0=np.array([1.0, 2.0, 3.0, 4.0]),
        y1=np.array([2.0, 2.5, 3.5, 4.0]),
        covariates=np.array([[0.1], [0.2], [0.3], [0.4]]),
        covariate_names=("X1",),
        mediator_kind="continuous",
    )
    base.update(overrides)
    return ObservationalDataset(**base)


def test_valid_dataset_round_trip():
    data = make_dataset()
    assert data.n == 4
    np.testing.assert_allclose(data.dy, np.array([1.0, 0.5, 0.5, 0.0]))
    cols = data.columns()
    assert set(cols) == {"G", "M", "X1"}
    np.testing.assert_array_equal(cols["G"], np.array([1.0, 0.0, 1.0, 0.0]))


def test_arrays_are_frozen():
    data = make_dataset()
    with pytest.raises(ValueError):
        data.m[0] = 99.0
    with pytest.raises(ValueError):
        data.covariates[0, 0] = 99.0


def test_length_mismatch_rejected():
    with pytest.raises(DataError, match="same length"):
        make_dataset(m=np.array([0.1, 0.2]))


def test_covariate_width_mismatch_rejected():
    with pytest.raises(DataError, match="covariate_names"):
        make_dataset(covariate_names=("X1", "X2"))


def test_reserved_covariate_names_rejected():
    for name in ("G", "M", "1"):
        with pytest.raises(DataError, match="reserved"):
            make_dataset(covariate_names=(name,))


def test_duplicate_covariate_names_rejected():
    with pytest.raises(DataError, match="distinct"):
        make_dataset(
            covariates=np.column_stack([np.arange(4.0), np.arange(4.0)]),
            covariate_names=("X1", "X1"),
        )


def test_unknown_mediator_kind_rejected():
    with pytest.raises(DataError, match="mediator_kind"):
        make_dataset(mediator_kind="ordinal")


def test_non_binary_treatment_rejected():
    with pytest.raises(DataError, match="0/1"):
        make_dataset(g=np.array([1, 0, 2, 0]))


def test_non_finite_values_rejected():
    with pytest.raises(DataError, match="mediator"):
        make_dataset(m=np.array([0.2, np.nan, 0.4, 0.0]))
    with pytest.raises(DataError, match="post-period"):
        make_dataset(y1=np.array([2.0, np.inf, 3.5, 4.0]))
    with pytest.raises(DataError, match="covariates"):
        make_dataset(covariates=np.array([[0.1], [np.nan], [0.3], [0.4]]))


def test_empty_groups_rejected():
    with pytest.raises(EmptyGroupError, match="control"):
        make_dataset(g=np.array([1, 1, 1, 1]))
    with pytest.raises(EmptyGroupError, match="treated"):
        make_dataset(g=np.array([0, 0, 0, 0]))


def test_discrete_levels_must_be_contiguous_from_zero():
    ok = make_dataset(m=np.array([0.0, 1.0, 2.0, 1.0]), mediator_kind="discrete")
    assert ok.n_mediator_levels == 3
    with pytest.raises(DataError, match="contiguous"):
        make_dataset(m=np.array([1.0, 2.0, 3.0, 2.0]), mediator_kind="discrete")
    with pytest.raises(DataError, match="contiguous"):
        make_dataset(m=np.array([0.0, 2.0, 0.0, 2.0]), mediator_kind="discrete")
    with pytest.raises(DataError, match="integers"):
        make_dataset(m=np.array([0.0, 0.5, 1.0, 0.5]), mediator_kind="discrete")


def test_declared_level_count_checked_against_observed():
    with pytest.raises(DataError, match="declared 4"):
        make_dataset(m=np.array([0.0, 1.0, 2.0, 1.0]), mediator_kind="discrete",
                     n_mediator_levels=4)
    ok = make_dataset(m=np.array([0.0, 1.0, 2.0, 1.0]), mediator_kind="discrete",
                      n_mediator_levels=3)
    assert ok.n_mediator_levels == 3


def test_level_count_rejected_for_continuous_mediator():
    with pytest.raises(DataError, match="only applies"):
        make_dataset(n_mediator_levels=3)


def test_random_dataset_helper_is_well_formed(rng):
    for kind in ("continuous", "discrete"):
        data = random_dataset(rng, n=150, kind=kind)
        assert data.n == 150
        assert data.mediator_kind == kind
        assert data.g.min() == 0 and data.g.max() == 1
